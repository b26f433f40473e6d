//! Problem primitives: dimensions, context distributions, adversaries,
//! losses, the comparator policy and regret accounting.
//!
//! The setting: at each round t the environment draws a context X_t from a
//! fixed distribution with ‖X_t‖ ≤ σ, the adversary fixes loss vectors
//! θ_{t,a} with ‖θ_{t,a}‖ ≤ R for each arm a, and playing arm a incurs the
//! linear loss ⟨X_t, θ_{t,a}⟩ ∈ [−1, 1] (guaranteed by σ·R ≤ 1). Regret is
//! measured against the best fixed policy π*(x) = argmin_a ⟨x, Σ_t θ_{t,a}⟩.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension must be ≥ 1, got d = {0}")]
    BadDimension(usize),
    #[error("arm count must be in 2..=16, got K = {0}")]
    BadArmCount(usize),
    #[error("horizon must be ≥ 1")]
    BadHorizon,
    #[error("need σ > 0 and R > 0 with σ·R ≤ 1, got σ = {sigma}, R = {r}")]
    BadScaleBounds { sigma: f64, r: f64 },
    #[error("context distribution support exceeds the σ-ball: max ‖x‖ = {max_norm} > σ = {sigma}")]
    ContextOutOfBall { max_norm: f64, sigma: f64 },
    #[error("context distribution shape mismatch: expected dimension {expected}, got {got}")]
    ContextShape { expected: usize, got: usize },
    #[error("discrete context probabilities must be positive and sum to 1 (sum = {0})")]
    BadAtomWeights(f64),
    #[error("context second moment is (numerically) singular: λ_min = {0:.3e}")]
    DegenerateContexts(f64),
    #[error("adversary row {arm} has ‖θ‖ = {norm} > R = {r}")]
    ThetaTooLarge { arm: usize, norm: f64, r: f64 },
    #[error("adversary shape mismatch: expected {k} rows of dimension {d}")]
    ThetaShape { k: usize, d: usize },
    #[error("loss range [{lo:.4}, {hi:.4}] for arm {arm} leaves [{min:.1}, 1]")]
    LossOutOfRange { arm: usize, lo: f64, hi: f64, min: f64 },
    #[error("point is not on the simplex: {0}")]
    NotOnSimplex(String),
}

/// Problem dimensions and scale bounds shared by every module.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProblemDims {
    /// Context dimension d.
    pub d: usize,
    /// Number of arms K.
    pub k: usize,
    /// Horizon T.
    pub horizon: usize,
    /// Context norm bound σ (‖X‖ ≤ σ).
    pub sigma: f64,
    /// Loss-vector norm bound R (‖θ_{t,a}‖ ≤ R).
    pub r: f64,
}

impl ProblemDims {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.d == 0 {
            return Err(ProblemError::BadDimension(self.d));
        }
        if self.k < 2 || self.k > 16 {
            return Err(ProblemError::BadArmCount(self.k));
        }
        if self.horizon == 0 {
            return Err(ProblemError::BadHorizon);
        }
        if !(self.sigma > 0.0 && self.r > 0.0 && self.sigma * self.r <= 1.0 + 1e-12) {
            return Err(ProblemError::BadScaleBounds { sigma: self.sigma, r: self.r });
        }
        Ok(())
    }
}

/// A point on the probability simplex Δ^{K−1} (non-negative, sums to one).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Wraps coordinates after checking non-negativity and Σq = 1 (tolerance
    /// 1e-12 per coordinate).
    pub fn new(w: Vec<f64>) -> Result<Self, ProblemError> {
        if w.is_empty() {
            return Err(ProblemError::NotOnSimplex("empty".into()));
        }
        let mut sum = 0.0;
        for (i, &v) in w.iter().enumerate() {
            if !v.is_finite() || v < -1e-12 {
                return Err(ProblemError::NotOnSimplex(format!("coordinate {i} = {v}")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-12 * w.len() as f64 {
            return Err(ProblemError::NotOnSimplex(format!("sum = {sum}")));
        }
        Ok(SimplexPoint(w))
    }

    pub fn uniform(k: usize) -> Self {
        SimplexPoint(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, a: usize) -> f64 {
        self.0[a]
    }

    /// Draws an arm index from this distribution.
    pub fn draw_arm(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &w) in self.0.iter().enumerate() {
            acc += w;
            if u < acc {
                return a;
            }
        }
        self.0.len() - 1
    }
}

/// One loss vector per arm: row a is θ_{t,a} ∈ ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    pub rows: Vec<DVector<f64>>,
}

impl ThetaMatrix {
    pub fn zeros(k: usize, d: usize) -> Self {
        ThetaMatrix { rows: vec![DVector::zeros(d); k] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        ThetaMatrix { rows: rows.into_iter().map(DVector::from_vec).collect() }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// ⟨x, θ_a⟩ for every arm.
    pub fn losses(&self, x: &DVector<f64>) -> Vec<f64> {
        self.rows.iter().map(|row| row.dot(x)).collect()
    }

    pub fn add_assign(&mut self, other: &ThetaMatrix) {
        for (mine, theirs) in self.rows.iter_mut().zip(&other.rows) {
            *mine += theirs;
        }
    }
}

/// Context distribution over the σ-ball in ℝ^d.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextDist {
    /// N(0, diag(cov_diag)) resampled until ‖x‖ ≤ σ.
    TruncatedGaussian { cov_diag: Vec<f64> },
    /// Uniform on the ball of radius σ.
    UniformBall,
    /// Independent uniforms on [lo_i, hi_i] per coordinate (lo_i = hi_i pins
    /// a coordinate to a constant).
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Finitely supported distribution given by (probability, point) atoms.
    Discrete { atoms: Vec<(f64, Vec<f64>)> },
}

impl ContextDist {
    pub fn validate(&self, dims: &ProblemDims) -> Result<(), ProblemError> {
        let d = dims.d;
        let check_dim = |got: usize| {
            if got == d { Ok(()) } else { Err(ProblemError::ContextShape { expected: d, got }) }
        };
        match self {
            ContextDist::TruncatedGaussian { cov_diag } => check_dim(cov_diag.len()),
            ContextDist::UniformBall => Ok(()),
            ContextDist::UniformBox { lo, hi } => {
                check_dim(lo.len())?;
                check_dim(hi.len())?;
                // The support's farthest corner must stay inside the σ-ball.
                let max_norm: f64 = lo
                    .iter()
                    .zip(hi)
                    .map(|(&l, &h)| l.abs().max(h.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if max_norm > dims.sigma + 1e-12 {
                    return Err(ProblemError::ContextOutOfBall { max_norm, sigma: dims.sigma });
                }
                Ok(())
            }
            ContextDist::Discrete { atoms } => {
                let mut total = 0.0;
                for (p, x) in atoms {
                    check_dim(x.len())?;
                    if *p <= 0.0 {
                        return Err(ProblemError::BadAtomWeights(*p));
                    }
                    total += p;
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > dims.sigma + 1e-12 {
                        return Err(ProblemError::ContextOutOfBall { max_norm: norm, sigma: dims.sigma });
                    }
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(ProblemError::BadAtomWeights(total));
                }
                Ok(())
            }
        }
    }

    pub fn draw(&self, dims: &ProblemDims, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            ContextDist::TruncatedGaussian { cov_diag } => loop {
                let x = DVector::from_fn(dims.d, |i, _| {
                    gaussian(rng) * cov_diag[i].sqrt()
                });
                if x.norm() <= dims.sigma {
                    return x;
                }
            },
            ContextDist::UniformBall => {
                // Direction from an isotropic Gaussian, radius via the d-th
                // root transform.
                let g = DVector::from_fn(dims.d, |_, _| gaussian(rng));
                let norm = g.norm().max(1e-300);
                let u: f64 = rng.random();
                let radius = dims.sigma * u.powf(1.0 / dims.d as f64);
                g * (radius / norm)
            }
            ContextDist::UniformBox { lo, hi } => DVector::from_fn(dims.d, |i, _| {
                let u: f64 = rng.random();
                lo[i] + (hi[i] - lo[i]) * u
            }),
            ContextDist::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, x) in atoms {
                    acc += p;
                    if u < acc {
                        return DVector::from_vec(x.clone());
                    }
                }
                DVector::from_vec(atoms.last().expect("validated non-empty").1.clone())
            }
        }
    }

    /// The exact second moment E[XXᵀ] where closed-form, or a 10⁵-draw
    /// estimate for the truncated Gaussian (validation only).
    pub fn second_moment(&self, dims: &ProblemDims, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let d = dims.d;
        match self {
            ContextDist::UniformBall => {
                DMatrix::identity(d, d) * (dims.sigma * dims.sigma / (d as f64 + 2.0))
            }
            ContextDist::UniformBox { lo, hi } => {
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = if i == j {
                            // E[u²] on [l,h] = (l² + lh + h²)/3
                            (lo[i] * lo[i] + lo[i] * hi[i] + hi[i] * hi[i]) / 3.0
                        } else {
                            0.25 * (lo[i] + hi[i]) * (lo[j] + hi[j])
                        };
                    }
                }
                m
            }
            ContextDist::Discrete { atoms } => {
                let mut m = DMatrix::zeros(d, d);
                for (p, x) in atoms {
                    let v = DVector::from_vec(x.clone());
                    m.syger(*p, &v, &v, 1.0);
                }
                fill_upper_from_lower(&mut m);
                m
            }
            ContextDist::TruncatedGaussian { .. } => {
                let mut m = DMatrix::zeros(d, d);
                let n = 100_000;
                for _ in 0..n {
                    let x = self.draw(dims, rng);
                    m.syger(1.0 / n as f64, &x, &x, 1.0);
                }
                fill_upper_from_lower(&mut m);
                m
            }
        }
    }

    /// Extremes of ⟨x, θ⟩ over the support (conservative for the truncated
    /// Gaussian, exact for the others).
    pub fn loss_range(&self, dims: &ProblemDims, theta: &DVector<f64>) -> (f64, f64) {
        match self {
            ContextDist::UniformBall | ContextDist::TruncatedGaussian { .. } => {
                let m = dims.sigma * theta.norm();
                (-m, m)
            }
            ContextDist::UniformBox { lo, hi } => {
                let mut min = 0.0;
                let mut max = 0.0;
                for i in 0..dims.d {
                    let (a, b) = (lo[i] * theta[i], hi[i] * theta[i]);
                    min += a.min(b);
                    max += a.max(b);
                }
                (min, max)
            }
            ContextDist::Discrete { atoms } => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for (_, x) in atoms {
                    let v: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
                    min = min.min(v);
                    max = max.max(v);
                }
                (min, max)
            }
        }
    }
}

fn fill_upper_from_lower(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Standard normal via Box-Muller (single value; the pair's partner is
/// discarded to keep the per-call stream length fixed).
pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adversary: the rule producing θ_{t,a} each round.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Adversary {
    /// θ_t ≡ theta for all rounds.
    Fixed { theta: Vec<Vec<f64>> },
    /// Deterministic oscillation θ_t = (1−s_t)·base + s_t·alt with
    /// s_t = (1 − cos(rate·t))/2 ∈ [0, 1].
    Drifting { base: Vec<Vec<f64>>, alt: Vec<Vec<f64>>, rate: f64 },
    /// The arm with the highest play count so far (ties → lowest index)
    /// receives the `punished` row; all others their base row.
    Adaptive { base: Vec<Vec<f64>>, punished: Vec<f64> },
}

impl Adversary {
    fn theta_rows(&self) -> Vec<&Vec<f64>> {
        match self {
            Adversary::Fixed { theta } => theta.iter().collect(),
            Adversary::Drifting { base, alt, .. } => base.iter().chain(alt.iter()).collect(),
            Adversary::Adaptive { base, punished } => {
                base.iter().chain(std::iter::once(punished)).collect()
            }
        }
    }

    pub fn validate(&self, dims: &ProblemDims) -> Result<(), ProblemError> {
        let shape_err = ProblemError::ThetaShape { k: dims.k, d: dims.d };
        let k_rows = match self {
            Adversary::Fixed { theta } => theta.len(),
            Adversary::Drifting { base, alt, .. } => {
                if base.len() != alt.len() {
                    return Err(shape_err);
                }
                base.len()
            }
            Adversary::Adaptive { base, .. } => base.len(),
        };
        if k_rows != dims.k {
            return Err(shape_err);
        }
        for (arm, row) in self.theta_rows().into_iter().enumerate() {
            if row.len() != dims.d {
                return Err(ProblemError::ThetaShape { k: dims.k, d: dims.d });
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > dims.r + 1e-9 {
                return Err(ProblemError::ThetaTooLarge { arm: arm % dims.k, norm, r: dims.r });
            }
        }
        Ok(())
    }
}

/// Environment specification: context law, adversary, and whether losses are
/// certified non-negative (required by the first-order and resampling modes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub context: ContextDist,
    pub adversary: Adversary,
    #[serde(default)]
    pub nonnegative: bool,
}

/// A live environment: the spec plus the adaptive adversary's play counts.
#[derive(Debug, Clone)]
pub struct Environment {
    pub dims: ProblemDims,
    pub spec: EnvironmentSpec,
    play_counts: Vec<u64>,
}

impl Environment {
    pub fn new(dims: ProblemDims, spec: EnvironmentSpec) -> Result<Self, ProblemError> {
        dims.validate()?;
        spec.context.validate(&dims)?;
        spec.adversary.validate(&dims)?;
        let env = Environment { play_counts: vec![0; dims.k], dims, spec };
        env.validate_loss_ranges()?;
        Ok(env)
    }

    /// Every θ row the adversary can emit must keep ⟨x, θ⟩ inside [−1, 1]
    /// over the context support — inside [0, 1] when the environment is
    /// declared non-negative.
    fn validate_loss_ranges(&self) -> Result<(), ProblemError> {
        let min_allowed = if self.spec.nonnegative { 0.0 } else { -1.0 };
        for (arm, row) in self.spec.adversary.theta_rows().into_iter().enumerate() {
            let theta = DVector::from_vec(row.clone());
            let (lo, hi) = self.spec.context.loss_range(&self.dims, &theta);
            if lo < min_allowed - 1e-9 || hi > 1.0 + 1e-9 {
                return Err(ProblemError::LossOutOfRange {
                    arm: arm % self.dims.k,
                    lo,
                    hi,
                    min: min_allowed,
                });
            }
        }
        Ok(())
    }

    /// λ_min of E[XXᵀ] must be strictly positive.
    pub fn validate_context_moment(&self, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>, ProblemError> {
        let m = self.spec.context.second_moment(&self.dims, rng);
        let eig = m.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= 1e-10 {
            return Err(ProblemError::DegenerateContexts(lambda_min));
        }
        Ok(m)
    }

    pub fn draw_context(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.spec.context.draw(&self.dims, rng)
    }

    /// The loss vectors in force at round t (1-based), given the play history.
    pub fn theta_now(&self, t: usize) -> ThetaMatrix {
        match &self.spec.adversary {
            Adversary::Fixed { theta } => ThetaMatrix::from_rows(theta.clone()),
            Adversary::Drifting { base, alt, rate } => {
                let s = 0.5 * (1.0 - (rate * t as f64).cos());
                let rows = base
                    .iter()
                    .zip(alt)
                    .map(|(b, a)| {
                        b.iter().zip(a).map(|(&bv, &av)| (1.0 - s) * bv + s * av).collect()
                    })
                    .collect();
                ThetaMatrix::from_rows(rows)
            }
            Adversary::Adaptive { base, punished } => {
                let target = self
                    .play_counts
                    .iter()
                    .enumerate()
                    .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let mut rows = base.clone();
                rows[target] = punished.clone();
                ThetaMatrix::from_rows(rows)
            }
        }
    }

    pub fn record_play(&mut self, arm: usize) {
        self.play_counts[arm] += 1;
    }
}

/// Loss of arm `a` for context `x` under `theta`, asserted into [−1, 1].
pub fn evaluate_loss(x: &DVector<f64>, theta: &ThetaMatrix, a: usize) -> f64 {
    let loss = theta.rows[a].dot(x);
    debug_assert!(loss.abs() <= 1.0 + 1e-9, "loss {loss} outside [-1, 1]");
    loss
}

/// Best fixed policy against accumulated loss vectors: π*(x) minimises
/// ⟨x, Σ_t θ_{t,a}⟩, ties broken toward the lowest arm index.
pub fn comparator_arm(theta_sum: &ThetaMatrix, x: &DVector<f64>) -> usize {
    let scores = theta_sum.losses(x);
    let mut best = 0;
    for (a, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = a;
        }
    }
    best
}

/// Per-round diagnostics emitted by learners alongside the chosen arm.
#[derive(Debug, Clone, Default)]
pub struct RoundDiagnostics {
    pub eta: f64,
    pub rejections: u32,
    pub forced_accept: bool,
    pub mgr_capped: bool,
    pub mahalanobis: f64,
    pub sandwich: Option<(f64, f64)>,
    pub variance_proxy: f64,
    pub mgr_pairs: usize,
}

/// One completed round as recorded by the harness.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub t: usize,
    pub action: usize,
    /// ℓ_t(x_t, a) for every arm (the learner saw only its own).
    pub all_losses: Vec<f64>,
    pub context: DVector<f64>,
    pub diagnostics: RoundDiagnostics,
}

/// Full trace of one replication plus the accumulated loss vectors needed to
/// evaluate the comparator post hoc.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub dims: ProblemDims,
    pub records: Vec<RoundRecord>,
    pub theta_sum: ThetaMatrix,
}

/// A trace finalized against the comparator policy.
#[derive(Debug, Clone)]
pub struct FinalizedTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    /// 1-based in the CSV.
    pub action: usize,
    pub loss: f64,
    pub comparator_loss: f64,
    pub cum_loss: f64,
    pub cum_regret: f64,
    pub eta: f64,
    pub rejections: u32,
    pub flag_forced_accept: bool,
    pub flag_mgr_capped: bool,
}

impl RegretTrace {
    pub fn new(dims: ProblemDims) -> Self {
        RegretTrace { records: Vec::with_capacity(dims.horizon), theta_sum: ThetaMatrix::zeros(dims.k, dims.d), dims }
    }

    pub fn push(&mut self, record: RoundRecord, theta_t: &ThetaMatrix) {
        self.theta_sum.add_assign(theta_t);
        self.records.push(record);
    }

    /// Resolves the comparator and the cumulative columns.
    pub fn finalize(&self) -> FinalizedTrace {
        let mut rows = Vec::with_capacity(self.records.len());
        let mut cum_loss = 0.0;
        let mut cum_comp = 0.0;
        for rec in &self.records {
            let comp_arm = comparator_arm(&self.theta_sum, &rec.context);
            let loss = rec.all_losses[rec.action];
            let comparator_loss = rec.all_losses[comp_arm];
            cum_loss += loss;
            cum_comp += comparator_loss;
            rows.push(TraceRow {
                t: rec.t,
                action: rec.action + 1,
                loss,
                comparator_loss,
                cum_loss,
                cum_regret: cum_loss - cum_comp,
                eta: rec.diagnostics.eta,
                rejections: rec.diagnostics.rejections,
                flag_forced_accept: rec.diagnostics.forced_accept,
                flag_mgr_capped: rec.diagnostics.mgr_capped,
            });
        }
        FinalizedTrace { rows }
    }
}

impl FinalizedTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }

    pub fn regret_at(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.rows.len(), "checkpoint {t} outside trace");
        self.rows[t - 1].cum_regret
    }
}

/// Deterministic RNG streams: every consumer derives its own ChaCha8 stream
/// from (master seed, replication, round, purpose), so replications can run
/// on any number of workers without changing a single draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Context,
    SigmaEstimate,
    SigmaTruncatedEstimate,
    PlayDraw,
    ArmDraw,
    MgrPairs,
    Ghost,
    Validation,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Context => 1,
            StreamPurpose::SigmaEstimate => 2,
            StreamPurpose::SigmaTruncatedEstimate => 3,
            StreamPurpose::PlayDraw => 4,
            StreamPurpose::ArmDraw => 5,
            StreamPurpose::MgrPairs => 6,
            StreamPurpose::Ghost => 7,
            StreamPurpose::Validation => 8,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by (master_seed, replication, round, purpose).
pub fn stream(master_seed: u64, replication: u64, round: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut state = master_seed;
    for word in [replication, round, purpose.tag()] {
        state = splitmix64(&mut state) ^ word.wrapping_mul(0xD134_2543_DE82_EF95);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
