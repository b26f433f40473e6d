//! Samplers for the exponential-weights density p(q) ∝ exp(−⟨c, q⟩) on the
//! simplex (and its clipped variant Ω = {q ∈ Δ^K : q_a ≥ floor}).
//!
//! Two routes to the same law:
//!
//! * **Exact sequential inverse-CDF.** Coordinates are drawn in descending
//!   cost order. With C_j(ζ) the convolution mass of the still-unplaced costs
//!   {c_{(j)}, …, c_{(K)}} at budget ζ, the conditional CDF of the j-th
//!   coordinate given remaining budget B is closed-form:
//!
//!     F(v) = 1 − e^{−c_{(j)} v} · C_j(B − v) / C_j(B),
//!
//!   an identity that follows from C_{j+1} = c_{(j)}·C_j + C_j′. Each draw
//!   solves F(v) = U by safeguarded Newton on the log residual, using
//!   F′ ∝ e^{−c_{(j)} v} C_{j+1}(B − v), to absolute tolerance
//!   `inverse_cdf_tol`.
//!
//! * **Hit-and-run MCMC.** Uniform random sum-zero directions; the target
//!   restricted to a chord is a truncated exponential, sampled by exact
//!   inverse CDF, so no Metropolis correction is needed.
//!
//! The truncated variant re-draws until the Mahalanobis statistic
//! Σ_a q_a²·‖x‖²_{Σ_a^{−1}} falls below d·K·γ², force-accepting (with a flag)
//! after `max_rejects` failures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::covariance::{BlockCovariance, CovarianceError};
use crate::partition::{reduce_costs, PartialFractionTable, PartitionError, CONDITION_LIMIT};
use crate::problem::{gaussian, ProblemError, SimplexPoint};

/// Arms above this count fall back to hit-and-run; the sequential exact
/// method stays cheap and well-conditioned up to here.
pub const EXACT_ARM_CAP: usize = 16;

/// Grouping-tolerance ladder: poles closer than the working tolerance merge
/// into one multiple pole; on an ill-conditioned expansion the preparation
/// retries with the next coarser rung (a ≤ 10⁻³ perturbation of the density
/// in total variation, far below statistical resolution).
const GROUP_TOL_LADDER: [f64; 4] = [1e-9, 1e-7, 1e-5, 1e-3];

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("exact sampler supports at most {cap} arms, got {k}")]
    TooManyArms { k: usize, cap: usize },
    #[error("hr_steps ({steps}) must exceed hr_burnin ({burnin})")]
    StepsVsBurnin { steps: usize, burnin: usize },
    #[error("clip floor {floor} infeasible for {k} arms (need floor·K < 1, floor ≥ 0)")]
    BadClipFloor { floor: f64, k: usize },
    #[error("inverse-CDF tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("truncation threshold γ must be positive, got {0}")]
    BadGamma(f64),
    #[error(
        "partial fractions ill-conditioned at every grouping tolerance \
         (final cancellation ratio {ratio:.3e})"
    )]
    IllConditioned { ratio: f64 },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Sampling method for the play distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    Exact,
    HitAndRun,
}

/// Knobs for both samplers.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub method: SampleMethod,
    /// Post-burn-in MCMC steps per hit-and-run draw.
    pub hr_steps: usize,
    /// Discarded initial MCMC steps per hit-and-run draw.
    pub hr_burnin: usize,
    /// Absolute tolerance of the sequential inverse-CDF root-finder.
    pub inverse_cdf_tol: f64,
    /// Coordinate floor: 0 samples the plain simplex, 1/T the clipped set Ω.
    pub clip_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: SampleMethod::Exact,
            hr_steps: 2000,
            hr_burnin: 500,
            inverse_cdf_tol: 1e-10,
            clip_floor: 0.0,
        }
    }
}

impl SamplerConfig {
    /// Checks the config against an arm count.
    pub fn validate(&self, k: usize) -> Result<(), SamplerError> {
        if self.hr_steps <= self.hr_burnin {
            return Err(SamplerError::StepsVsBurnin { steps: self.hr_steps, burnin: self.hr_burnin });
        }
        if self.clip_floor < 0.0 || self.clip_floor * k as f64 >= 1.0 {
            return Err(SamplerError::BadClipFloor { floor: self.clip_floor, k });
        }
        if !(self.inverse_cdf_tol > 0.0) {
            return Err(SamplerError::BadTolerance(self.inverse_cdf_tol));
        }
        if self.method == SampleMethod::Exact && k > EXACT_ARM_CAP {
            return Err(SamplerError::TooManyArms { k, cap: EXACT_ARM_CAP });
        }
        Ok(())
    }
}

/// Unnormalized density e^{−⟨q, c⟩}.
pub fn density_unnormalized(q: &SimplexPoint, costs: &[f64]) -> f64 {
    let dot: f64 = q.as_slice().iter().zip(costs).map(|(qa, ca)| qa * ca).sum();
    (-dot).exp()
}

/// Exact sampler prepared for one cost vector: reduced/snapped costs,
/// descending draw order, and the suffix partial-fraction tables C_j.
#[derive(Debug, Clone)]
pub struct LogLinearSampler {
    k: usize,
    /// Reduced costs snapped to their pole-group means, original arm order.
    snapped: Vec<f64>,
    /// Arm indices in draw order (descending snapped cost, ties by index).
    order: Vec<usize>,
    /// suffix[j] = partial-fraction table of snapped costs order[j..].
    suffix: Vec<PartialFractionTable>,
    clip_floor: f64,
    /// 1 − K·clip_floor: the affine scale of the clip reparametrization.
    scale: f64,
    tol: f64,
    group_tol_used: f64,
}

impl LogLinearSampler {
    /// Builds the suffix tables, escalating the pole-grouping tolerance until
    /// every table passes the cancellation guard.
    ///
    /// Costs are first scaled by 1 − K·floor (the clip map q = floor + scale·u
    /// turns a density with costs c over Ω into one with costs scale·c over
    /// the plain simplex), then shifted, clamped, and snapped.
    pub fn prepare(costs: &[f64], cfg: &SamplerConfig) -> Result<Self, SamplerError> {
        let k = costs.len();
        cfg.validate(k)?;
        if k > EXACT_ARM_CAP {
            return Err(SamplerError::TooManyArms { k, cap: EXACT_ARM_CAP });
        }
        let scale = 1.0 - cfg.clip_floor * k as f64;
        let scaled: Vec<f64> = costs.iter().map(|&c| c * scale).collect();
        let (reduced, _) = reduce_costs(&scaled)?;

        let mut last_ratio = f64::INFINITY;
        for &group_tol in &GROUP_TOL_LADDER {
            let snapped = snap_to_groups(&reduced, group_tol);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                snapped[b].partial_cmp(&snapped[a]).expect("finite costs").then(a.cmp(&b))
            });
            let mut suffix = Vec::with_capacity(k);
            let mut worst = 0.0f64;
            for j in 0..k {
                let tail: Vec<f64> = order[j..].iter().map(|&a| snapped[a]).collect();
                let table = PartialFractionTable::build(&tail, 0.0);
                if tail.len() >= 2 {
                    worst = worst.max(table.condition_ratio());
                }
                suffix.push(table);
            }
            if worst.is_finite() && worst <= CONDITION_LIMIT {
                return Ok(LogLinearSampler {
                    k,
                    snapped,
                    order,
                    suffix,
                    clip_floor: cfg.clip_floor,
                    scale,
                    tol: cfg.inverse_cdf_tol,
                    group_tol_used: group_tol,
                });
            }
            last_ratio = worst;
        }
        Err(SamplerError::IllConditioned { ratio: last_ratio })
    }

    /// Pole-grouping tolerance the preparation settled on (diagnostic).
    pub fn group_tol_used(&self) -> f64 {
        self.group_tol_used
    }

    /// One exact draw.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> SimplexPoint {
        let mut coords = vec![0.0f64; self.k];
        let mut budget = 1.0f64;
        for j in 0..self.k - 1 {
            let u: f64 = rng.random();
            let v = self.invert_conditional(j, budget, u);
            coords[self.order[j]] = v;
            budget = (budget - v).max(0.0);
        }
        coords[self.order[self.k - 1]] = budget;
        if self.clip_floor > 0.0 {
            for c in &mut coords {
                *c = self.clip_floor + self.scale * *c;
            }
        }
        SimplexPoint::new(coords).expect("sequential draw lands on the simplex")
    }

    /// Solves F(v) = u for the j-th conditional at remaining budget `b`:
    /// e^{−αv}·C_j(b − v) = (1 − u)·C_j(b), v ∈ [0, b], by safeguarded Newton
    /// on h(v) = −αv + ln C_j(b−v) − ln[(1−u)·C_j(b)], whose derivative is
    /// −C_{j+1}(b−v)/C_j(b−v) < 0.
    pub(crate) fn invert_conditional(&self, j: usize, b: f64, u: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        let alpha = self.snapped[self.order[j]];
        let c_j = &self.suffix[j];
        let c_next = &self.suffix[j + 1];
        let mass_b = c_j.mass(b);
        if mass_b <= 0.0 {
            // Budget so small the suffix mass underflows; any split of it is
            // statistically invisible.
            return b * u;
        }
        let target = (1.0 - u).ln() + mass_b.ln();
        let (mut lo, mut hi) = (0.0f64, b);
        let mut v = b * u;
        for iter in 0..200 {
            if hi - lo <= self.tol {
                break;
            }
            if v <= lo || v >= hi {
                v = 0.5 * (lo + hi);
            }
            let m = c_j.mass(b - v);
            let h = if m > 0.0 { -alpha * v + m.ln() - target } else { f64::NEG_INFINITY };
            if h > 0.0 {
                lo = v;
            } else if h < 0.0 {
                hi = v;
            } else {
                return v;
            }
            let mut next = f64::NAN;
            if h.is_finite() && iter % 4 != 3 {
                let slope = -(c_next.mass(b - v) / m);
                if slope < 0.0 && slope.is_finite() {
                    let step = h / slope;
                    if step.abs() <= self.tol {
                        return (v - step).clamp(lo, hi);
                    }
                    next = v - step;
                }
            }
            v = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        0.5 * (lo + hi)
    }
}

/// Snaps each cost to the mean of its pole group (descending anchor chains
/// at `group_tol`), so every suffix table sees exactly coincident poles and
/// the sequential conditionals stay consistent with one joint law.
fn snap_to_groups(reduced: &[f64], group_tol: f64) -> Vec<f64> {
    let k = reduced.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| reduced[b].partial_cmp(&reduced[a]).expect("finite costs"));
    let mut snapped = vec![0.0f64; k];
    let mut start = 0usize;
    while start < k {
        let anchor = reduced[idx[start]];
        let mut end = start + 1;
        while end < k && (anchor - reduced[idx[end]]) <= group_tol {
            end += 1;
        }
        let mean: f64 =
            idx[start..end].iter().map(|&a| reduced[a]).sum::<f64>() / (end - start) as f64;
        for &a in &idx[start..end] {
            snapped[a] = mean;
        }
        start = end;
    }
    snapped
}

/// One exact draw from p(q) ∝ e^{−⟨q,c⟩} (prepare + draw convenience).
pub fn sample_exact(
    costs: &[f64],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SimplexPoint, SamplerError> {
    Ok(LogLinearSampler::prepare(costs, cfg)?.draw(rng))
}

/// One hit-and-run draw from the same target after hr_burnin + hr_steps
/// chord moves, starting at the barycenter.
pub fn sample_hit_and_run(
    costs: &[f64],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SimplexPoint, SamplerError> {
    let k = costs.len();
    cfg.validate(k)?;
    let (reduced, _) = reduce_costs(costs)?;
    let floor = cfg.clip_floor;
    let mut q = vec![1.0 / k as f64; k];
    let mut direction = vec![0.0f64; k];
    for _ in 0..cfg.hr_burnin + cfg.hr_steps {
        // Uniform sum-zero direction from a projected Gaussian.
        let mut mean = 0.0;
        for d in direction.iter_mut() {
            *d = gaussian(rng);
            mean += *d;
        }
        mean /= k as f64;
        let mut norm_sq = 0.0;
        for d in direction.iter_mut() {
            *d -= mean;
            norm_sq += *d * *d;
        }
        let chord_u: f64 = rng.random();
        if norm_sq < 1e-24 {
            continue;
        }
        let norm = norm_sq.sqrt();
        for d in direction.iter_mut() {
            *d /= norm;
        }
        // Chord {q + s·dir feasible}: every coordinate must stay ≥ floor.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..k {
            let da = direction[a];
            if da > 1e-300 {
                lo = lo.max((floor - q[a]) / da);
            } else if da < -1e-300 {
                hi = hi.min((floor - q[a]) / da);
            }
        }
        if !lo.is_finite() || !hi.is_finite() || hi - lo <= 0.0 {
            continue;
        }
        // Restricted density ∝ e^{−s·⟨c, dir⟩}: exact truncated exponential.
        let lambda: f64 = reduced.iter().zip(&direction).map(|(c, d)| c * d).sum();
        let s = truncated_exponential(lo, hi, lambda, chord_u);
        let mut sum = 0.0;
        for a in 0..k {
            q[a] = (q[a] + s * direction[a]).max(floor);
            sum += q[a];
        }
        // Undo fp drift so Σq = 1 holds over thousands of steps.
        let correction = (1.0 - sum) / k as f64;
        for v in q.iter_mut() {
            *v += correction;
        }
    }
    Ok(SimplexPoint::new(q)?)
}

/// Inverse-CDF draw from density ∝ e^{−λs} on [lo, hi] at uniform v.
fn truncated_exponential(lo: f64, hi: f64, lambda: f64, v: f64) -> f64 {
    let span = hi - lo;
    if !(span > 0.0) {
        return lo;
    }
    if (lambda * span).abs() < 1e-12 {
        return lo + v * span;
    }
    if lambda > 0.0 {
        // F(s) = (1 − e^{−λ(s−lo)})/(1 − e^{−λ·span}); expm1 saturates to −1
        // for λ·span ≳ 745, which is the untruncated exponential — exact to
        // below the representable tail mass.
        lo - (v * (-lambda * span).exp_m1()).ln_1p() / lambda
    } else {
        // Mirror: measure from hi with rate −λ.
        hi - truncated_exponential(0.0, span, -lambda, v)
    }
}

/// Outcome of the rejection-sampling step.
#[derive(Debug, Clone)]
pub struct TruncatedDraw {
    pub point: SimplexPoint,
    /// Proposals rejected before acceptance (or before giving up).
    pub rejections: usize,
    /// Mahalanobis statistic of the returned point.
    pub statistic: f64,
    /// True when max_rejects was exhausted and the last draw was kept
    /// despite violating the truncation event.
    pub forced: bool,
}

/// Draws Q̃ ~ p(·|x) conditioned on Σ_a ‖Q_a x‖²_{Σ_a^{−1}} ≤ d·K·γ² by
/// rejection, force-accepting (flagged) after `max_rejects` failures.
pub fn sample_truncated(
    costs: &[f64],
    cfg: &SamplerConfig,
    sigma: &BlockCovariance,
    x: &nalgebra::DVector<f64>,
    gamma: f64,
    max_rejects: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TruncatedDraw, SamplerError> {
    if !(gamma > 0.0) {
        return Err(SamplerError::BadGamma(gamma));
    }
    let weights = sigma.context_weights(x)?;
    let ceiling = (sigma.dim() * sigma.arms()) as f64 * gamma * gamma;
    let prepared = match cfg.method {
        SampleMethod::Exact => Some(LogLinearSampler::prepare(costs, cfg)?),
        SampleMethod::HitAndRun => None,
    };
    let mut rejections = 0usize;
    loop {
        let point = match &prepared {
            Some(sampler) => sampler.draw(rng),
            None => sample_hit_and_run(costs, cfg, rng)?,
        };
        let statistic: f64 = point
            .as_slice()
            .iter()
            .zip(&weights)
            .map(|(&qa, &wa)| qa * qa * wa)
            .sum();
        if statistic <= ceiling {
            return Ok(TruncatedDraw { point, rejections, statistic, forced: false });
        }
        rejections += 1;
        if rejections >= max_rejects {
            return Ok(TruncatedDraw { point, rejections, statistic, forced: true });
        }
    }
}
