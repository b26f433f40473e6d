//! Matrix Geometric Resampling: the rejection-free estimate Σ̂⁺ of Σ⁻¹ built
//! from fresh (context, play) pairs, together with its theorem-mandated
//! parameter schedule and the closed-form expectation it must match:
//!
//!   E[Σ̂⁺] = Σ^{−1}(I − (I − cΣ)^{N+1}),   c = 1/2.
//!
//! One repeat consumes N pairs: per arm, Y_j = q_{j,a}² x_j x_jᵀ,
//! Z_n = ∏_{j=1}^n (I − c·Y_j) accumulated left-to-right in sample order
//! (expectation is order-invariant; a fixed order keeps runs deterministic),
//! and Σ̂⁺⁽ᵐ⁾ = c·(I + Σ_{n=1}^N Z_n). The returned estimate averages the M
//! repeats and symmetrizes. Every factor is a contraction because the per-
//! sample norm q_a²‖x‖² never exceeds 1/c = 2 (asserted), which gives the
//! deterministic bound ‖Σ̂⁺‖ ≤ c(N+1) ≤ (2/λ)·ln(1/(ελ)).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::covariance::{invert_block, BlockCovariance, CovarianceError, CovKind};
use crate::problem::{ProblemDims, SimplexPoint};

/// The MGR step constant c is pinned by the analysis.
pub const MGR_C: f64 = 0.5;
/// Default ceiling on the repeat count M (the theorem value explodes at
/// small ε); a binding cap is flagged, never silently absorbed into N.
pub const DEFAULT_M_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum MgrError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("ε·λ = {0} ≥ 1 makes ln(1/(ελ)) non-positive")]
    LogNonPositive(f64),
    #[error("L̂ must be ≥ 0 and finite, got {0}")]
    BadLoss(f64),
    #[error("H must be ≥ 1, got {0}")]
    BadHorizonProxy(f64),
    #[error("expected M·N = {want} pairs, got {got}")]
    WrongPairCount { got: usize, want: usize },
    #[error("pair {index}: q_a²‖x‖² = {norm:.4} exceeds 1/c = 2 (contraction violated)")]
    SampleNormTooLarge { index: usize, norm: f64 },
    #[error("pair {index}: context/play dimensions changed mid-list")]
    InconsistentPair { index: usize },
    #[error("c·λ_max = {0} ≥ 1: geometric series diverges")]
    CLambdaTooLarge(f64),
    #[error("covariance block has non-positive eigenvalue {0}")]
    NotPositiveDefinite(f64),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

/// Schedule (M, N, c, ε, λ_t) for one round.
#[derive(Debug, Clone, Copy)]
pub struct MgrParams {
    /// Repeats actually run (after any cap).
    pub m: usize,
    /// Depth of each repeat.
    pub n: usize,
    /// Step constant, always 1/2.
    pub c: f64,
    pub epsilon: f64,
    pub lambda_t: f64,
    /// Theorem-mandated repeat count before capping.
    pub m_theorem: usize,
    /// True when a cap reduced M below the theorem value.
    pub capped: bool,
}

impl MgrParams {
    /// Total fresh pairs one call to `mgr_inverse` consumes.
    pub fn pair_count(&self) -> usize {
        self.m * self.n
    }

    /// Deterministic operator-norm ceiling (2/λ)·ln(1/(ελ)) from the
    /// property lemma; c(N+1) never exceeds it.
    pub fn cov_norm1_bound(&self) -> f64 {
        (2.0 / self.lambda_t) * (1.0 / (self.epsilon * self.lambda_t)).ln()
    }
}

/// Ceilings applied on top of the theorem schedule: a hard repeat cap and an
/// optional per-round budget on total pairs M·N. Caps reduce M only — N is
/// what controls the bias, so it is never touched.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MgrCaps {
    pub m_cap: usize,
    pub pairs_cap: Option<usize>,
}

impl Default for MgrCaps {
    fn default() -> Self {
        MgrCaps { m_cap: DEFAULT_M_CAP, pairs_cap: None }
    }
}

/// Theorem schedule: λ_t = (L̂+1)^{−1/2}, N = ⌈(2/λ)·ln(1/(ελ))⌉,
/// M = ⌈(24·ln(dHT)/ε²)·(4/(λ²·ln²(1/(ελ))))⌉.
pub fn mgr_params(
    l_hat_prev: f64,
    dims: &ProblemDims,
    epsilon: f64,
    h: f64,
) -> Result<MgrParams, MgrError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MgrError::BadEpsilon(epsilon));
    }
    if !(l_hat_prev >= 0.0) || !l_hat_prev.is_finite() {
        return Err(MgrError::BadLoss(l_hat_prev));
    }
    if !(h >= 1.0) {
        return Err(MgrError::BadHorizonProxy(h));
    }
    let lambda_t = 1.0 / (l_hat_prev + 1.0).sqrt();
    let eps_lambda = epsilon * lambda_t;
    if eps_lambda >= 1.0 {
        return Err(MgrError::LogNonPositive(eps_lambda));
    }
    let log_term = (1.0 / eps_lambda).ln();
    let n = ((2.0 / lambda_t) * log_term).ceil() as usize;
    let d = dims.d as f64;
    let t = dims.horizon as f64;
    let m_theorem = ((24.0 * (d * h * t).ln() / (epsilon * epsilon))
        * (4.0 / (lambda_t * lambda_t * log_term * log_term)))
        .ceil() as usize;
    Ok(MgrParams {
        m: m_theorem.max(1),
        n: n.max(1),
        c: MGR_C,
        epsilon,
        lambda_t,
        m_theorem: m_theorem.max(1),
        capped: false,
    })
}

impl MgrParams {
    /// Applies the repeat/pair ceilings, flagging when they bind.
    pub fn with_caps(mut self, caps: &MgrCaps) -> MgrParams {
        let mut m = self.m_theorem.min(caps.m_cap);
        if let Some(pairs) = caps.pairs_cap {
            m = m.min((pairs / self.n).max(1));
        }
        self.capped = m < self.m_theorem;
        self.m = m.max(1);
        self
    }
}

/// Σ̂⁺ from exactly M·N fresh (context, play) pairs.
///
/// Deterministic given the pair list; the only randomness is the caller's
/// sampling of the pairs.
pub fn mgr_inverse(
    pairs: &[(DVector<f64>, SimplexPoint)],
    params: &MgrParams,
) -> Result<BlockCovariance, MgrError> {
    let want = params.pair_count();
    if pairs.len() != want {
        return Err(MgrError::WrongPairCount { got: pairs.len(), want });
    }
    let d = pairs[0].0.len();
    let k = pairs[0].1.len();
    let c = params.c;
    let identity = DMatrix::<f64>::identity(d, d);
    let mut mean = vec![DMatrix::<f64>::zeros(d, d); k];
    for (m_idx, repeat) in pairs.chunks(params.n).enumerate() {
        let mut product = vec![identity.clone(); k];
        let mut acc = vec![DMatrix::<f64>::zeros(d, d); k];
        for (j, (x, q)) in repeat.iter().enumerate() {
            let index = m_idx * params.n + j;
            if x.len() != d || q.len() != k {
                return Err(MgrError::InconsistentPair { index });
            }
            let x_norm_sq = x.norm_squared();
            let outer = x * x.transpose();
            for a in 0..k {
                let qa = q.get(a);
                let norm = qa * qa * x_norm_sq;
                if norm > 1.0 / c + 1e-9 {
                    return Err(MgrError::SampleNormTooLarge { index, norm });
                }
                // Right-multiply: Z_n = Z_{n−1}·(I − c·Y_n) in sample order.
                let factor = &identity - &outer * (c * qa * qa);
                product[a] = &product[a] * factor;
                acc[a] += &product[a];
            }
        }
        for a in 0..k {
            // Σ̂⁺⁽ᵐ⁾ = c·(I + Σ_n Z_n), averaged over repeats on the fly.
            mean[a] += (&identity + &acc[a]) * (c / params.m as f64);
        }
    }
    let blocks: Vec<DMatrix<f64>> =
        mean.into_iter().map(|b| (&b + b.transpose()) * 0.5).collect();
    Ok(BlockCovariance::new(CovKind::MgrInverse, blocks, pairs.len())?)
}

/// Closed-form E[Σ̂⁺] = Σ^{−1}(I − (I − cΣ)^{N+1}) per block, evaluated on
/// Σ's eigenvalues as f(λ) = −expm1((N+1)·ln1p(−cλ))/λ — one expression that
/// is exact for all 0 < cλ < 1 and tends to c(N+1) as λ → 0, so no separate
/// small-λ fallback is needed.
pub fn mgr_expected_value(
    sigma: &BlockCovariance,
    c: f64,
    n: usize,
) -> Result<BlockCovariance, MgrError> {
    let d = sigma.dim();
    let mut blocks = Vec::with_capacity(sigma.arms());
    for a in 0..sigma.arms() {
        let eig = sigma.block(a).clone().symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= 0.0 {
            return Err(MgrError::NotPositiveDefinite(lambda_min));
        }
        if c * lambda_max >= 1.0 {
            return Err(MgrError::CLambdaTooLarge(c * lambda_max));
        }
        let mut diag = DVector::zeros(d);
        for i in 0..d {
            let lam = eig.eigenvalues[i];
            diag[i] = -(((n + 1) as f64) * (-c * lam).ln_1p()).exp_m1() / lam;
        }
        let block = &eig.eigenvectors * DMatrix::from_diagonal(&diag) * eig.eigenvectors.transpose();
        blocks.push((&block + block.transpose()) * 0.5);
    }
    Ok(BlockCovariance::new(CovKind::MgrInverse, blocks, sigma.sample_count)?)
}

/// The four property-lemma norms for one Σ̂⁺ against a reference Σ.
///
/// Interpretation is the caller's: cov_norm1 must hold on every single draw;
/// cov_norm2 is meaningful when `sigma_hat_plus` is a Monte-Carlo mean;
/// cov_norm3/4 are per-draw quantities whose violation frequency is compared
/// to the lemma's high-probability level.
#[derive(Debug, Clone, Copy)]
pub struct MgrReport {
    /// ‖Σ̂⁺‖_op and its deterministic ceiling (2/λ)·ln(1/(ελ)).
    pub cov_norm1: f64,
    pub cov_norm1_bound: f64,
    pub cov_norm1_ok: bool,
    /// ‖Σ̂⁺ − Σ^{−1}‖_op against ε (expectation check when given a mean).
    pub cov_norm2: f64,
    pub cov_norm2_ok: bool,
    /// Same distance, interpreted as the per-draw concentration check.
    pub cov_norm3: f64,
    pub cov_norm3_ok: bool,
    /// ‖Σ̂⁺·Σ‖_op against 1 + 2ε.
    pub cov_norm4: f64,
    pub cov_norm4_ok: bool,
}

/// Evaluates the property-lemma norms (maxima across blocks).
pub fn mgr_property_check(
    sigma_hat_plus: &BlockCovariance,
    sigma: &BlockCovariance,
    params: &MgrParams,
) -> Result<MgrReport, MgrError> {
    let bound1 = params.cov_norm1_bound();
    let mut norm1 = 0.0f64;
    let mut norm2 = 0.0f64;
    let mut norm4 = 0.0f64;
    for a in 0..sigma_hat_plus.arms() {
        let hat = sigma_hat_plus.block(a);
        norm1 = norm1.max(symmetric_op_norm(hat));
        let inv = invert_block(sigma.block(a))?;
        norm2 = norm2.max(symmetric_op_norm(&(hat - &inv)));
        let product = hat * sigma.block(a);
        norm4 = norm4.max(product.svd(false, false).singular_values.max());
    }
    Ok(MgrReport {
        cov_norm1: norm1,
        cov_norm1_bound: bound1,
        cov_norm1_ok: norm1 <= bound1 + 1e-9,
        cov_norm2: norm2,
        cov_norm2_ok: norm2 <= params.epsilon,
        cov_norm3: norm2,
        cov_norm3_ok: norm2 <= params.epsilon,
        cov_norm4: norm4,
        cov_norm4_ok: norm4 <= 1.0 + 2.0 * params.epsilon,
    })
}

/// Operator norm of a symmetric matrix: max |eigenvalue|.
pub(crate) fn symmetric_op_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()))
}
