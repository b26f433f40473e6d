//! Per-arm covariance blocks Σ_a = E[Q_a² X Xᵀ], their truncated analogues
//! Σ̃_a, and the operations the algorithms need on them: Monte-Carlo
//! estimation, guarded inversion, Mahalanobis statistics, and the
//! eigenvalue-sandwich comparison between truncated and untruncated blocks.
//!
//! Estimation is refreshed every round (the law of Q changes with the play
//! distribution) and runs sequentially; the harness parallelizes across
//! replications instead, which keeps per-run determinism trivial.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::problem::SimplexPoint;
use crate::sampler::{sample_exact, sample_truncated, SamplerConfig, SamplerError};

/// Condition number beyond which the inversion adds diagonal jitter.
pub const JITTER_CONDITION: f64 = 1e10;
/// Jitter magnitude relative to the mean diagonal: 1e-10 · tr(B)/d.
pub const JITTER_SCALE: f64 = 1e-10;
/// Residual ceiling ‖B·B⁻¹ − I‖_max enforced on every inversion.
pub const INVERSION_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("block {index} is not symmetric: ‖B − Bᵀ‖_max = {asym:.3e}")]
    NotSymmetric { index: usize, asym: f64 },
    #[error("blocks must be square and same-sized; block {index} is {rows}×{cols}")]
    BadShape { index: usize, rows: usize, cols: usize },
    #[error("no blocks supplied")]
    Empty,
    #[error("block not positive semi-definite: λ_min = {lambda_min:.3e}")]
    NotPositiveSemiDefinite { lambda_min: f64 },
    #[error("inversion residual {residual:.3e} exceeds {limit:.0e}")]
    ResidualTooLarge { residual: f64, limit: f64 },
    #[error("covariance sample budget {s} below d·K = {need}")]
    TooFewSamples { s: usize, need: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: String, right: String },
    #[error("block {index} of the reference covariance is singular")]
    SingularReference { index: usize },
    #[error(transparent)]
    Sampler(Box<SamplerError>),
}

impl From<SamplerError> for CovarianceError {
    fn from(e: SamplerError) -> Self {
        CovarianceError::Sampler(Box::new(e))
    }
}

/// Which law a block collection describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// Σ_t: plays from the plain exponential-weights law.
    Untruncated,
    /// Σ̃_t: plays from the rejection-truncated law.
    Truncated,
    /// Σ̂⁺: a matrix-geometric-resampling estimate of an inverse.
    MgrInverse,
}

/// K symmetric d×d blocks in arm order.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    pub kind: CovKind,
    blocks: Vec<DMatrix<f64>>,
    pub sample_count: usize,
    dim: usize,
}

impl BlockCovariance {
    /// Validates shape and symmetry (‖B − Bᵀ‖_max ≤ 1e-12 per block), then
    /// stores the exactly symmetrized blocks.
    pub fn new(
        kind: CovKind,
        blocks: Vec<DMatrix<f64>>,
        sample_count: usize,
    ) -> Result<Self, CovarianceError> {
        let dim = blocks.first().ok_or(CovarianceError::Empty)?.nrows();
        let mut stored = Vec::with_capacity(blocks.len());
        for (index, b) in blocks.into_iter().enumerate() {
            if b.nrows() != dim || b.ncols() != dim {
                return Err(CovarianceError::BadShape { index, rows: b.nrows(), cols: b.ncols() });
            }
            let asym = (&b - b.transpose()).abs().max();
            if asym > 1e-12 {
                return Err(CovarianceError::NotSymmetric { index, asym });
            }
            stored.push((&b + b.transpose()) * 0.5);
        }
        Ok(BlockCovariance { kind, blocks: stored, sample_count, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arms(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, a: usize) -> &DMatrix<f64> {
        &self.blocks[a]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Inverse of every block under the jitter policy.
    pub fn inverses(&self) -> Result<Vec<DMatrix<f64>>, CovarianceError> {
        self.blocks.iter().map(invert_block).collect()
    }

    /// Per-arm quadratic forms m_a = xᵀ B_a⁻¹ x.
    pub fn context_weights(&self, x: &DVector<f64>) -> Result<Vec<f64>, CovarianceError> {
        if x.len() != self.dim {
            return Err(CovarianceError::DimMismatch {
                left: format!("context dim {}", x.len()),
                right: format!("block dim {}", self.dim),
            });
        }
        self.blocks
            .iter()
            .map(|b| {
                let inv = invert_block(b)?;
                Ok((x.transpose() * inv * x)[(0, 0)])
            })
            .collect()
    }

    /// Blockwise inverse under the jitter policy, packaged with the same
    /// kind tag (the tag names the law the blocks derive from, which an
    /// inversion does not change). Blocks are exactly symmetrized.
    pub fn inverted(&self) -> Result<BlockCovariance, CovarianceError> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| invert_block(b).map(|inv| (&inv + inv.transpose()) * 0.5))
            .collect::<Result<Vec<_>, _>>()?;
        BlockCovariance::new(self.kind, blocks, self.sample_count)
    }

    /// Smallest eigenvalue across all blocks (positive-definiteness probe).
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                b.clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Inverse of (B + jitter·I): jitter = 0 unless cond(B) > 10¹⁰, then
/// 10⁻¹⁰·tr(B)/d. Eigendecomposition route; negative eigenvalues beyond
/// −10⁻¹⁰·λ_max are rejected, smaller ones are clamped to zero before the
/// jitter is added. The residual against the (possibly jittered) matrix must
/// stay below 10⁻⁸.
pub fn invert_block(b: &DMatrix<f64>) -> Result<DMatrix<f64>, CovarianceError> {
    let sym = (b + b.transpose()) * 0.5;
    let d = sym.nrows();
    let eig = sym.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = lambda_max.max(1e-300);
    if lambda_min < -1e-10 * scale {
        return Err(CovarianceError::NotPositiveSemiDefinite { lambda_min });
    }
    let cond = if lambda_min > 0.0 { lambda_max / lambda_min } else { f64::INFINITY };
    let jitter =
        if cond > JITTER_CONDITION { JITTER_SCALE * sym.trace() / d as f64 } else { 0.0 };
    let mut inv_diag = DVector::zeros(d);
    for i in 0..d {
        let lam = eig.eigenvalues[i].max(0.0) + jitter;
        if !(lam > 0.0) {
            return Err(CovarianceError::NotPositiveSemiDefinite { lambda_min });
        }
        inv_diag[i] = 1.0 / lam;
    }
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    let inv = (&inv + inv.transpose()) * 0.5;
    let target = &sym + DMatrix::identity(d, d) * jitter;
    let residual = (target * &inv - DMatrix::identity(d, d)).abs().max();
    if residual > INVERSION_RESIDUAL_TOL {
        return Err(CovarianceError::ResidualTooLarge {
            residual,
            limit: INVERSION_RESIDUAL_TOL,
        });
    }
    Ok(inv)
}

/// Truncation statistic Σ_a q_a² · xᵀ Σ_a⁻¹ x.
pub fn mahalanobis_stat(
    q: &SimplexPoint,
    x: &DVector<f64>,
    sigma: &BlockCovariance,
) -> Result<f64, CovarianceError> {
    if q.len() != sigma.arms() {
        return Err(CovarianceError::DimMismatch {
            left: format!("simplex arms {}", q.len()),
            right: format!("covariance arms {}", sigma.arms()),
        });
    }
    let weights = sigma.context_weights(x)?;
    Ok(q.as_slice().iter().zip(&weights).map(|(&qa, &wa)| qa * qa * wa).sum())
}

/// Rejection parameters for estimating the truncated law Σ̃.
#[derive(Debug, Clone, Copy)]
pub struct TruncationSpec<'a> {
    /// Untruncated Σ used inside the truncation event.
    pub sigma: &'a BlockCovariance,
    pub gamma: f64,
    pub max_rejects: usize,
}

/// Result of one covariance estimation sweep.
#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    pub cov: BlockCovariance,
    /// Draws that exhausted the rejection budget (truncated law only).
    pub forced_accepts: usize,
    /// Total rejected proposals over all S draws (truncated law only).
    pub total_rejections: usize,
}

/// Monte-Carlo estimate of Σ (or Σ̃ when `truncation` is given):
/// block_a = (1/S)·Σ_i Q_a^{(i)2} X^{(i)} X^{(i)ᵀ} over fresh pairs with
/// Q^{(i)} drawn from the (possibly truncated) play law at context X^{(i)}.
pub fn estimate_sigma<Dx, Fc>(
    mut draw_context: Dx,
    mut costs_fn: Fc,
    cfg: &SamplerConfig,
    s: usize,
    truncation: Option<TruncationSpec<'_>>,
    rng: &mut ChaCha8Rng,
) -> Result<SigmaEstimate, CovarianceError>
where
    Dx: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
    Fc: FnMut(&DVector<f64>) -> Vec<f64>,
{
    let first_x = draw_context(rng);
    let d = first_x.len();
    let k = costs_fn(&first_x).len();
    if s < d * k {
        return Err(CovarianceError::TooFewSamples { s, need: d * k });
    }
    let mut acc = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut forced_accepts = 0usize;
    let mut total_rejections = 0usize;
    for i in 0..s {
        let x = if i == 0 { first_x.clone() } else { draw_context(rng) };
        let costs = costs_fn(&x);
        let q = match &truncation {
            None => sample_exact(&costs, cfg, rng)?,
            Some(spec) => {
                let draw = sample_truncated(
                    &costs,
                    cfg,
                    spec.sigma,
                    &x,
                    spec.gamma,
                    spec.max_rejects,
                    rng,
                )?;
                total_rejections += draw.rejections;
                if draw.forced {
                    forced_accepts += 1;
                }
                draw.point
            }
        };
        let outer = &x * x.transpose();
        for a in 0..k {
            let qa = q.get(a);
            acc[a] += &outer * (qa * qa);
        }
    }
    let inv_s = 1.0 / s as f64;
    let blocks: Vec<DMatrix<f64>> =
        acc.into_iter().map(|b| (&b + b.transpose()) * (0.5 * inv_s)).collect();
    let kind = if truncation.is_some() { CovKind::Truncated } else { CovKind::Untruncated };
    Ok(SigmaEstimate {
        cov: BlockCovariance::new(kind, blocks, s)?,
        forced_accepts,
        total_rejections,
    })
}

/// Extreme generalized eigenvalues of (Σ̃, Σ) across blocks: the smallest and
/// largest eigenvalue of Σ_a^{−1/2} Σ̃_a Σ_a^{−1/2}. The sandwich holds when
/// both margins fall inside the reference interval.
pub fn sandwich_check(
    sigma: &BlockCovariance,
    sigma_tilde: &BlockCovariance,
) -> Result<(f64, f64), CovarianceError> {
    if sigma.dim() != sigma_tilde.dim() || sigma.arms() != sigma_tilde.arms() {
        return Err(CovarianceError::DimMismatch {
            left: format!("Σ {}×{} arms {}", sigma.dim(), sigma.dim(), sigma.arms()),
            right: format!(
                "Σ̃ {}×{} arms {}",
                sigma_tilde.dim(),
                sigma_tilde.dim(),
                sigma_tilde.arms()
            ),
        });
    }
    let d = sigma.dim();
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for a in 0..sigma.arms() {
        let eig = sigma.block(a).clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= 0.0 {
            return Err(CovarianceError::SingularReference { index: a });
        }
        let mut root_inv_diag = DVector::zeros(d);
        for i in 0..d {
            root_inv_diag[i] = 1.0 / eig.eigenvalues[i].sqrt();
        }
        let root_inv = &eig.eigenvectors
            * DMatrix::from_diagonal(&root_inv_diag)
            * eig.eigenvectors.transpose();
        let pencil = &root_inv * sigma_tilde.block(a) * &root_inv;
        let pencil = (&pencil + pencil.transpose()) * 0.5;
        for lam in pencil.symmetric_eigen().eigenvalues.iter() {
            lower = lower.min(*lam);
            upper = upper.max(*lam);
        }
    }
    Ok((lower, upper))
}
