//! Unbiased per-arm loss-vector estimators and their bias diagnostics.
//!
//! Both learners reconstruct the full loss matrix θ_t ∈ ℝ^{K×d} from the one
//! realized loss of the played arm, importance-weighting it with the play
//! probability and a (pseudo-)inverse of the play-law second moment:
//!
//! - [`estimate_theta`]: θ̂_{t,a} = m_{t,a} + 1{a = A_t}·Q̃_{t,a}·Σ̃_{t,a}⁻¹·
//!   X_t·(ℓ_t − ⟨X_t, m_{t,a}⟩) — unbiased under the truncated play law for
//!   any measurable optimistic anchor m, because
//!   E[1{A_t = a}·Q̃_{t,a}·X_t X_tᵀ] = Σ̃_{t,a}.
//! - [`estimate_theta_mgr`]: θ̂_{t,a} = 1{a = A_t}·Q_{t,a}·Σ̂⁺_{t,a}·X_t·ℓ_t,
//!   where Σ̂⁺ is the matrix-geometric-resampling surrogate for Σ_{t,a}⁻¹.
//!   Its bias is exactly −(I − cΣ_a)^{N+1}·θ_{t,a}, which the depth schedule
//!   drives below ε·λ in norm.
//!
//! [`ghost_identity_check`] verifies the change of measure the regret
//! analysis rests on: expected instantaneous regret computed on the real
//! round equals its counterpart computed on an independent ghost context with
//! the realized estimator. [`mgr_bias_probe`] measures the resampling
//! estimator's bias ⟨X, θ_t − θ̂_t⟩ directly; the bias has no standalone
//! closed form in the round loop, so diagnostics carry it implicitly as
//! (estimate under Σ̂⁺) minus (truth).

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::covariance::{BlockCovariance, CovKind};
use crate::mgr::{mgr_inverse, MgrError, MgrParams};
use crate::problem::{comparator_arm, SimplexPoint, ThetaMatrix};
use crate::sampler::{sample_exact, sample_truncated, SamplerConfig, SamplerError};

/// Two-sided 97.5% normal quantile for the 95% confidence intervals below.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: String, right: String },
    #[error("played arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("covariance blocks are {got:?} where {expected:?} is required")]
    KindMismatch { expected: CovKind, got: CovKind },
    #[error("Monte-Carlo check needs at least {need} replays, got {got}")]
    TooFewReplays { need: usize, got: usize },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Mgr(#[from] MgrError),
}

/// Running estimator state: Θ̂_t = Σ_{s≤t} θ̂_s plus the optimistic anchors.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    /// Σ_{s≤round} θ̂_s; starts at zero.
    pub cumulative: ThetaMatrix,
    /// Optimistic anchors m_{t,a}; all-zero unless a plug-in model supplies
    /// them (any F_{t−1}-measurable choice keeps the estimator unbiased).
    pub optimistic: ThetaMatrix,
    /// Rounds folded into `cumulative` so far.
    pub round: usize,
}

impl EstimatorState {
    pub fn new(k: usize, d: usize) -> Self {
        EstimatorState {
            cumulative: ThetaMatrix::zeros(k, d),
            optimistic: ThetaMatrix::zeros(k, d),
            round: 0,
        }
    }

    /// Folds one round's estimate into the running sum and advances the
    /// round counter.
    pub fn accumulate(&mut self, theta_hat: &ThetaMatrix) {
        debug_assert_eq!(theta_hat.k(), self.cumulative.k());
        self.cumulative.add_assign(theta_hat);
        self.round += 1;
    }
}

fn check_shape(
    d: usize,
    k: usize,
    blocks: &BlockCovariance,
    anchors: Option<&ThetaMatrix>,
) -> Result<(), EstimatorError> {
    if blocks.dim() != d || blocks.arms() != k {
        return Err(EstimatorError::DimMismatch {
            left: format!("context d={d}, play K={k}"),
            right: format!("covariance d={}, K={}", blocks.dim(), blocks.arms()),
        });
    }
    if let Some(m) = anchors {
        if m.k() != k || m.rows.iter().any(|row| row.len() != d) {
            return Err(EstimatorError::DimMismatch {
                left: format!("context d={d}, play K={k}"),
                right: format!("anchor matrix K={}", m.k()),
            });
        }
    }
    Ok(())
}

/// The exact-inverse importance estimator:
/// row a = m_a + 1{a = a_played}·q̃_a·Σ̃_{t,a}⁻¹·x·(loss − ⟨x, m_a⟩);
/// every other row passes m_a through untouched.
///
/// `sigma_tilde_inv` must hold the blockwise **inverse** of the truncated
/// second moment Σ̃_t (see [`BlockCovariance::inverted`]).
pub fn estimate_theta(
    x: &DVector<f64>,
    a_played: usize,
    loss: f64,
    q_tilde: &SimplexPoint,
    sigma_tilde_inv: &BlockCovariance,
    m: &ThetaMatrix,
) -> Result<ThetaMatrix, EstimatorError> {
    if sigma_tilde_inv.kind != CovKind::Truncated {
        return Err(EstimatorError::KindMismatch {
            expected: CovKind::Truncated,
            got: sigma_tilde_inv.kind,
        });
    }
    let (d, k) = (x.len(), q_tilde.len());
    check_shape(d, k, sigma_tilde_inv, Some(m))?;
    if a_played >= k {
        return Err(EstimatorError::ArmOutOfRange { arm: a_played, arms: k });
    }
    let mut rows = m.rows.clone();
    let residual = loss - x.dot(&m.rows[a_played]);
    rows[a_played] +=
        sigma_tilde_inv.block(a_played) * x * (q_tilde.get(a_played) * residual);
    Ok(ThetaMatrix { rows })
}

/// The resampling estimator: row a = 1{a = a_played}·q_a·Σ̂⁺_{t,a}·x·loss,
/// all other rows zero (this variant fixes m ≡ 0).
///
/// `sigma_hat_plus` must come from [`crate::mgr::mgr_inverse`] (or its
/// closed-form mean) — it is applied directly, never inverted again.
pub fn estimate_theta_mgr(
    x: &DVector<f64>,
    a_played: usize,
    loss: f64,
    q: &SimplexPoint,
    sigma_hat_plus: &BlockCovariance,
) -> Result<ThetaMatrix, EstimatorError> {
    if sigma_hat_plus.kind != CovKind::MgrInverse {
        return Err(EstimatorError::KindMismatch {
            expected: CovKind::MgrInverse,
            got: sigma_hat_plus.kind,
        });
    }
    let (d, k) = (x.len(), q.len());
    check_shape(d, k, sigma_hat_plus, None)?;
    if a_played >= k {
        return Err(EstimatorError::ArmOutOfRange { arm: a_played, arms: k });
    }
    let mut rows = vec![DVector::zeros(d); k];
    rows[a_played] = sigma_hat_plus.block(a_played) * x * (q.get(a_played) * loss);
    Ok(ThetaMatrix { rows })
}

/// Mixed loss Σ_a q_a·⟨x, θ_a⟩ of a stochastic policy at one context.
fn mixed_loss(q: &SimplexPoint, x: &DVector<f64>, theta: &ThetaMatrix) -> f64 {
    q.as_slice().iter().zip(&theta.rows).map(|(&qa, row)| qa * row.dot(x)).sum()
}

/// Everything F_{t−1}-measurable about one round, plus the true loss matrix,
/// frozen so that Monte-Carlo replays of the round are i.i.d.
#[derive(Debug, Clone, Copy)]
pub struct FrozenRound<'a> {
    /// Learning rate η_t scaling the exponential-weights costs.
    pub eta: f64,
    /// Cumulative estimate Θ̂_{t−1}: costs are c_a(x) = η·⟨x, Θ̂_a⟩.
    pub theta_cum: &'a ThetaMatrix,
    /// Untruncated second moment Σ_t defining the truncation event.
    pub sigma: &'a BlockCovariance,
    /// Blockwise inverse of the truncated second moment Σ̃_t.
    pub sigma_tilde_inv: &'a BlockCovariance,
    /// Optimistic anchors m_t.
    pub optimistic: &'a ThetaMatrix,
    /// True loss vectors θ_t.
    pub theta_t: &'a ThetaMatrix,
    /// Truncation level γ.
    pub gamma: f64,
    /// Rejection budget before a forced accept.
    pub max_rejects: usize,
    pub sampler: &'a SamplerConfig,
}

impl FrozenRound<'_> {
    fn costs(&self, x: &DVector<f64>) -> Vec<f64> {
        self.theta_cum.losses(x).iter().map(|l| self.eta * l).collect()
    }
}

/// Comparator policy Z* inside the ghost identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostComparator {
    /// Deterministic per-context best arm under θ_t (lowest index on ties).
    BestArm,
    /// The play law itself, evaluated through an independent second draw —
    /// a self-comparison whose expected regret is zero on both sides.
    MeanPolicy,
}

/// Dual Monte-Carlo verdict on the ghost identity.
#[derive(Debug, Clone, Copy)]
pub struct GhostReport {
    /// Real-side mean and standard error of ⟨Z_t(X_t) − Z*(X_t), θ_t⟩.
    pub real: (f64, f64),
    /// Ghost-side mean and standard error of ⟨Z_t(X₀) − Z*(X₀), θ̂_t⟩.
    pub ghost: (f64, f64),
    /// Replays behind each side.
    pub n: usize,
    /// True when the two 95% confidence intervals intersect.
    pub overlap: bool,
}

/// Checks E⟨Z_t(X_t) − Z*(X_t), θ_t⟩ = E⟨Z_t(X₀) − Z*(X₀), θ̂_t⟩ by replaying
/// the frozen round `n_mc` times.
///
/// Each replay runs the real round (context, truncated play draw, arm, loss,
/// estimator) and then re-evaluates the realized θ̂_t on an independent ghost
/// context X₀ with a fresh play draw. Policy terms use the probability-mixed
/// loss Σ_a Q_a⟨x, θ_a⟩ — identical in expectation to the played-arm loss,
/// with less variance.
pub fn ghost_identity_check<Dx>(
    frozen: &FrozenRound<'_>,
    mut draw_context: Dx,
    comparator: GhostComparator,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GhostReport, EstimatorError>
where
    Dx: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if n_mc < 2 {
        return Err(EstimatorError::TooFewReplays { need: 2, got: n_mc });
    }
    let draw_play = |x: &DVector<f64>, costs: &[f64], rng: &mut ChaCha8Rng| {
        sample_truncated(
            costs,
            frozen.sampler,
            frozen.sigma,
            x,
            frozen.gamma,
            frozen.max_rejects,
            rng,
        )
        .map(|draw| draw.point)
    };

    let mut mean = [0.0f64; 2];
    let mut m2 = [0.0f64; 2];
    for i in 0..n_mc {
        // Real side: one full round.
        let x_t = draw_context(rng);
        let costs_t = frozen.costs(&x_t);
        let q_t = draw_play(&x_t, &costs_t, rng)?;
        let arm = q_t.draw_arm(rng);
        let loss = x_t.dot(&frozen.theta_t.rows[arm]);
        let theta_hat = estimate_theta(
            &x_t,
            arm,
            loss,
            &q_t,
            frozen.sigma_tilde_inv,
            frozen.optimistic,
        )?;
        let comp_real = match comparator {
            GhostComparator::BestArm => {
                x_t.dot(&frozen.theta_t.rows[comparator_arm(frozen.theta_t, &x_t)])
            }
            GhostComparator::MeanPolicy => {
                mixed_loss(&draw_play(&x_t, &costs_t, rng)?, &x_t, frozen.theta_t)
            }
        };
        let real_stat = mixed_loss(&q_t, &x_t, frozen.theta_t) - comp_real;

        // Ghost side: independent context and play draw, realized θ̂_t.
        let x_0 = draw_context(rng);
        let costs_0 = frozen.costs(&x_0);
        let q_0 = draw_play(&x_0, &costs_0, rng)?;
        let comp_ghost = match comparator {
            GhostComparator::BestArm => {
                x_0.dot(&theta_hat.rows[comparator_arm(frozen.theta_t, &x_0)])
            }
            GhostComparator::MeanPolicy => {
                mixed_loss(&draw_play(&x_0, &costs_0, rng)?, &x_0, &theta_hat)
            }
        };
        let ghost_stat = mixed_loss(&q_0, &x_0, &theta_hat) - comp_ghost;

        for (j, value) in [real_stat, ghost_stat].into_iter().enumerate() {
            let delta = value - mean[j];
            mean[j] += delta / (i + 1) as f64;
            m2[j] += delta * (value - mean[j]);
        }
    }
    let nf = n_mc as f64;
    let se = m2.map(|v| (v / (nf - 1.0) / nf).max(0.0).sqrt());
    let real = (mean[0], se[0]);
    let ghost = (mean[1], se[1]);
    let overlap = real.0 - Z_975 * real.1 <= ghost.0 + Z_975 * ghost.1
        && ghost.0 - Z_975 * ghost.1 <= real.0 + Z_975 * real.1;
    Ok(GhostReport { real, ghost, n: n_mc, overlap })
}

/// Which Σ̂⁺ law drives [`mgr_bias_probe`].
#[derive(Debug, Clone, Copy)]
pub enum MgrLaw<'a> {
    /// Fresh M·N resampled pairs per replay — the algorithm's own law.
    Resampled(&'a MgrParams),
    /// The closed-form mean E[Σ̂⁺] — Rao–Blackwellizes the pair noise away so
    /// the probe isolates the depth-truncation bias itself.
    Expected(&'a BlockCovariance),
}

/// Mean and standard error of the ghost-evaluated bias statistic.
#[derive(Debug, Clone, Copy)]
pub struct BiasProbe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Measures the resampling estimator's bias as the mean of
/// Σ_a Q₀_a·⟨X₀, θ_{t,a} − θ̂_{t,a}⟩ over `n_mc` replayed rounds, where
/// (X₀, Q₀) is an independent ghost pair. With [`MgrLaw::Resampled`] every
/// replay spends M·N fresh pairs on its own Σ̂⁺; with [`MgrLaw::Expected`]
/// the analytic mean stands in, which changes no expectation but removes the
/// resampling noise.
pub fn mgr_bias_probe<Dx, Fc>(
    theta_t: &ThetaMatrix,
    mut draw_context: Dx,
    mut costs_fn: Fc,
    cfg: &SamplerConfig,
    law: MgrLaw<'_>,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BiasProbe, EstimatorError>
where
    Dx: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
    Fc: FnMut(&DVector<f64>) -> Vec<f64>,
{
    if n_mc < 2 {
        return Err(EstimatorError::TooFewReplays { need: 2, got: n_mc });
    }
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for i in 0..n_mc {
        // The round itself.
        let x = draw_context(rng);
        let costs = costs_fn(&x);
        let q = sample_exact(&costs, cfg, rng)?;
        let arm = q.draw_arm(rng);
        let loss = x.dot(&theta_t.rows[arm]);
        let owned;
        let sigma_hat = match law {
            MgrLaw::Resampled(params) => {
                let mut pairs = Vec::with_capacity(params.pair_count());
                for _ in 0..params.pair_count() {
                    let xp = draw_context(rng);
                    let cp = costs_fn(&xp);
                    let qp = sample_exact(&cp, cfg, rng)?;
                    pairs.push((xp, qp));
                }
                owned = mgr_inverse(&pairs, params)?;
                &owned
            }
            MgrLaw::Expected(mean_sigma) => mean_sigma,
        };
        let theta_hat = estimate_theta_mgr(&x, arm, loss, &q, sigma_hat)?;

        // Ghost evaluation on an independent (context, play) pair.
        let x0 = draw_context(rng);
        let c0 = costs_fn(&x0);
        let q0 = sample_exact(&c0, cfg, rng)?;
        let value = mixed_loss(&q0, &x0, theta_t) - mixed_loss(&q0, &x0, &theta_hat);

        let delta = value - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (value - mean);
    }
    let nf = n_mc as f64;
    let se = (m2 / (nf - 1.0) / nf).max(0.0).sqrt();
    Ok(BiasProbe { mean, se, n: n_mc })
}
