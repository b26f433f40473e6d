//! Round-by-round learners behind one interface: ContextEW (second- and
//! first-order schedules), Cont²EW with geometric resampling, the LinExp3
//! baseline, and a uniform-random control.
//!
//! Every learner follows the same bandit protocol: `act(x_t)` commits to an
//! arm A_t, `feed(ℓ_t)` delivers the single observed loss ℓ_t(x_t, A_t) and
//! finishes the round's updates. Learners see the context law (they must
//! sample it to estimate covariances) but never the adversary's loss vectors
//! — bandit feedback only.
//!
//! One ContextEW round runs, in order: η_t from the schedule; costs
//! c_a = η_t·⟨x_t, Θ̂_{t−1,a}⟩; Σ_{t,a} estimated from S untruncated plays;
//! Q̃_t drawn by rejection under the truncation event
//! Σ_a Q_a²·x_tᵀΣ_{t,a}⁻¹x_t ≤ dKγ²; A_t ~ Q̃_t; then, once the loss
//! arrives, Σ̃_{t,a} from S truncated plays, θ̂_t from the importance
//! estimator, and the V̂/L̂ counters. The Σ blocks are refreshed once per
//! round, before the rejection loop, and every proposal in that round reuses
//! them.
//!
//! The resampling learner replaces the truncation machinery with the clipped
//! simplex Ω = {q ∈ Δ : q_a ≥ 1/T} and a matrix-geometric-resampling
//! estimate Σ̂⁺_t built from M·N fresh (context, play) pairs.
//!
//! All randomness is drawn from counter-based streams keyed by (master seed,
//! replication, round, purpose), so a replication replays bit-identically
//! regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{
    estimate_sigma, sandwich_check, BlockCovariance, CovarianceError, TruncationSpec,
};
use crate::estimators::{estimate_theta, estimate_theta_mgr, EstimatorError, EstimatorState};
use crate::mgr::{mgr_inverse, mgr_params, symmetric_op_norm, MgrCaps, MgrError};
use crate::problem::{
    stream, ContextDist, Environment, ProblemDims, ProblemError, RegretTrace, RoundDiagnostics,
    RoundRecord, SimplexPoint, StreamPurpose, ThetaMatrix,
};
use crate::rates::{
    first_order_eta, resampling_eta, resampling_precondition, second_order_eta, GVariant,
    RateError, RateState,
};
use crate::sampler::{
    sample_exact, sample_hit_and_run, sample_truncated, SampleMethod, SamplerConfig, SamplerError,
};

/// Largest precondition value the resampling mode accepts:
/// η²·d·σ²·(4/λ_t²)·ln²(1/(ελ_t)) must stay ≤ 1/100.
pub const RESAMPLING_PRECONDITION_LIMIT: f64 = 0.01;

/// Errors raised while stepping a learner; module errors carry the round.
#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("round {round}: {source}")]
    Sampler {
        round: usize,
        #[source]
        source: SamplerError,
    },
    #[error("round {round}: {source}")]
    Covariance {
        round: usize,
        #[source]
        source: CovarianceError,
    },
    #[error("round {round}: {source}")]
    Estimator {
        round: usize,
        #[source]
        source: EstimatorError,
    },
    #[error("round {round}: {source}")]
    Mgr {
        round: usize,
        #[source]
        source: MgrError,
    },
    #[error("round {round}: {source}")]
    Rate {
        round: usize,
        #[source]
        source: RateError,
    },
    #[error(
        "round {round}: resampling precondition value {value:.6} exceeds \
         {RESAMPLING_PRECONDITION_LIMIT} (η too large for the MGR error bound)"
    )]
    PreconditionViolated { round: usize, value: f64 },
    #[error("round {round}: observed loss {loss} is negative but this mode requires ℓ ≥ 0")]
    NegativeLoss { round: usize, loss: f64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Which learner a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// ContextEW with the second-order (variance) learning-rate schedule.
    ContextewSecond,
    /// ContextEW with the first-order (loss) schedule; forces m = 0 and
    /// non-negative losses.
    ContextewFirst,
    /// Cont²EW with matrix geometric resampling over the clipped simplex.
    Resampling,
    /// LinExp3 with explicit exploration γₑ and a fixed learning rate.
    Linexp3,
    /// Uniform-random control; no learning.
    Uniform,
}

/// Flat per-run learner knobs; each mode reads the fields it understands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerSpec {
    /// Monte-Carlo sample count S for every covariance estimation sweep.
    pub s_samples: usize,
    /// Simplex sampler knobs (method, tolerances, clip floor).
    pub sampler: SamplerConfig,
    /// Truncation level γ; `None` uses the 4·ln(10dKT) default.
    pub gamma_override: Option<f64>,
    /// Which closed form of G(V̂) the second-order schedule uses.
    pub g_variant: GVariant,
    /// Rejection budget of the truncated play draw.
    pub max_rejects: usize,
    /// MGR accuracy target ε ∈ (0, 1).
    pub epsilon: f64,
    /// Ceilings on the MGR repeat count / per-round pair budget.
    pub mgr_caps: MgrCaps,
    /// Continue (true) or error (false) when the resampling precondition
    /// value exceeds 1/100.
    pub relax_precondition: bool,
    /// Fixed LinExp3 learning rate; `None` uses √(ln K/(3dKTσ²)).
    pub linexp3_eta: Option<f64>,
    /// LinExp3 exploration mass γₑ ∈ [0, 1].
    pub linexp3_gamma_e: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            s_samples: 512,
            sampler: SamplerConfig::default(),
            gamma_override: None,
            g_variant: GVariant::default(),
            max_rejects: 100,
            epsilon: 0.1,
            mgr_caps: MgrCaps::default(),
            relax_precondition: false,
            linexp3_eta: None,
            linexp3_gamma_e: 0.01,
        }
    }
}

/// The bandit protocol every learner speaks. `act` commits to an arm for the
/// observed context; `feed` delivers the loss of that arm — nothing else —
/// and returns the finished round's diagnostics.
pub trait Learner {
    fn arms(&self) -> usize;
    fn act(&mut self, x: &DVector<f64>) -> Result<usize, AlgorithmError>;
    fn feed(&mut self, loss: f64) -> Result<RoundDiagnostics, AlgorithmError>;
}

/// Builds the learner a mode names, validating the spec against the dims.
pub fn build_learner(
    mode: Mode,
    dims: ProblemDims,
    context: ContextDist,
    spec: &LearnerSpec,
    master_seed: u64,
    replication: u64,
) -> Result<Box<dyn Learner>, AlgorithmError> {
    Ok(match mode {
        Mode::ContextewSecond => Box::new(ContextEw::new(
            dims,
            context,
            spec,
            false,
            master_seed,
            replication,
        )?),
        Mode::ContextewFirst => Box::new(ContextEw::new(
            dims,
            context,
            spec,
            true,
            master_seed,
            replication,
        )?),
        Mode::Resampling => Box::new(Resampling::new(dims, context, spec, master_seed, replication)?),
        Mode::Linexp3 => Box::new(LinExp3::new(dims, context, spec, master_seed, replication)?),
        Mode::Uniform => Box::new(UniformPlay::new(dims, master_seed, replication)?),
    })
}

/// Runs one full replication: draws contexts, steps the learner, records the
/// trace. The loop is strictly sequential — state carries round-to-round
/// dependence — and the adversary's θ_t is resolved before the play lands,
/// so adaptive adversaries react only to rounds 1..t−1.
pub fn drive(
    learner: &mut dyn Learner,
    env: &mut Environment,
    master_seed: u64,
    replication: u64,
) -> Result<RegretTrace, AlgorithmError> {
    let mut trace = RegretTrace::new(env.dims);
    for t in 1..=env.dims.horizon {
        let mut ctx_rng = stream(master_seed, replication, t as u64, StreamPurpose::Context);
        let x = env.draw_context(&mut ctx_rng);
        let theta_t = env.theta_now(t);
        let arm = learner.act(&x)?;
        env.record_play(arm);
        let all_losses = theta_t.losses(&x);
        let loss = all_losses[arm];
        let diagnostics = learner.feed(loss)?;
        trace.push(
            RoundRecord { t, action: arm, all_losses, context: x, diagnostics },
            &theta_t,
        );
    }
    Ok(trace)
}

/// Draws one play Q from p(q) ∝ e^{−⟨q,c⟩} on the (possibly clipped)
/// simplex, by whichever method the config names.
fn draw_play(
    costs: &[f64],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SimplexPoint, SamplerError> {
    match cfg.method {
        SampleMethod::Exact => sample_exact(costs, cfg, rng),
        SampleMethod::HitAndRun => sample_hit_and_run(costs, cfg, rng),
    }
}

/// Per-arm play costs c_a = η·⟨x, Θ̂_a⟩.
fn play_costs(eta: f64, theta_cum: &ThetaMatrix, x: &DVector<f64>) -> Vec<f64> {
    theta_cum.losses(x).into_iter().map(|l| eta * l).collect()
}

// ---------------------------------------------------------------------------
// ContextEW (second- and first-order schedules)
// ---------------------------------------------------------------------------

struct EwPending {
    x: DVector<f64>,
    q: SimplexPoint,
    arm: usize,
    sigma: BlockCovariance,
    eta: f64,
    rejections: usize,
    forced: bool,
    statistic: f64,
}

/// Exponential weights over the simplex with per-round covariance
/// truncation. The second-order schedule drives η_t from V̂; the first-order
/// variant drives it from L̂, forces the anchor m = 0, and insists on
/// non-negative losses. Everything else — sampling, truncation, the
/// importance estimator — is shared.
pub struct ContextEw {
    dims: ProblemDims,
    context: ContextDist,
    sampler: SamplerConfig,
    s_samples: usize,
    max_rejects: usize,
    first_order: bool,
    g_variant: GVariant,
    /// Running Θ̂ and the optimistic anchor m (kept at zero unless set; the
    /// first-order schedule ignores it by contract).
    pub estimator: EstimatorState,
    /// γ, V̂, L̂, and the non-increasing η history.
    pub rates: RateState,
    /// Last round's Σ blocks (untruncated law).
    pub last_sigma: Option<BlockCovariance>,
    /// Last round's Σ̃ blocks (truncated law).
    pub last_sigma_tilde: Option<BlockCovariance>,
    master_seed: u64,
    replication: u64,
    round: usize,
    pending: Option<EwPending>,
}

impl ContextEw {
    pub fn new(
        dims: ProblemDims,
        context: ContextDist,
        spec: &LearnerSpec,
        first_order: bool,
        master_seed: u64,
        replication: u64,
    ) -> Result<Self, AlgorithmError> {
        dims.validate()?;
        context.validate(&dims)?;
        spec.sampler
            .validate(dims.k)
            .map_err(|source| AlgorithmError::Sampler { round: 0, source })?;
        if spec.sampler.clip_floor != 0.0 {
            return Err(AlgorithmError::Config(
                "ContextEW plays on the full simplex; clip_floor must be 0 \
                 (the clipped set Ω belongs to the resampling mode)"
                    .into(),
            ));
        }
        if spec.s_samples < dims.d * dims.k {
            return Err(AlgorithmError::Config(format!(
                "s_samples = {} cannot resolve {} covariance blocks of size {}",
                spec.s_samples, dims.k, dims.d
            )));
        }
        Ok(ContextEw {
            estimator: EstimatorState::new(dims.k, dims.d),
            rates: RateState::new(&dims, spec.gamma_override, spec.g_variant),
            last_sigma: None,
            last_sigma_tilde: None,
            sampler: spec.sampler.clone(),
            s_samples: spec.s_samples,
            max_rejects: spec.max_rejects,
            first_order,
            g_variant: spec.g_variant,
            dims,
            context,
            master_seed,
            replication,
            round: 1,
            pending: None,
        })
    }

    /// 1-based index of the round the learner is currently inside.
    pub fn round(&self) -> usize {
        self.round
    }

    fn rng(&self, purpose: StreamPurpose) -> ChaCha8Rng {
        stream(self.master_seed, self.replication, self.round as u64, purpose)
    }
}

impl Learner for ContextEw {
    fn arms(&self) -> usize {
        self.dims.k
    }

    fn act(&mut self, x: &DVector<f64>) -> Result<usize, AlgorithmError> {
        if self.pending.is_some() {
            return Err(AlgorithmError::Protocol(
                "act called again before feed delivered the last loss".into(),
            ));
        }
        let t = self.round;
        let eta = if self.first_order {
            first_order_eta(self.rates.l_hat, &self.dims, self.rates.gamma)
                .map_err(|source| AlgorithmError::Rate { round: t, source })?
        } else {
            second_order_eta(self.rates.v_hat, &self.dims, self.rates.gamma, self.g_variant)
        };
        self.rates.record_eta(eta);

        let context = &self.context;
        let dims = &self.dims;
        let theta_cum = &self.estimator.cumulative;
        let mut sigma_rng = self.rng(StreamPurpose::SigmaEstimate);
        let sigma = estimate_sigma(
            |r| context.draw(dims, r),
            |xp| play_costs(eta, theta_cum, xp),
            &self.sampler,
            self.s_samples,
            None,
            &mut sigma_rng,
        )
        .map_err(|source| AlgorithmError::Covariance { round: t, source })?
        .cov;

        let costs = play_costs(eta, theta_cum, x);
        let mut play_rng = self.rng(StreamPurpose::PlayDraw);
        let draw = sample_truncated(
            &costs,
            &self.sampler,
            &sigma,
            x,
            self.rates.gamma,
            self.max_rejects,
            &mut play_rng,
        )
        .map_err(|source| AlgorithmError::Sampler { round: t, source })?;
        let ceiling = (self.dims.d * self.dims.k) as f64 * self.rates.gamma * self.rates.gamma;
        assert!(
            draw.forced || draw.statistic <= ceiling,
            "round {t}: accepted Q̃ violates the truncation event: {} > {ceiling}",
            draw.statistic,
        );

        let mut arm_rng = self.rng(StreamPurpose::ArmDraw);
        let arm = draw.point.draw_arm(&mut arm_rng);
        self.pending = Some(EwPending {
            x: x.clone(),
            q: draw.point,
            arm,
            sigma,
            eta,
            rejections: draw.rejections,
            forced: draw.forced,
            statistic: draw.statistic,
        });
        Ok(arm)
    }

    fn feed(&mut self, loss: f64) -> Result<RoundDiagnostics, AlgorithmError> {
        let t = self.round;
        let pending = self.pending.take().ok_or_else(|| {
            AlgorithmError::Protocol("feed called with no arm committed".into())
        })?;
        if self.first_order && loss < 0.0 {
            return Err(AlgorithmError::NegativeLoss { round: t, loss });
        }

        let context = &self.context;
        let dims = &self.dims;
        let theta_cum = &self.estimator.cumulative;
        let eta = pending.eta;
        let mut tilde_rng = self.rng(StreamPurpose::SigmaTruncatedEstimate);
        let sigma_tilde = estimate_sigma(
            |r| context.draw(dims, r),
            |xp| play_costs(eta, theta_cum, xp),
            &self.sampler,
            self.s_samples,
            Some(TruncationSpec {
                sigma: &pending.sigma,
                gamma: self.rates.gamma,
                max_rejects: self.max_rejects,
            }),
            &mut tilde_rng,
        )
        .map_err(|source| AlgorithmError::Covariance { round: t, source })?
        .cov;

        let tilde_inv = sigma_tilde
            .inverted()
            .map_err(|source| AlgorithmError::Covariance { round: t, source })?;
        let anchor = if self.first_order {
            ThetaMatrix::zeros(self.dims.k, self.dims.d)
        } else {
            self.estimator.optimistic.clone()
        };
        let theta_hat = estimate_theta(
            &pending.x,
            pending.arm,
            loss,
            &pending.q,
            &tilde_inv,
            &anchor,
        )
        .map_err(|source| AlgorithmError::Estimator { round: t, source })?;
        self.estimator.accumulate(&theta_hat);

        let residual = loss - anchor.rows[pending.arm].dot(&pending.x);
        self.rates.update_v(residual * residual);
        self.rates.update_l(loss);

        let sandwich = sandwich_check(&pending.sigma, &sigma_tilde)
            .map_err(|source| AlgorithmError::Covariance { round: t, source })?;
        self.last_sigma = Some(pending.sigma);
        self.last_sigma_tilde = Some(sigma_tilde);
        self.round += 1;
        Ok(RoundDiagnostics {
            eta,
            rejections: pending.rejections as u32,
            forced_accept: pending.forced,
            mgr_capped: false,
            mahalanobis: pending.statistic,
            sandwich: Some(sandwich),
            variance_proxy: pending.statistic,
            mgr_pairs: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// Cont²EW with matrix geometric resampling
// ---------------------------------------------------------------------------

struct ResamplingPending {
    x: DVector<f64>,
    q: SimplexPoint,
    arm: usize,
    eta: f64,
}

/// Exponential weights over the clipped simplex Ω = {q : q_a ≥ 1/T} with the
/// MGR inverse-covariance estimate in place of truncation. Requires
/// non-negative losses (its schedule is first-order).
pub struct Resampling {
    dims: ProblemDims,
    context: ContextDist,
    sampler: SamplerConfig,
    epsilon: f64,
    caps: MgrCaps,
    relax_precondition: bool,
    g_variant: GVariant,
    pub estimator: EstimatorState,
    pub rates: RateState,
    /// Last round's Σ̂⁺ blocks.
    pub last_sigma_plus: Option<BlockCovariance>,
    master_seed: u64,
    replication: u64,
    round: usize,
    pending: Option<ResamplingPending>,
}

impl Resampling {
    pub fn new(
        dims: ProblemDims,
        context: ContextDist,
        spec: &LearnerSpec,
        master_seed: u64,
        replication: u64,
    ) -> Result<Self, AlgorithmError> {
        dims.validate()?;
        context.validate(&dims)?;
        let mut sampler = spec.sampler.clone();
        // The play set is Ω with floor exactly 1/T, whatever the config says.
        sampler.clip_floor = 1.0 / dims.horizon as f64;
        sampler
            .validate(dims.k)
            .map_err(|source| AlgorithmError::Sampler { round: 0, source })?;
        if !(spec.epsilon > 0.0 && spec.epsilon < 1.0) {
            return Err(AlgorithmError::Config(format!(
                "MGR accuracy ε must lie in (0, 1), got {}",
                spec.epsilon
            )));
        }
        if dims.sigma * dims.sigma > 2.0 {
            return Err(AlgorithmError::Config(format!(
                "σ² = {} > 2 breaks the MGR contraction q²‖x‖² ≤ 1/c",
                dims.sigma * dims.sigma
            )));
        }
        Ok(Resampling {
            estimator: EstimatorState::new(dims.k, dims.d),
            rates: RateState::new(&dims, spec.gamma_override, spec.g_variant),
            last_sigma_plus: None,
            sampler,
            epsilon: spec.epsilon,
            caps: spec.mgr_caps,
            relax_precondition: spec.relax_precondition,
            g_variant: spec.g_variant,
            dims,
            context,
            master_seed,
            replication,
            round: 1,
            pending: None,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    fn rng(&self, purpose: StreamPurpose) -> ChaCha8Rng {
        stream(self.master_seed, self.replication, self.round as u64, purpose)
    }
}

impl Learner for Resampling {
    fn arms(&self) -> usize {
        self.dims.k
    }

    fn act(&mut self, x: &DVector<f64>) -> Result<usize, AlgorithmError> {
        if self.pending.is_some() {
            return Err(AlgorithmError::Protocol(
                "act called again before feed delivered the last loss".into(),
            ));
        }
        let t = self.round;
        let eta = resampling_eta(self.rates.l_hat, &self.dims, self.g_variant);
        self.rates.record_eta(eta);

        let costs = play_costs(eta, &self.estimator.cumulative, x);
        let mut play_rng = self.rng(StreamPurpose::PlayDraw);
        let q = draw_play(&costs, &self.sampler, &mut play_rng)
            .map_err(|source| AlgorithmError::Sampler { round: t, source })?;
        let mut arm_rng = self.rng(StreamPurpose::ArmDraw);
        let arm = q.draw_arm(&mut arm_rng);
        self.pending = Some(ResamplingPending { x: x.clone(), q, arm, eta });
        Ok(arm)
    }

    fn feed(&mut self, loss: f64) -> Result<RoundDiagnostics, AlgorithmError> {
        let t = self.round;
        let pending = self.pending.take().ok_or_else(|| {
            AlgorithmError::Protocol("feed called with no arm committed".into())
        })?;
        if loss < 0.0 {
            return Err(AlgorithmError::NegativeLoss { round: t, loss });
        }

        let params = mgr_params(
            self.rates.l_hat,
            &self.dims,
            self.epsilon,
            self.dims.horizon as f64,
        )
        .map_err(|source| AlgorithmError::Mgr { round: t, source })?
        .with_caps(&self.caps);
        let precondition =
            resampling_precondition(pending.eta, &self.dims, params.lambda_t, self.epsilon);
        if precondition > RESAMPLING_PRECONDITION_LIMIT && !self.relax_precondition {
            return Err(AlgorithmError::PreconditionViolated { round: t, value: precondition });
        }

        let eta = pending.eta;
        let context = &self.context;
        let dims = &self.dims;
        let theta_cum = &self.estimator.cumulative;
        let mut pair_rng = self.rng(StreamPurpose::MgrPairs);
        let mut pairs = Vec::with_capacity(params.pair_count());
        for _ in 0..params.pair_count() {
            let xi = context.draw(dims, &mut pair_rng);
            let qi = draw_play(&play_costs(eta, theta_cum, &xi), &self.sampler, &mut pair_rng)
                .map_err(|source| AlgorithmError::Sampler { round: t, source })?;
            pairs.push((xi, qi));
        }
        let sigma_plus = mgr_inverse(&pairs, &params)
            .map_err(|source| AlgorithmError::Mgr { round: t, source })?;
        let bound = params.cov_norm1_bound();
        for (a, block) in sigma_plus.blocks().iter().enumerate() {
            let norm = symmetric_op_norm(block);
            assert!(
                norm <= bound * (1.0 + 1e-9),
                "round {t}: ‖Σ̂⁺_{a}‖ = {norm} exceeds the series bound {bound}",
            );
        }

        let theta_hat =
            estimate_theta_mgr(&pending.x, pending.arm, loss, &pending.q, &sigma_plus)
                .map_err(|source| AlgorithmError::Estimator { round: t, source })?;
        self.estimator.accumulate(&theta_hat);
        self.rates.update_v(loss * loss);
        self.rates.update_l(loss);
        self.last_sigma_plus = Some(sigma_plus);
        self.round += 1;
        Ok(RoundDiagnostics {
            eta,
            rejections: 0,
            forced_accept: false,
            mgr_capped: params.capped,
            mahalanobis: 0.0,
            sandwich: None,
            variance_proxy: precondition,
            mgr_pairs: params.pair_count(),
        })
    }
}

// ---------------------------------------------------------------------------
// LinExp3 baseline
// ---------------------------------------------------------------------------

struct LinExp3Pending {
    x: DVector<f64>,
    arm: usize,
    s_inverses: Vec<DMatrix<f64>>,
    proxy: f64,
}

/// LinExp3: softmax weights w_t(x, a) = e^{−η·⟨x, Θ̂_{t−1,a}⟩} mixed with
/// uniform exploration, π_t(a|x) = (1−γₑ)·w/Σw + γₑ/K, and the exploration
/// matrix S_{t,a} = E[π_t(a|X)·XXᵀ] driving the unweighted importance
/// estimator θ̃_{t,a} = 1{A_t=a}·S_{t,a}⁻¹·x·ℓ. The per-round diagnostic
/// max_a x_tᵀS_{t,a}⁻¹x_t is the variance proxy the covariance-truncated
/// algorithms keep bounded and this one does not.
pub struct LinExp3 {
    dims: ProblemDims,
    context: ContextDist,
    s_samples: usize,
    eta: f64,
    gamma_e: f64,
    pub estimator: EstimatorState,
    master_seed: u64,
    replication: u64,
    round: usize,
    pending: Option<LinExp3Pending>,
}

impl LinExp3 {
    pub fn new(
        dims: ProblemDims,
        context: ContextDist,
        spec: &LearnerSpec,
        master_seed: u64,
        replication: u64,
    ) -> Result<Self, AlgorithmError> {
        dims.validate()?;
        context.validate(&dims)?;
        if !(0.0..=1.0).contains(&spec.linexp3_gamma_e) {
            return Err(AlgorithmError::Config(format!(
                "LinExp3 exploration γₑ must lie in [0, 1], got {}",
                spec.linexp3_gamma_e
            )));
        }
        if spec.s_samples == 0 {
            return Err(AlgorithmError::Config("s_samples must be ≥ 1".into()));
        }
        let eta = spec.linexp3_eta.unwrap_or_else(|| {
            let denom = 3.0
                * dims.d as f64
                * dims.k as f64
                * dims.horizon as f64
                * dims.sigma
                * dims.sigma;
            ((dims.k as f64).ln() / denom).sqrt()
        });
        if !(eta > 0.0) {
            return Err(AlgorithmError::Config(format!(
                "LinExp3 learning rate must be positive, got {eta}"
            )));
        }
        Ok(LinExp3 {
            estimator: EstimatorState::new(dims.k, dims.d),
            s_samples: spec.s_samples,
            eta,
            gamma_e: spec.linexp3_gamma_e,
            dims,
            context,
            master_seed,
            replication,
            round: 1,
            pending: None,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// The fixed learning rate in force.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// π_t(·|x): softmax of −η·⟨x, Θ̂_a⟩ mixed with γₑ of uniform.
    pub fn policy(&self, x: &DVector<f64>) -> Vec<f64> {
        let scores = self.estimator.cumulative.losses(x);
        let min_score = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> =
            scores.iter().map(|s| (-self.eta * (s - min_score)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let k = self.dims.k as f64;
        let mut pi: Vec<f64> =
            weights.iter().map(|w| (1.0 - self.gamma_e) * w / total + self.gamma_e / k).collect();
        let mass: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= mass;
        }
        pi
    }

    fn rng(&self, purpose: StreamPurpose) -> ChaCha8Rng {
        stream(self.master_seed, self.replication, self.round as u64, purpose)
    }
}

impl Learner for LinExp3 {
    fn arms(&self) -> usize {
        self.dims.k
    }

    fn act(&mut self, x: &DVector<f64>) -> Result<usize, AlgorithmError> {
        if self.pending.is_some() {
            return Err(AlgorithmError::Protocol(
                "act called again before feed delivered the last loss".into(),
            ));
        }
        let t = self.round;
        let pi = self.policy(x);
        let pi_point = SimplexPoint::new(pi)?;
        let mut arm_rng = self.rng(StreamPurpose::ArmDraw);
        let arm = pi_point.draw_arm(&mut arm_rng);

        // S_{t,a} = E[π_t(a|X)·XXᵀ] by Monte-Carlo over fresh contexts.
        let d = self.dims.d;
        let k = self.dims.k;
        let mut blocks = vec![DMatrix::<f64>::zeros(d, d); k];
        let mut mc_rng = self.rng(StreamPurpose::SigmaEstimate);
        for _ in 0..self.s_samples {
            let xi = self.context.draw(&self.dims, &mut mc_rng);
            let pi_i = self.policy(&xi);
            let outer = &xi * xi.transpose();
            for a in 0..k {
                blocks[a] += &outer * pi_i[a];
            }
        }
        let inv_s = 1.0 / self.s_samples as f64;
        let mut s_inverses = Vec::with_capacity(k);
        let mut proxy = 0.0f64;
        for block in blocks.iter() {
            let sym = (block + block.transpose()) * (0.5 * inv_s);
            let inv = crate::covariance::invert_block(&sym)
                .map_err(|source| AlgorithmError::Covariance { round: t, source })?;
            proxy = proxy.max((x.transpose() * &inv * x)[(0, 0)]);
            s_inverses.push(inv);
        }
        self.pending = Some(LinExp3Pending { x: x.clone(), arm, s_inverses, proxy });
        Ok(arm)
    }

    fn feed(&mut self, loss: f64) -> Result<RoundDiagnostics, AlgorithmError> {
        let pending = self.pending.take().ok_or_else(|| {
            AlgorithmError::Protocol("feed called with no arm committed".into())
        })?;
        let mut theta_hat = ThetaMatrix::zeros(self.dims.k, self.dims.d);
        theta_hat.rows[pending.arm] = &pending.s_inverses[pending.arm] * &pending.x * loss;
        self.estimator.accumulate(&theta_hat);
        self.round += 1;
        Ok(RoundDiagnostics {
            eta: self.eta,
            variance_proxy: pending.proxy,
            ..RoundDiagnostics::default()
        })
    }
}

// ---------------------------------------------------------------------------
// Uniform control
// ---------------------------------------------------------------------------

/// Plays every arm with probability 1/K and learns nothing.
pub struct UniformPlay {
    dims: ProblemDims,
    master_seed: u64,
    replication: u64,
    round: usize,
    pending: bool,
}

impl UniformPlay {
    pub fn new(
        dims: ProblemDims,
        master_seed: u64,
        replication: u64,
    ) -> Result<Self, AlgorithmError> {
        dims.validate()?;
        Ok(UniformPlay { dims, master_seed, replication, round: 1, pending: false })
    }
}

impl Learner for UniformPlay {
    fn arms(&self) -> usize {
        self.dims.k
    }

    fn act(&mut self, _x: &DVector<f64>) -> Result<usize, AlgorithmError> {
        if self.pending {
            return Err(AlgorithmError::Protocol(
                "act called again before feed delivered the last loss".into(),
            ));
        }
        let mut rng = stream(
            self.master_seed,
            self.replication,
            self.round as u64,
            StreamPurpose::ArmDraw,
        );
        self.pending = true;
        Ok(SimplexPoint::uniform(self.dims.k).draw_arm(&mut rng))
    }

    fn feed(&mut self, _loss: f64) -> Result<RoundDiagnostics, AlgorithmError> {
        if !self.pending {
            return Err(AlgorithmError::Protocol("feed called with no arm committed".into()));
        }
        self.pending = false;
        self.round += 1;
        Ok(RoundDiagnostics::default())
    }
}
