//! Adaptive learning-rate schedules and the Freedman-style concentration
//! quantities they depend on.
//!
//! Three schedules share one shape, η_t = (base + scale·(hat + 1 + slack))^{−1/2},
//! differing in which empirical sum drives them:
//!
//! - second-order: η_t = (100dKγ² + d(V̂_{t−1} + 1 + G_{t−1}))^{−1/2} with the
//!   variance proxy V̂_t = Σ_s (ℓ_s − ⟨X_s, m_{s,A_s}⟩)²;
//! - first-order: η_t = (100dγ² + dK(L̂_{t−1} + 1 + H_{t−1}))^{−1/2} with the
//!   cumulative loss L̂_t = Σ_s ℓ_s (the γ-term really carries no K — the two
//!   displays are asymmetric and are implemented verbatim);
//! - resampling: η_t = (1/10)·(2dK(L̂_{t−1} + 1 + G_{t−1}))^{−1/2}, where G is
//!   the second-order slack driven by L̂ in place of V̂ (the source display
//!   leaves G undefined for this schedule; the substitution mirrors H's role
//!   in the first-order tuning and is a deliberate, flagged choice).
//!
//! All logarithms are natural, and concentration terms fix δ = 1/T. Every
//! schedule is non-increasing along any realized run because the driving sums
//! only grow; [`RateState::record_eta`] turns that requirement into a hard
//! assertion, since the exponential-weights regret lemma assumes η_{t+1} ≤ η_t.

use thiserror::Error;

use crate::problem::ProblemDims;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("first-order schedule needs nonnegative cumulative loss, got {0}")]
    NegativeLoss(f64),
}

/// Which form of the second-order slack G_t to use. The two differ only in
/// the factor multiplying V̂ inside the square root (ln(2T²) in the main
/// display, 2·lnT in the appendix proof); they agree at V̂ = 0. Constants of
/// this kind only move low-order regret terms, but determinism requires
/// picking one — the main-text form is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GVariant {
    #[default]
    MainText,
    Appendix,
}

/// Which rearranged Freedman display to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreedmanKind {
    /// V_t ≤ V̂_t + 8√(V̂_t·l + 72·l²) + 88·l.
    Variance,
    /// L_t ≤ L̂_t + 8√(L̂_t·l + 20·l²) + 36·l.
    Loss,
}

/// Default truncation level γ = 4·ln(10dKT).
pub fn default_gamma(dims: &ProblemDims) -> f64 {
    4.0 * (10.0 * dims.d as f64 * dims.k as f64 * dims.horizon as f64).ln()
}

/// Second-order slack G(V̂) = 8·√(V̂·ln(2T²) + 144·ln²T) + 176·lnT
/// (main text), or with 2·V̂·lnT inside the root (appendix).
/// G(0) = 272·lnT under both variants.
pub fn second_order_g(v_hat: f64, horizon: usize, variant: GVariant) -> f64 {
    debug_assert!(v_hat >= 0.0);
    let ln_t = (horizon as f64).ln();
    let v_factor = match variant {
        GVariant::MainText => (2.0 * (horizon as f64) * (horizon as f64)).ln(),
        GVariant::Appendix => 2.0 * ln_t,
    };
    8.0 * (v_hat * v_factor + 144.0 * ln_t * ln_t).sqrt() + 176.0 * ln_t
}

/// First-order slack H(L̂) = 8·√(2·L̂·lnT + 40·ln²T) + 72·lnT;
/// H(0) = (8√40 + 72)·lnT ≈ 122.6·lnT.
pub fn first_order_h(l_hat: f64, horizon: usize) -> f64 {
    debug_assert!(l_hat >= 0.0);
    let ln_t = (horizon as f64).ln();
    8.0 * (2.0 * l_hat * ln_t + 40.0 * ln_t * ln_t).sqrt() + 72.0 * ln_t
}

/// η_t = (100dKγ² + d(V̂_{t−1} + 1 + G_{t−1}))^{−1/2}.
pub fn second_order_eta(
    v_hat_prev: f64,
    dims: &ProblemDims,
    gamma: f64,
    variant: GVariant,
) -> f64 {
    assert!(v_hat_prev >= 0.0, "V̂ is a sum of squares, got {v_hat_prev}");
    let d = dims.d as f64;
    let k = dims.k as f64;
    let g = second_order_g(v_hat_prev, dims.horizon, variant);
    (100.0 * d * k * gamma * gamma + d * (v_hat_prev + 1.0 + g)).powf(-0.5)
}

/// η_t = (100dγ² + dK(L̂_{t−1} + 1 + H_{t−1}))^{−1/2}.
///
/// The first-order mode requires nonnegative losses, so a negative running
/// L̂ signals a misconfigured environment rather than a schedule input.
pub fn first_order_eta(
    l_hat_prev: f64,
    dims: &ProblemDims,
    gamma: f64,
) -> Result<f64, RateError> {
    if l_hat_prev < 0.0 {
        return Err(RateError::NegativeLoss(l_hat_prev));
    }
    let d = dims.d as f64;
    let k = dims.k as f64;
    let h = first_order_h(l_hat_prev, dims.horizon);
    Ok((100.0 * d * gamma * gamma + d * k * (l_hat_prev + 1.0 + h)).powf(-0.5))
}

/// η_t = (1/10)·(2dK(L̂_{t−1} + 1 + G_{t−1}))^{−1/2}, with G driven by L̂.
pub fn resampling_eta(l_hat_prev: f64, dims: &ProblemDims, variant: GVariant) -> f64 {
    assert!(l_hat_prev >= 0.0, "resampling schedule needs L̂ ≥ 0, got {l_hat_prev}");
    let d = dims.d as f64;
    let k = dims.k as f64;
    let g = second_order_g(l_hat_prev, dims.horizon, variant);
    0.1 * (2.0 * d * k * (l_hat_prev + 1.0 + g)).powf(-0.5)
}

/// Upper confidence value of the chosen rearranged Freedman display at
/// confidence weight `ln_inv_delta` = ln(2T/δ).
pub fn freedman_bound(hat_sum: f64, ln_inv_delta: f64, kind: FreedmanKind) -> f64 {
    debug_assert!(hat_sum >= 0.0 && ln_inv_delta > 0.0);
    let l = ln_inv_delta;
    match kind {
        FreedmanKind::Variance => {
            hat_sum + 8.0 * (hat_sum * l + 72.0 * l * l).sqrt() + 88.0 * l
        }
        FreedmanKind::Loss => hat_sum + 8.0 * (hat_sum * l + 20.0 * l * l).sqrt() + 36.0 * l,
    }
}

/// The quadratic-approximation precondition value
/// η²·d·σ²·(4/λ²)·ln²(1/(ελ)) — the resampling schedule must keep it ≤ 1/100.
pub fn resampling_precondition(
    eta: f64,
    dims: &ProblemDims,
    lambda_t: f64,
    epsilon: f64,
) -> f64 {
    let d = dims.d as f64;
    let sigma = dims.sigma;
    let log_term = (1.0 / (epsilon * lambda_t)).ln();
    eta * eta * d * sigma * sigma * (4.0 / (lambda_t * lambda_t)) * log_term * log_term
}

/// Learning-rate bookkeeping for one run: the driving sums, the truncation
/// level, and the realized η sequence.
#[derive(Debug, Clone)]
pub struct RateState {
    /// Running Σ_s (ℓ_s − ⟨X_s, m_{s,A_s}⟩)²; never decreases.
    pub v_hat: f64,
    /// Running Σ_s ℓ_s.
    pub l_hat: f64,
    /// Truncation level γ; 4·ln(10dKT) unless overridden.
    pub gamma: f64,
    /// Realized η_1, η_2, …; non-increasing by hard assertion.
    pub eta_history: Vec<f64>,
    /// Which G form the second-order/resampling schedules use.
    pub g_variant: GVariant,
}

impl RateState {
    pub fn new(dims: &ProblemDims, gamma_override: Option<f64>, g_variant: GVariant) -> Self {
        RateState {
            v_hat: 0.0,
            l_hat: 0.0,
            gamma: gamma_override.unwrap_or_else(|| default_gamma(dims)),
            eta_history: Vec::new(),
            g_variant,
        }
    }

    /// Appends one realized η, asserting the schedule never increased.
    /// Each schedule is a monotone composition of the non-decreasing driving
    /// sum, so a violation means corrupted state, not rounding.
    pub fn record_eta(&mut self, eta: f64) {
        assert!(eta > 0.0, "learning rate must be positive, got {eta}");
        if let Some(&last) = self.eta_history.last() {
            assert!(
                eta <= last,
                "learning rate increased: η_t = {eta} after η_{{t−1}} = {last}",
            );
        }
        self.eta_history.push(eta);
    }

    /// Adds one squared optimistic residual to V̂.
    pub fn update_v(&mut self, residual_sq: f64) {
        assert!(residual_sq >= 0.0, "squared residual must be ≥ 0, got {residual_sq}");
        self.v_hat += residual_sq;
    }

    /// Adds one realized loss to L̂.
    pub fn update_l(&mut self, loss: f64) {
        self.l_hat += loss;
    }

    /// Last recorded η, if any round has run.
    pub fn current_eta(&self) -> Option<f64> {
        self.eta_history.last().copied()
    }
}
