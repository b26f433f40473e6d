//! Continuous exponential weights for adversarial linear contextual bandits.
//!
//! The library is organised around the round structure of the algorithms it
//! implements:
//!
//! - [`problem`]: problem dimensions, context distributions, adversaries,
//!   losses, the comparator policy and regret traces.
//! - [`partition`]: the partition function Z(c) = ∫_Δ exp(−⟨c,q⟩) dq of
//!   log-linear densities on the simplex, via partial fractions of the
//!   Laplace transform, plus an independent adaptive-quadrature route.
//! - [`sampler`]: exact inverse-CDF sampling of those densities (with
//!   optional coordinate clipping), hit-and-run MCMC as a cross-check, and
//!   rejection sampling onto the truncation event.
//! - [`covariance`]: per-arm second-moment blocks Σ_a = E[Q_a²·XXᵀ], their
//!   inverses, the Mahalanobis truncation statistic, and the truncated-vs-
//!   untruncated eigenvalue sandwich.
//! - [`mgr`]: matrix geometric resampling — a sample-based estimator of
//!   Σ⁻¹ built from products of (I − c·Y) factors.
//! - [`estimators`]: the unbiased loss-vector estimators fed by the above.
//! - [`rates`]: adaptive learning-rate schedules (second-order, first-order,
//!   resampling) and Freedman-style confidence envelopes.
//! - [`algorithms`]: the learners (ContextEW in both tunings, the clipped
//!   resampling variant, LinExp3, uniform baseline).
//! - [`harness`]: TOML-configured replication runner with CSV traces.
//! - [`oracles`]: independent verifiers (Monte-Carlo moments, KS and
//!   chi-square tests, Gauss-Jordan inversion) used by the test suite.

pub mod algorithms;
pub mod covariance;
pub mod estimators;
pub mod harness;
pub mod mgr;
pub mod oracles;
pub mod partition;
pub mod problem;
pub mod rates;
pub mod sampler;

pub use problem::{Adversary, ContextDist, EnvironmentSpec, ProblemDims};
