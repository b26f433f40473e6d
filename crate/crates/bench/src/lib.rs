//! Shared fixtures for the hot-path benchmarks: representative cost vectors,
//! a mid-run covariance state, and the sampler/problem configuration the
//! benches drive.

use contextew::covariance::{estimate_sigma, BlockCovariance};
use contextew::problem::{ContextDist, ProblemDims};
use contextew::sampler::SamplerConfig;
use rand_chacha::ChaCha8Rng;

/// Distinct, mildly spread costs for K = 8 — the shape the partial-fraction
/// table sees mid-run (all poles separate).
pub fn spread_costs() -> Vec<f64> {
    (0..8).map(|a| 0.6 * a as f64 + 0.05 * (a as f64).sin()).collect()
}

/// Dimensions and context law of the benchmark instance (d = 2, K = 3).
pub fn bench_instance() -> (ProblemDims, ContextDist, Vec<f64>) {
    let dims = ProblemDims { d: 2, k: 3, horizon: 10_000, sigma: 1.0, r: 1.0 };
    let context = ContextDist::UniformBox { lo: vec![0.1, -0.5], hi: vec![0.7, 0.5] };
    let costs = vec![0.9, 0.3, 0.0];
    (dims, context, costs)
}

/// A Σ estimate for the benchmark instance, reused as the truncation
/// reference so the sampler benches exercise the full rejection path.
pub fn bench_sigma(rng: &mut ChaCha8Rng) -> BlockCovariance {
    let (dims, context, costs) = bench_instance();
    estimate_sigma(
        |r| context.draw(&dims, r),
        |_| costs.clone(),
        &SamplerConfig::default(),
        2000,
        None,
        rng,
    )
    .expect("benchmark Σ estimate")
    .cov
}
