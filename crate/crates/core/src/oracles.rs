//! Independent brute-force verifiers backing the statistical test-suite and
//! the `diagnose`/`sample-test` CLI paths: Monte-Carlo moment estimation with
//! standard errors, one- and two-sample Kolmogorov–Smirnov tests, a χ²
//! goodness-of-fit test for binned grids, a Gauss–Jordan dense inverse, and a
//! quadrature-backed marginal CDF for log-linear laws on the simplex.
//!
//! None of these share arithmetic with the primary code paths they check: the
//! marginal CDF rides on the nested-convolution quadrature twin rather than
//! the partial-fraction tables, and the Gauss–Jordan inverse avoids the
//! eigendecomposition route used by the covariance module.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::partition::{self, PartitionError};

/// Failure modes of the verification helpers.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("statistic produced a non-finite value at draw {draw}")]
    NonFiniteStatistic { draw: usize },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("empty sample passed to a two-sample test")]
    EmptySample,
    #[error("expected count {count:.3} in cell {cell} is below the χ² floor of 5")]
    ExpectedCountTooSmall { cell: usize, count: f64 },
    #[error("χ² test needs at least two cells")]
    TooFewCells,
    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {col})")]
    SingularMatrix { col: usize, pivot: f64 },
    #[error("marginal CDF table: arm {arm} out of range for {arms} costs")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

// ---------------------------------------------------------------------------
// Monte-Carlo moments
// ---------------------------------------------------------------------------

/// Empirical mean of a vector statistic with elementwise standard errors.
#[derive(Debug, Clone)]
pub struct MonteCarloEstimate {
    /// Elementwise sample mean.
    pub mean: DVector<f64>,
    /// Elementwise standard error: sample σ / √n.
    pub se: DVector<f64>,
    /// Number of draws.
    pub n: usize,
}

impl MonteCarloEstimate {
    /// Mean and SE of a one-dimensional statistic.
    pub fn scalar(&self) -> (f64, f64) {
        (self.mean[0], self.se[0])
    }

    /// True when every component satisfies |mean − target| ≤ k·SE.
    ///
    /// A tiny absolute floor keeps exact-constant components (SE = 0) from
    /// failing on representation noise.
    pub fn within(&self, target: &DVector<f64>, k_sigma: f64) -> bool {
        self.mean
            .iter()
            .zip(self.se.iter())
            .zip(target.iter())
            .all(|((&m, &s), &t)| (m - t).abs() <= k_sigma * s + 1e-12)
    }

    /// Largest componentwise |mean − target| / SE, with the same SE floor.
    pub fn worst_sigma(&self, target: &DVector<f64>) -> f64 {
        self.mean
            .iter()
            .zip(self.se.iter())
            .zip(target.iter())
            .map(|((&m, &s), &t)| (m - t).abs() / (s + 1e-12 / 4.0))
            .fold(0.0, f64::max)
    }
}

/// Empirical mean and SE of `statistic(draw)` over `n` independent draws.
///
/// Accumulates with Welford's method, so a single pass is numerically stable
/// even when the statistic has a large mean and small variance.
pub fn mc_moment<R, T, D, S>(
    mut draw: D,
    statistic: S,
    n: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate, OracleError>
where
    R: Rng + ?Sized,
    D: FnMut(&mut R) -> T,
    S: Fn(&T) -> DVector<f64>,
{
    if n < 2 {
        return Err(OracleError::TooFewSamples { need: 2, got: n });
    }
    let first = statistic(&draw(rng));
    if first.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFiniteStatistic { draw: 0 });
    }
    let dim = first.len();
    let mut mean = first;
    let mut m2 = DVector::zeros(dim);
    for i in 1..n {
        let x = statistic(&draw(rng));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteStatistic { draw: i });
        }
        let count = (i + 1) as f64;
        for j in 0..dim {
            let delta = x[j] - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (x[j] - mean[j]);
        }
    }
    let nf = n as f64;
    let se = m2.map(|v: f64| (v / (nf - 1.0) / nf).max(0.0).sqrt());
    Ok(MonteCarloEstimate { mean, se, n })
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov
// ---------------------------------------------------------------------------

/// KS statistic together with its asymptotic p-value.
#[derive(Debug, Clone, Copy)]
pub struct KsOutcome {
    /// Supremum distance between the compared distribution functions.
    pub statistic: f64,
    /// Two-sided p-value from the Kolmogorov asymptotic series.
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail P(D > d) at effective sample size `n_eff`,
/// with Stephens' finite-sample correction
/// λ = (√n + 0.12 + 0.11/√n)·d and Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}.
pub fn kolmogorov_p(statistic: f64, n_eff: f64) -> f64 {
    let sqrt_n = n_eff.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-14 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn one_sample_ks(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
) -> Result<KsOutcome, OracleError> {
    if samples.is_empty() {
        return Err(OracleError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(KsOutcome { statistic: d, p_value: kolmogorov_p(d, n) })
}

/// Two-sample KS test with effective size nm/(n+m).
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsOutcome, OracleError> {
    if a.is_empty() || b.is_empty() {
        return Err(OracleError::EmptySample);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let xa = sa[i];
        let xb = sb[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok(KsOutcome { statistic: d, p_value: kolmogorov_p(d, n_eff) })
}

// ---------------------------------------------------------------------------
// χ² goodness of fit
// ---------------------------------------------------------------------------

/// χ² statistic and p-value for binned observations.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareOutcome {
    /// Pearson statistic Σ (O − E)²/E.
    pub statistic: f64,
    /// Degrees of freedom (cells − 1).
    pub dof: usize,
    /// Upper-tail p-value.
    pub p_value: f64,
}

/// Pearson χ² test of observed counts against expected counts.
///
/// Expected counts are rescaled to the observed total; every rescaled cell
/// must hold at least 5 expected observations. Degrees of freedom are
/// cells − 1 (no parameters fitted from the data).
pub fn chi_square_gof(
    observed: &[u64],
    expected: &[f64],
) -> Result<ChiSquareOutcome, OracleError> {
    if observed.len() < 2 || observed.len() != expected.len() {
        return Err(OracleError::TooFewCells);
    }
    let total_obs: u64 = observed.iter().sum();
    let total_exp: f64 = expected.iter().sum();
    let scale = total_obs as f64 / total_exp;
    let mut statistic = 0.0;
    for (cell, (&o, &e)) in observed.iter().zip(expected.iter()).enumerate() {
        let e = e * scale;
        if e < 5.0 {
            return Err(OracleError::ExpectedCountTooSmall { cell, count: e });
        }
        let diff = o as f64 - e;
        statistic += diff * diff / e;
    }
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof ≥ 1");
    Ok(ChiSquareOutcome { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

// ---------------------------------------------------------------------------
// Dense inverse
// ---------------------------------------------------------------------------

/// Matrix inverse by Gauss–Jordan elimination with partial pivoting.
///
/// Deliberately a different route from the eigendecomposition-based inverses
/// on the primary path, so agreement between the two is evidence rather than
/// tautology.
pub fn invert_gauss_jordan(m: &DMatrix<f64>) -> Result<DMatrix<f64>, OracleError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "inverse needs a square matrix");
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())).max(1.0);
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                a[(r, col)].abs().partial_cmp(&a[(s, col)].abs()).expect("finite entries")
            })
            .expect("non-empty column");
        let pivot = a[(pivot_row, col)];
        if pivot.abs() < 1e-13 * scale {
            return Err(OracleError::SingularMatrix { col, pivot });
        }
        a.swap_rows(col, pivot_row);
        inv.swap_rows(col, pivot_row);
        let inv_pivot = 1.0 / pivot;
        for j in 0..n {
            a[(col, j)] *= inv_pivot;
            inv[(col, j)] *= inv_pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[(row, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(row, j)] -= factor * a[(col, j)];
                inv[(row, j)] -= factor * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

// ---------------------------------------------------------------------------
// Marginal CDF of one simplex coordinate under a log-linear law
// ---------------------------------------------------------------------------

/// Tabulated CDF of coordinate `arm` under p(q) ∝ exp(−⟨c, q⟩) on the simplex.
///
/// Built once per cost vector from the nested-convolution quadrature route:
/// the marginal density is f_a(v) ∝ e^{−c̃_a v} · C_{−a}(1 − v) where C_{−a}
/// is the convolution mass of the remaining shifted costs. Each of the
/// `cells` panels is integrated with a single Gauss–Kronrod 15 rule and the
/// cumulative sums are normalized, so knot values are exact to quadrature
/// precision and evaluation interpolates linearly between knots.
#[derive(Debug, Clone)]
pub struct MarginalCdfTable {
    knots: Vec<f64>,
}

impl MarginalCdfTable {
    /// Number of panels used by the acceptance tests.
    pub const DEFAULT_CELLS: usize = 2048;

    /// Tabulate the marginal CDF of `arm` for the given raw costs.
    pub fn build(costs: &[f64], arm: usize, cells: usize) -> Result<Self, OracleError> {
        if arm >= costs.len() {
            return Err(OracleError::ArmOutOfRange { arm, arms: costs.len() });
        }
        let (shifted, _) = partition::reduce_costs(costs)?;
        let own = shifted[arm];
        let rest: Vec<f64> = shifted
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != arm)
            .map(|(_, &c)| c)
            .collect();
        let mut integrand = |v: f64| {
            let mass = partition::conv_mass_quadrature(&rest, 1.0 - v, 1e-7)
                .expect("inner convolution mass converges on [0,1]");
            (-own * v).exp() * mass
        };
        let h = 1.0 / cells as f64;
        let mut knots = Vec::with_capacity(cells + 1);
        knots.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let (panel, _) = partition::gk15(&mut integrand, i as f64 * h, (i + 1) as f64 * h);
            acc += panel;
            knots.push(acc);
        }
        let total = acc;
        for k in &mut knots {
            *k = (*k / total).clamp(0.0, 1.0);
        }
        *knots.last_mut().expect("non-empty") = 1.0;
        Ok(MarginalCdfTable { knots })
    }

    /// P(q_arm ≤ v), linearly interpolated between tabulated knots.
    pub fn eval(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let cells = self.knots.len() - 1;
        let pos = v * cells as f64;
        let idx = (pos.floor() as usize).min(cells - 1);
        let frac = pos - idx as f64;
        self.knots[idx] + frac * (self.knots[idx + 1] - self.knots[idx])
    }
}
