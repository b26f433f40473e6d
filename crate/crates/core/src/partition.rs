//! Partition function of log-linear densities on the simplex.
//!
//! For a cost vector c ∈ ℝ^K the play distribution has density
//! p(q) ∝ exp(−⟨c, q⟩) on Δ^{K−1}. Parameterising the simplex by its first
//! K−1 coordinates, the normalizer
//!
//!   Z(c) = ∫_{Δ} exp(−⟨c, q⟩) dq
//!
//! is the (K−1)-fold convolution of exponentials e^{−c̃_a·q} evaluated at
//! total budget 1, where c̃ = c − min(c). Its Laplace transform is
//! ∏_a 1/(s + c̃_a), so a partial-fraction expansion
//! ∏_a 1/(s + c̃_a) = Σ_i Σ_j b_{ij}/(s + c_i)^j inverts term by term to
//!
//!   C(ζ) = Σ_i Σ_j b_{ij} · ζ^{j−1} e^{−c_i ζ} / (j−1)!     (ζ ∈ [0, 1])
//!
//! with Z = e^{−min(c)}·C(1). `subsimplex_z` exposes C(ζ) — the mass of the
//! sub-simplex {q ≥ 0, Σq = ζ} — which the exact sampler consumes as the
//! conditional-CDF building block.
//!
//! An independent adaptive Gauss-Kronrod route (`z_quadrature`) computes the
//! same convolution by nested 1-D integration and shares no arithmetic with
//! the partial-fraction path; it is the oracle the tests trust.

use thiserror::Error;

/// Grouping tolerance for coalescing (near-)equal costs into one pole.
pub const GROUP_TOL: f64 = 1e-9;
/// Conditioning limit: max_i,j |b_ij e^{−c_i}/Γ(j)| / Z beyond which the
/// expansion has lost too many digits to cancellation.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Shifted costs are clamped here; e^{−400} ≈ 1e−174 is already far below
/// any representable contribution to the density.
pub const COST_CLAMP: f64 = 400.0;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("need at least 2 costs, got {0}")]
    TooFewArms(usize),
    #[error("cost {index} is not finite: {value}")]
    NonFinite { index: usize, value: f64 },
    #[error("partial fractions ill-conditioned (cancellation ratio {ratio:.3e} > {limit:.0e}); use quadrature")]
    IllConditioned { ratio: f64, limit: f64 },
    #[error("quadrature did not converge to tolerance {tol:.1e} (best error {best:.3e})")]
    QuadratureStalled { tol: f64, best: f64 },
}

/// Shifts costs so the minimum is zero and clamps the spread at
/// [`COST_CLAMP`]. Returns (shifted, shift).
pub fn reduce_costs(costs: &[f64]) -> Result<(Vec<f64>, f64), PartitionError> {
    if costs.len() < 2 {
        return Err(PartitionError::TooFewArms(costs.len()));
    }
    for (index, &value) in costs.iter().enumerate() {
        if !value.is_finite() {
            return Err(PartitionError::NonFinite { index, value });
        }
    }
    let shift = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted = costs.iter().map(|&c| (c - shift).min(COST_CLAMP)).collect();
    Ok((shifted, shift))
}

/// One pole −c of multiplicity m with residue coefficients b_1..b_m
/// (coeffs[j−1] multiplies ζ^{j−1} e^{−cζ}/(j−1)!).
#[derive(Debug, Clone)]
pub struct PoleGroup {
    pub cost: f64,
    pub multiplicity: usize,
    pub coeffs: Vec<f64>,
}

/// Partial-fraction expansion of ∏ 1/(s + c̃_a) for one reduced cost vector.
#[derive(Debug, Clone)]
pub struct PartialFractionTable {
    groups: Vec<PoleGroup>,
    arm_count: usize,
}

impl PartialFractionTable {
    /// Builds the expansion, coalescing costs within `group_tol` of a group
    /// anchor into a single higher-multiplicity pole at the group mean.
    ///
    /// Coefficients come from the log-derivative recursion at each pole −c_i:
    /// with g_i(s) = ∏_{k≠i} (s+c_k)^{−d_k}, the Taylor coefficients
    /// h_m = g_i^{(m)}(−c_i)/m!·m!… satisfy h_0 = g_i(−c_i) and
    /// h_{m+1} = Σ_j C(m,j)·h_j·u^{(m−j)} where u = (ln g_i)′ has derivatives
    /// u^{(r)}(−c_i) = −Σ_k d_k·(−1)^r·r!/(c_k−c_i)^{r+1}; then
    /// b_{i, d_i−m} = h_m/m!.
    pub fn build(shifted: &[f64], group_tol: f64) -> Self {
        let mut sorted = shifted.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite costs"));

        // Coalesce into (cost, multiplicity) groups.
        let mut groups: Vec<(f64, usize)> = Vec::new();
        let mut anchor = sorted[0];
        let mut sum = 0.0;
        let mut count = 0usize;
        for &c in &sorted {
            if count > 0 && (anchor - c) > group_tol {
                groups.push((sum / count as f64, count));
                anchor = c;
                sum = 0.0;
                count = 0;
            }
            if count == 0 {
                anchor = c;
            }
            sum += c;
            count += 1;
        }
        groups.push((sum / count as f64, count));

        let mut out = Vec::with_capacity(groups.len());
        for (i, &(ci, di)) in groups.iter().enumerate() {
            // Unscaled derivatives D_m = g_i^{(m)}(−c_i) via Leibniz on
            // g′ = g·u: D_{m+1} = Σ_j C(m,j)·D_j·u^{(m−j)}(−c_i).
            let mut deriv = vec![0.0f64; di];
            deriv[0] = groups
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, &(ck, dk))| (ck - ci).powi(-(dk as i32)))
                .product();
            let u: Vec<f64> = (0..di.saturating_sub(1))
                .map(|r| {
                    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                    let r_fact: f64 = (1..=r).map(|v| v as f64).product();
                    -groups
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i)
                        .map(|(_, &(ck, dk))| dk as f64 * sign * r_fact / (ck - ci).powi(r as i32 + 1))
                        .sum::<f64>()
                })
                .collect();
            for m in 0..di.saturating_sub(1) {
                let mut binom = 1.0;
                let mut acc = 0.0;
                for j in 0..=m {
                    acc += binom * deriv[j] * u[m - j];
                    binom *= (m - j) as f64 / (j + 1) as f64;
                }
                deriv[m + 1] = acc;
            }
            // b_{i, d_i − m} = g_i^{(m)}(−c_i)/m!.
            let mut coeffs = vec![0.0; di];
            let mut m_fact = 1.0;
            for m in 0..di {
                if m > 0 {
                    m_fact *= m as f64;
                }
                coeffs[di - 1 - m] = deriv[m] / m_fact;
            }
            out.push(PoleGroup { cost: ci, multiplicity: di, coeffs });
        }
        PartialFractionTable { groups: out, arm_count: shifted.len() }
    }

    pub fn groups(&self) -> &[PoleGroup] {
        &self.groups
    }

    pub fn arm_count(&self) -> usize {
        self.arm_count
    }

    /// C(ζ): the exponential-convolution mass at budget ζ (Z at ζ = 1 for the
    /// reduced costs). Clamped at zero: for K ≥ 2 the analytic value is
    /// non-negative and → 0 as ζ → 0, but cancellation can leave −1e−18.
    pub fn mass(&self, zeta: f64) -> f64 {
        let mut total = 0.0;
        for g in &self.groups {
            let e = (-g.cost * zeta).exp();
            // Σ_j b_j ζ^{j−1}/(j−1)! · e^{−cζ}, Horner-style in ζ.
            let mut poly = 0.0;
            let mut fact = 1.0;
            let mut zpow = 1.0;
            for (j, &b) in g.coeffs.iter().enumerate() {
                if j > 0 {
                    fact *= j as f64;
                    zpow *= zeta;
                }
                poly += b * zpow / fact;
            }
            total += poly * e;
        }
        total.max(0.0)
    }

    /// Cancellation ratio max |term(ζ=1)| / C(1) used by the conditioning
    /// guard.
    pub fn condition_ratio(&self) -> f64 {
        let z = self.mass(1.0);
        if z <= 0.0 {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for g in &self.groups {
            let e = (-g.cost).exp();
            let mut fact = 1.0;
            for (j, &b) in g.coeffs.iter().enumerate() {
                if j > 0 {
                    fact *= j as f64;
                }
                worst = worst.max((b * e / fact).abs());
            }
        }
        worst / z
    }
}

/// Result of the closed-form route: Z for the costs as given.
#[derive(Debug, Clone)]
pub struct ZResult {
    pub z: f64,
    pub shift: f64,
    pub table: PartialFractionTable,
}

/// Z(c) by partial fractions at the default grouping tolerance, with the
/// conditioning guard from the module header.
pub fn z_partial_fraction(costs: &[f64]) -> Result<ZResult, PartitionError> {
    let (shifted, shift) = reduce_costs(costs)?;
    let table = PartialFractionTable::build(&shifted, GROUP_TOL);
    let ratio = table.condition_ratio();
    if !ratio.is_finite() || ratio > CONDITION_LIMIT {
        return Err(PartitionError::IllConditioned { ratio, limit: CONDITION_LIMIT });
    }
    let z = (-shift).exp() * table.mass(1.0);
    Ok(ZResult { z, shift, table })
}

/// C(ζ) for a prepared table — the sub-simplex mass {q ≥ 0, Σ q = ζ}.
pub fn subsimplex_z(table: &PartialFractionTable, zeta: f64) -> f64 {
    table.mass(zeta)
}

// ---------------------------------------------------------------------------
// Quadrature route (oracle).
// ---------------------------------------------------------------------------

/// 15-point Gauss-Kronrod nodes (positive half) and weights; the embedded
/// 7-point Gauss rule supplies the error estimate.
const GK_NODES: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

pub(crate) fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &w)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        let pair = if x == 0.0 { f(mid) } else { f(mid - half * x) + f(mid + half * x) };
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive GK15 with mixed absolute/relative termination.
fn integrate_adaptive(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, PartitionError> {
    if b <= a {
        return Ok(0.0);
    }
    let (i0, e0) = gk15(f, a, b);
    let mut panels = vec![(a, b, i0, e0)];
    for _ in 0..4000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs().max(1e-300) || err < 1e-300 {
            return Ok(total);
        }
        // Split the worst panel.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).expect("finite errors"))
            .map(|(i, _)| i)
            .expect("non-empty panel set");
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        let (l, le) = gk15(f, pa, mid);
        let (r, re) = gk15(f, mid, pb);
        panels.push((pa, mid, l, le));
        panels.push((mid, pb, r, re));
    }
    let total: f64 = panels.iter().map(|p| p.2).sum();
    let err: f64 = panels.iter().map(|p| p.3).sum();
    Err(PartitionError::QuadratureStalled { tol: rel_tol, best: err / total.abs().max(1e-300) })
}

/// Nested-convolution mass C(ζ) for the reduced costs — the quadrature twin
/// of [`PartialFractionTable::mass`], sharing no arithmetic with it.
pub fn conv_mass_quadrature(shifted: &[f64], zeta: f64, rel_tol: f64) -> Result<f64, PartitionError> {
    if zeta <= 0.0 {
        return Ok(if shifted.len() == 1 { 1.0 } else { 0.0 });
    }
    if shifted.len() == 1 {
        return Ok((-shifted[0] * zeta).exp());
    }
    let (head, rest) = shifted.split_first().expect("non-empty");
    let inner_tol = rel_tol * 0.5;
    let mut err: Option<PartitionError> = None;
    let result = integrate_adaptive(
        &mut |u: f64| {
            if err.is_some() {
                return 0.0;
            }
            match conv_mass_quadrature(rest, zeta - u, inner_tol) {
                Ok(v) => (-head * u).exp() * v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        zeta,
        rel_tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    result
}

/// Z(c) by adaptive nested quadrature at relative tolerance `rel_tol`.
pub fn z_quadrature(costs: &[f64], rel_tol: f64) -> Result<f64, PartitionError> {
    let (shifted, shift) = reduce_costs(costs)?;
    Ok((-shift).exp() * conv_mass_quadrature(&shifted, 1.0, rel_tol)?)
}
