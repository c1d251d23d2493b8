//! Structural checks on computed fields: the regularity theory a solution
//! of −Δ∞ᴺu = 1 on a convex domain must satisfy.
//!
//! Everything is reported as a defect/violation ≥ 0 that equals 0 exactly
//! when the corresponding inequality holds at every sampled configuration:
//!
//! * `concavity_defect` — midpoint concavity of u^q (q = ½ for the
//!   power-concavity property) over axis and diagonal node pairs with
//!   on-grid midpoints;
//! * `cone_comparison` — r ↦ max_{∂B_r(y)} (u(y)−u(x))/r must be
//!   nondecreasing, with the endpoint bound min (u−u(y))/r ≥ −u(y)/R;
//! * `quad_cone_bound` — u(x) ≤ ½·diam·|x−z| − ½|x−z|² for boundary z;
//! * `boundary_decay` — the solution on the outer parallel body Ω_ε stays
//!   below (ε/2)(diam Ω + 1) − ε²/2 on ∂Ω;
//! * `semiconcavity_check` — semiconcavity with the self-calibrated
//!   constant C = 2M², M the Lipschitz constant of √u on a compact K;
//! * `singularity_estimate_check` — the kinked upper bound
//!   u(x) ≤ u(x₀) + ⟨p, x−x₀⟩ − K|⟨ζ, x−x₀⟩| + C/2·|x−x₀|² near a
//!   singular point (and its −c⟨ζ,·⟩² variant on B_δ, δ = min{K/c, R});
//! * `gradient_oscillation` — one-sided difference-quotient spreads across
//!   refinements as a differentiability probe;
//! * `boundary_blowup` — the fitted exponent of |w(x₁+tν)| ~ t^s near the
//!   boundary (s ≈ ½ for w = −√u, so ∂w/∂ν blows up like t^{−1/2}).

use crate::envelope::TransformedField;
use crate::geometry::ConvexDomain;
use crate::grid::{Grid, ScalarField};
use crate::linalg::{dist, dot, lsq_slope, norm, sub, Point};
use crate::solver::{solve, SchemeParams, Solution, SolverError, SourceTerm};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("field is negative at node {node} (value {value}); check requires u ≥ 0")]
    NegativeField { node: usize, value: f64 },
    #[error("power-concavity exponent must lie in (0, 1], got {0}")]
    BadExponent(f64),
    #[error("radius {r} exceeds the distance {max} from the base point to ∂Ω")]
    RadiusTooLarge { r: f64, max: f64 },
    #[error("radii must be a nonempty increasing sequence")]
    BadRadii,
    #[error("ζ must be a unit vector, |ζ| = {0}")]
    NotUnitVector(f64),
    #[error("point {0:?} is not a grid node")]
    NotANode(Point),
    #[error("grids are not nested refinements (h must halve, same origin)")]
    NotNested,
    #[error("only {got} dyadic levels resolvable (need ≥ {need})")]
    InsufficientSamples { got: usize, need: usize },
    #[error("check requires the grid to carry its domain")]
    DomainRequired,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn require_nonnegative(u: &ScalarField) -> Result<(), AnalysisError> {
    for &i in u.grid.inside_nodes() {
        if u.value(i) < -1e-12 * (1.0 + u.sup_norm()) {
            return Err(AnalysisError::NegativeField {
                node: i,
                value: u.value(i),
            });
        }
    }
    Ok(())
}

/// Max over sampled triples of ½u^q(x) + ½u^q(y) − u^q(mid) (positive part):
/// the defect of midpoint concavity of u^q. Triples run over all axis and
/// diagonal node pairs with on-grid midpoints, all separations.
pub fn concavity_defect(u: &ScalarField, exponent: f64) -> Result<f64, AnalysisError> {
    if !(0.0 < exponent && exponent <= 1.0) {
        return Err(AnalysisError::BadExponent(exponent));
    }
    require_nonnegative(u)?;
    let g = &u.grid;
    let pow = |i: usize| u.value(i).max(0.0).powf(exponent);
    let dirs: &[(i64, i64)] = if g.ny == 1 {
        &[(1, 0)]
    } else {
        &[(1, 0), (0, 1), (1, 1), (1, -1)]
    };
    let mut defect = 0.0f64;
    for &i in g.inside_nodes() {
        let (ix, iy) = g.ij(i);
        for &(dx, dy) in dirs {
            for k in 1.. {
                let (jx, jy) = (ix as i64 + 2 * k * dx, iy as i64 + 2 * k * dy);
                if jx < 0 || jy < 0 || jx as usize >= g.nx || jy as usize >= g.ny {
                    break;
                }
                let j = g.index(jx as usize, jy as usize);
                if !g.is_inside(j) {
                    break;
                }
                let mid = g.index((ix as i64 + k * dx) as usize, (iy as i64 + k * dy) as usize);
                defect = defect.max(0.5 * pow(i) + 0.5 * pow(j) - pow(mid));
            }
        }
    }
    Ok(defect.max(0.0))
}

#[derive(Debug, Clone)]
pub struct ConeReport {
    /// g(r) = max over ∂B_r(y) of (u(y) − u(x))/r per supplied radius.
    pub g_values: Vec<f64>,
    /// Positive part of the worst decrease g(rᵢ) − g(rᵢ₊₁).
    pub monotonicity_violation: f64,
    /// Positive part of −u(y)/R − min_{∂B_rmax}(u − u(y))/r_max.
    pub endpoint_violation: f64,
}

/// Comparison with cones around an interior node: the cone slope
/// r ↦ max_{∂B_r(y)} (u(y) − u(x))/r must be nondecreasing in r.
/// Rings are sampled with 64 interpolated directions.
pub fn cone_comparison(
    u: &ScalarField,
    y_node: usize,
    radii: &[f64],
) -> Result<ConeReport, AnalysisError> {
    let g = &u.grid;
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadRadii);
    }
    let bd = g.boundary_dist(y_node);
    let r_max = *radii.last().unwrap();
    if r_max > bd {
        return Err(AnalysisError::RadiusTooLarge { r: r_max, max: bd });
    }
    let y = g.position(y_node);
    let uy = u.value(y_node);
    let n_dirs = if g.ny == 1 { 2 } else { 64 };
    let dirs = crate::grid::ring_directions(g.dimension(), n_dirs);
    let ring_minmax = |r: f64| -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in &dirs {
            let val = u.interpolate([y[0] + r * v[0], y[1] + r * v[1]]);
            min = min.min(val);
            max = max.max(val);
        }
        (min, max)
    };
    let g_values: Vec<f64> = radii.iter().map(|&r| (uy - ring_minmax(r).0) / r).collect();
    let monotonicity_violation = g_values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0f64, f64::max)
        .max(0.0);
    let (ring_min, _) = ring_minmax(r_max);
    let lhs = (ring_min - uy) / r_max;
    let rhs = -uy / bd;
    let endpoint_violation = (rhs - lhs).max(0.0);
    Ok(ConeReport {
        g_values,
        monotonicity_violation,
        endpoint_violation,
    })
}

/// Max over boundary points z and inside nodes x of the positive part of
/// u(x) − [½·diam(Ω)·|x−z| − ½|x−z|²]: comparison with the quadratic cone.
pub fn quad_cone_bound(u: &ScalarField, boundary_points: usize) -> Result<f64, AnalysisError> {
    let g = &u.grid;
    let d = g.domain.as_ref().ok_or(AnalysisError::DomainRequired)?;
    let diam = d.diameter();
    let mut violation = 0.0f64;
    for z in d.boundary_samples(boundary_points) {
        for &i in g.inside_nodes() {
            let r = dist(g.position(i), z);
            let bound = 0.5 * diam * r - 0.5 * r * r;
            violation = violation.max(u.value(i) - bound);
        }
    }
    Ok(violation.max(0.0))
}

#[derive(Debug, Clone)]
pub struct DecaySample {
    pub eps: f64,
    /// sup of the Ω_ε-solution over samples of ∂Ω.
    pub sup_on_boundary: f64,
    /// (ε/2)(diam Ω + 1) − ½ε².
    pub bound: f64,
}

/// Solves on outer parallel bodies Ω_ε and reports the trace of u_ε on ∂Ω
/// against the linear-in-ε bound. The scheme radius follows ε/2 so the
/// first-layer overshoot of the scheme (≈ ε_scheme/2·|∇u|, largest exactly
/// at distance ε inside ∂Ω_ε where the trace is read) stays below the
/// bound's slack.
pub fn boundary_decay(
    d: &ConvexDomain,
    eps_list: &[f64],
    base: &SchemeParams,
) -> Result<Vec<DecaySample>, AnalysisError> {
    let diam = d.diameter();
    let zs = d.boundary_samples(if d.dimension() == 1 { 2 } else { 128 });
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let enlarged = d
            .outer_parallel_body(eps)
            .map_err(|_| AnalysisError::BadRadii)?;
        let mut params = base.clone();
        params.eps = eps / 2.0;
        let sol = solve(&enlarged, &SourceTerm::Constant(1.0), &params)?;
        let sup = zs
            .iter()
            .map(|&z| sol.field.interpolate(z))
            .fold(0.0f64, f64::max);
        out.push(DecaySample {
            eps,
            sup_on_boundary: sup,
            bound: 0.5 * eps * (diam + 1.0) - 0.5 * eps * eps,
        });
    }
    Ok(out)
}

/// Nodes of the domain scaled about its centroid by `shrink`.
pub fn shrunk_region(grid: &Grid, shrink: f64) -> Vec<usize> {
    let c = match &grid.domain {
        Some(d) => d.centroid(),
        None => {
            // mask-only grids: centroid of the inside nodes
            let n = grid.inside_nodes().len() as f64;
            let mut acc = [0.0, 0.0];
            for &i in grid.inside_nodes() {
                let p = grid.position(i);
                acc[0] += p[0] / n;
                acc[1] += p[1] / n;
            }
            acc
        }
    };
    grid.inside_nodes()
        .iter()
        .copied()
        .filter(|&i| {
            let p = grid.position(i);
            let stretched = [c[0] + (p[0] - c[0]) / shrink, c[1] + (p[1] - c[1]) / shrink];
            match &grid.domain {
                Some(d) => d.contains(stretched),
                None => {
                    // Chebyshev-depth fallback
                    let max_bd = grid
                        .inside_nodes()
                        .iter()
                        .map(|&j| grid.boundary_dist(j))
                        .fold(0.0f64, f64::max);
                    grid.boundary_dist(i) >= (1.0 - shrink) * max_bd
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SemiconcavityReport {
    /// Discrete Lipschitz constant of √u over node pairs in K.
    pub m_lipschitz: f64,
    /// Semiconcavity constant 2M².
    pub c_constant: f64,
    pub violation: f64,
}

/// Semiconcavity of u on the `shrink`-scaled domain K with the
/// self-calibrated constant C = 2M², M = Lip(√u; K). The violation scans
/// all node pairs in K with on-grid midpoints (λ = ½).
pub fn semiconcavity_check(
    u: &ScalarField,
    shrink: f64,
) -> Result<SemiconcavityReport, AnalysisError> {
    require_nonnegative(u)?;
    let region = shrunk_region(&u.grid, shrink);
    let m_lipschitz = sqrt_lipschitz(u, &region);
    let c_constant = 2.0 * m_lipschitz * m_lipschitz;
    let violation = semiconcavity_violation(u, &region, c_constant);
    Ok(SemiconcavityReport {
        m_lipschitz,
        c_constant,
        violation,
    })
}

/// Max discrete Lipschitz ratio of √u over pairs of the given nodes.
pub fn sqrt_lipschitz(u: &ScalarField, region: &[usize]) -> f64 {
    let g = &u.grid;
    let mut m = 0.0f64;
    for (a, &i) in region.iter().enumerate() {
        let (pi, vi) = (g.position(i), u.value(i).max(0.0).sqrt());
        for &j in region.iter().skip(a + 1) {
            let ratio = (u.value(j).max(0.0).sqrt() - vi).abs() / dist(g.position(j), pi);
            m = m.max(ratio);
        }
    }
    m
}

/// Max over region pairs (x, y) with on-grid midpoints of the positive part
/// of ½u(x) + ½u(y) − C/8·|x−y|² − u(mid).
pub fn semiconcavity_violation(u: &ScalarField, region: &[usize], c: f64) -> f64 {
    let g = &u.grid;
    let in_region: std::collections::HashSet<usize> = region.iter().copied().collect();
    let mut violation = 0.0f64;
    for (a, &i) in region.iter().enumerate() {
        let (ix, iy) = g.ij(i);
        for &j in region.iter().skip(a + 1) {
            let (jx, jy) = g.ij(j);
            if (ix + jx) % 2 != 0 || (iy + jy) % 2 != 0 {
                continue;
            }
            let mid = g.index((ix + jx) / 2, (iy + jy) / 2);
            if !in_region.contains(&mid) {
                continue;
            }
            let d2 = {
                let (pi, pj) = (g.position(i), g.position(j));
                let dv = sub(pj, pi);
                dot(dv, dv)
            };
            violation =
                violation.max(0.5 * u.value(i) + 0.5 * u.value(j) - c / 8.0 * d2 - u.value(mid));
        }
    }
    violation.max(0.0)
}

/// Violation of the singular-point estimate
/// u(x) ≤ u(x₀) + ⟨p, x−x₀⟩ − K|⟨ζ, x−x₀⟩| + C/2·|x−x₀|² over B_R(x₀).
pub fn singularity_estimate_check(
    u: &ScalarField,
    x0: Point,
    p: Point,
    zeta: Point,
    k_coef: f64,
    c_semi: f64,
    radius: f64,
) -> Result<f64, AnalysisError> {
    singularity_bound_violation(u, x0, p, zeta, c_semi, radius, |s| -k_coef * s.abs())
}

/// Second mode: u(x) ≤ u(x₀) + ⟨p, x−x₀⟩ − c⟨ζ, x−x₀⟩² + C/2·|x−x₀|² on
/// B_δ(x₀), δ = min{K/c, R}.
#[allow(clippy::too_many_arguments)]
pub fn singularity_estimate_quadratic(
    u: &ScalarField,
    x0: Point,
    p: Point,
    zeta: Point,
    k_coef: f64,
    c_split: f64,
    c_semi: f64,
    radius: f64,
) -> Result<f64, AnalysisError> {
    let delta = (k_coef / c_split).min(radius);
    singularity_bound_violation(u, x0, p, zeta, c_semi, delta, |s| -c_split * s * s)
}

fn singularity_bound_violation(
    u: &ScalarField,
    x0: Point,
    p: Point,
    zeta: Point,
    c_semi: f64,
    radius: f64,
    kink: impl Fn(f64) -> f64,
) -> Result<f64, AnalysisError> {
    let zn = norm(zeta);
    if (zn - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::NotUnitVector(zn));
    }
    let g = &u.grid;
    let node0 = g.node_at(x0).ok_or(AnalysisError::NotANode(x0))?;
    let u0 = u.value(node0);
    let mut violation = 0.0f64;
    for &i in g.inside_nodes() {
        let d = sub(g.position(i), x0);
        if norm(d) > radius {
            continue;
        }
        let bound = u0 + dot(p, d) + kink(dot(zeta, d)) + 0.5 * c_semi * dot(d, d);
        violation = violation.max(u.value(i) - bound);
    }
    Ok(violation.max(0.0))
}

/// Per-refinement max over K of the one-sided difference-quotient spread
/// max_axis |∂⁺ᵢu − ∂⁻ᵢu|. A C¹ limit forces the sequence toward 0; a
/// gradient jump of size s stalls it near s.
pub fn gradient_oscillation(
    fields: &[ScalarField],
    shrink: f64,
) -> Result<Vec<f64>, AnalysisError> {
    if fields.len() < 2 {
        return Err(AnalysisError::InsufficientSamples {
            got: fields.len(),
            need: 2,
        });
    }
    for w in fields.windows(2) {
        let (a, b) = (&w[0].grid, &w[1].grid);
        let nested = (a.h / b.h - 2.0).abs() <= 1e-9
            && (a.origin[0] - b.origin[0]).abs() <= 1e-9 * a.h
            && (a.origin[1] - b.origin[1]).abs() <= 1e-9 * a.h;
        if !nested {
            return Err(AnalysisError::NotNested);
        }
    }
    Ok(fields
        .iter()
        .map(|u| {
            let g = &u.grid;
            let region = shrunk_region(g, shrink);
            let mut spread = 0.0f64;
            for &i in &region {
                let (ix, iy) = g.ij(i);
                let mut axes: Vec<(usize, usize)> = Vec::with_capacity(2);
                if ix > 0 && ix + 1 < g.nx {
                    axes.push((i - 1, i + 1));
                }
                if g.ny > 1 && iy > 0 && iy + 1 < g.ny {
                    axes.push((i - g.nx, i + g.nx));
                }
                for (lo, hi) in axes {
                    if !g.is_inside(lo) || !g.is_inside(hi) {
                        continue;
                    }
                    let fwd = (u.value(hi) - u.value(i)) / g.h;
                    let bwd = (u.value(i) - u.value(lo)) / g.h;
                    spread = spread.max((fwd - bwd).abs());
                }
            }
            spread
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct BlowupFit {
    /// Least-squares slope of log|w(x₁+tν) − w(x₁)| against log t.
    pub exponent: f64,
    /// The dyadic distances actually used.
    pub levels: Vec<f64>,
}

/// Fits the boundary growth exponent of w along x₁ + tν for dyadic
/// t = t₀/2ʲ, resolvable down to 2h. Exponent ≈ ½ for w = −√u (normal
/// derivative blows up like t^{−1/2}); ≈ 1 for smooth fields.
pub fn boundary_blowup(
    w: &TransformedField,
    x1: Point,
    nu: Point,
    t0: f64,
) -> Result<BlowupFit, AnalysisError> {
    let nn = norm(nu);
    if (nn - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::NotUnitVector(nn));
    }
    let g = &w.w.grid;
    let mut levels = Vec::new();
    let mut t = t0;
    while t >= 2.0 * g.h {
        levels.push(t);
        t /= 2.0;
    }
    if levels.len() < 4 {
        return Err(AnalysisError::InsufficientSamples {
            got: levels.len(),
            need: 4,
        });
    }
    let w1 = w.w.interpolate(x1);
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for &t in &levels {
        let p = [x1[0] + t * nu[0], x1[1] + t * nu[1]];
        let gap = (w.w.interpolate(p) - w1).abs();
        if gap <= 0.0 {
            return Err(AnalysisError::InsufficientSamples {
                got: lx.len(),
                need: 4,
            });
        }
        lx.push(t.ln());
        ly.push(gap.ln());
    }
    Ok(BlowupFit {
        exponent: lsq_slope(&lx, &ly),
        levels,
    })
}

/// Transform consistency: at each node (u ≥ 10h², full 3×3 inside),
/// build a quadratic that touches w = −√u from below — the least-squares fit
/// with its Hessian lowered by c·I, c = 2·(fit overshoot over the stencil)/h²
/// — and evaluate the restricted supersolution conditions on it. Lowering
/// the Hessian only raises F (degenerate ellipticity), so a genuine
/// supersolution stays nonnegative up to fit noise while a field violating
/// the equation by a margin still fails.
#[derive(Debug, Clone, Copy)]
pub struct RestrictedConsistency {
    pub checked: usize,
    /// Worst (most negative) F-value seen; ≥ 0 means every probe passed.
    pub worst_f: f64,
    /// Worst slack of the critical-point eigenvalue condition.
    pub worst_critical_margin: f64,
}

pub fn restricted_consistency(t: &TransformedField) -> RestrictedConsistency {
    let cutoff = 10.0 * t.w.grid.h * t.w.grid.h;
    restricted_consistency_above(t, cutoff)
}

/// Same check restricted to nodes with u ≥ `u_min`. The fit noise in F
/// scales like h²·u^{−7/2}·|∇w|², so the default 10h² exclusion keeps nodes
/// where the F-value is meaningless; a fixed interior level set gives a
/// clean O(h) worst-F on solved fields (O(h²) on exact samples).
pub fn restricted_consistency_above(t: &TransformedField, u_min: f64) -> RestrictedConsistency {
    let g = &t.w.grid;
    let cutoff = u_min.max(10.0 * g.h * g.h);
    let mut checked = 0;
    let mut worst_f = f64::INFINITY;
    let mut worst_margin = f64::INFINITY;
    for &i in g.inside_nodes() {
        if t.source.value(i) < cutoff {
            continue;
        }
        // The fit exists where all nine stencil values are values of w:
        // collar nodes carry the boundary datum, not w's continuation.
        let (ix, iy) = g.ij(i);
        if ix == 0 || iy == 0 || ix + 1 >= g.nx || iy + 1 >= g.ny {
            continue;
        }
        let all_inside = (-1i64..=1).all(|dy| {
            (-1i64..=1).all(|dx| {
                g.is_inside(g.index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize))
            })
        });
        if !all_inside {
            continue;
        }
        let Some(probe) = touching_probe_below(&t.w, i) else {
            continue;
        };
        let Ok(verdict) = crate::envelope::restricted_super_probe(t.w.value(i), &probe, 0.0) else {
            continue;
        };
        checked += 1;
        worst_f = worst_f.min(verdict.f_value);
        if let Some(m) = verdict.critical_margin {
            worst_margin = worst_margin.min(m);
        }
    }
    if checked == 0 {
        worst_f = 0.0;
    }
    if worst_margin == f64::INFINITY {
        worst_margin = 0.0;
    }
    RestrictedConsistency {
        checked,
        worst_f,
        worst_critical_margin: worst_margin,
    }
}

/// Least-squares quadratic lowered until it sits below the field on the
/// whole 3×3 stencil (ψ(x₀) pinned to the field value).
fn touching_probe_below(w: &ScalarField, node: usize) -> Option<crate::envelope::QuadraticProbe> {
    let g = &w.grid;
    let fit = crate::envelope::fit_quadratic_probe(w, node)?;
    let (ix, iy) = g.ij(node);
    let mut overshoot = 0.0f64;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let j = g.index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
            let p = g.position(j);
            // compare the x₀-pinned fit against the field
            let d = sub(p, g.position(node));
            let ad = [
                fit.hessian[0][0] * d[0] + fit.hessian[0][1] * d[1],
                fit.hessian[1][0] * d[0] + fit.hessian[1][1] * d[1],
            ];
            let psi = w.value(node) + dot(fit.gradient, d) + 0.5 * dot(ad, d);
            overshoot = overshoot.max(psi - w.value(j));
        }
    }
    let c = 2.0 * overshoot / (g.h * g.h);
    Some(crate::envelope::QuadraticProbe::new_2d(
        fit.center,
        w.value(node),
        fit.gradient,
        [
            [fit.hessian[0][0] - c, fit.hessian[0][1]],
            [fit.hessian[1][0], fit.hessian[1][1] - c],
        ],
    ))
}

/// Convenience: solve and return the solution together with the grid-scale
/// tolerance 10·h·‖u‖∞/diam² the geometric checks are measured against.
pub fn solve_with_tolerance(
    d: &ConvexDomain,
    f: &SourceTerm,
    p: &SchemeParams,
) -> Result<(Solution, f64), AnalysisError> {
    let sol = solve(d, f, p)?;
    let h = sol.field.grid.h;
    let tol = 10.0 * h * sol.field.sup_norm() / (d.diameter() * d.diameter());
    Ok((sol, tol))
}

pub use crate::report::RegularityReport;
