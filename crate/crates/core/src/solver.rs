//! Fixed-point solver for the discrete Dirichlet problem −Δ∞ᴺu = f, u = 0
//! on ∂Ω.
//!
//! The dynamic programming update at an inside node is
//!
//!   u(x) ← ½·(max + min of u over the ε-ring) + (ε²/2)·f(x),
//!
//! the discrete form of −Δ∞ᴺu = f since Δ∞ᴺu ≈ (max + min − 2u)/ε². Starting
//! from the zero field with f ≥ 0 the iterates are nondecreasing nodewise
//! (ring extrema are monotone), and the limit is the least fixed point.
//! Quadratics a + ⟨p,x⟩ − ½c|x|² with fully interior rings are exact fixed
//! points when f ≡ c, which pins the convergence study to the known
//! solutions u = (R²−|x|²)/2 on intervals and balls.
//!
//! Sweeps: Gauss–Seidel updates in place with alternating (4-way) node
//! orders, fast-sweeping style; Jacobi writes a fresh buffer and may update
//! nodes in parallel — its result depends only on (domain, f, params), never
//! on the thread count.

use crate::envelope::QuadraticProbe;
use crate::geometry::ConvexDomain;
use crate::grid::{
    build_grid, build_ring, ring_extrema, Grid, GridError, RingStencil, ScalarField,
};
use crate::linalg::{dot, sym2_eigenvalues};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no convergence after {iterations} sweeps: residual {residual:.3e} > tol {tol:.3e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error(
        "source term is negative at node {node} ({value}); pass allow_signed_source to accept"
    )]
    NegativeSource { node: usize, value: f64 },
    #[error("source field lives on a different grid")]
    SourceGridMismatch,
    #[error("plateau radius {r} outside [0, {max}]")]
    BadPlateauRadius { r: f64, max: f64 },
    #[error("one_dim_family needs a symmetric interval grid (−R, R)")]
    NotSymmetricInterval,
}

/// Sweep ordering of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sweep {
    /// In-place updates, alternating sweep directions. Fastest.
    #[default]
    GaussSeidel,
    /// Double-buffered updates; bit-reproducible across thread counts.
    Jacobi,
}

/// Scheme parameters. The grid spacing is tied to the ring radius by
/// h = eps/3 (wide-stencil consistency: the ring radius must dominate the
/// angular resolution error; 16 directions keep directional bias below the
/// scheme's O(ε) truncation at desk scale).
#[derive(Debug, Clone)]
pub struct SchemeParams {
    pub eps: f64,
    pub m: usize,
    /// Stopping tolerance on the sup-norm of the update difference.
    /// `None` → 1e−9·diam(Ω)², scale-invariant under dilation.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub sweep: Sweep,
    /// f ≥ 0 is required for the monotone-start argument; mixed signs are
    /// accepted only behind this flag, with no convergence guarantee.
    pub allow_signed_source: bool,
}

impl SchemeParams {
    pub fn new(eps: f64) -> Self {
        SchemeParams {
            eps,
            m: 16,
            tol: None,
            max_iter: 200_000,
            sweep: Sweep::default(),
            allow_signed_source: false,
        }
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweep = sweep;
        self
    }

    /// Grid spacing for a domain: eps/3 in 2D, eps/2 in 1D. The 1D ring is
    /// then node-exact, and the boundary-clip truncation (≈ (ε−h)/2 at the
    /// off-lattice chain ends) is as small as the eps ≥ 2h constraint allows.
    pub fn spacing_for(&self, d: &ConvexDomain) -> f64 {
        if d.dimension() == 1 {
            self.eps / 2.0
        } else {
            self.eps / 3.0
        }
    }

    pub fn tolerance_for(&self, d: &ConvexDomain) -> f64 {
        self.tol.unwrap_or(1e-9 * d.diameter() * d.diameter())
    }
}

/// Right-hand side f: a constant or a sampled field.
#[derive(Debug, Clone)]
pub enum SourceTerm {
    Constant(f64),
    Samples(ScalarField),
}

impl SourceTerm {
    #[inline]
    pub fn value_at(&self, node_idx: usize) -> f64 {
        match self {
            SourceTerm::Constant(c) => *c,
            SourceTerm::Samples(f) => f.value(node_idx),
        }
    }

    fn validate(&self, grid: &Grid, allow_signed: bool) -> Result<(), SolverError> {
        if let SourceTerm::Samples(f) = self {
            if f.grid.len() != grid.len() || f.grid.h != grid.h {
                return Err(SolverError::SourceGridMismatch);
            }
        }
        if allow_signed {
            return Ok(());
        }
        for &i in grid.inside_nodes() {
            let v = self.value_at(i);
            if v < 0.0 {
                return Err(SolverError::NegativeSource { node: i, value: v });
            }
        }
        Ok(())
    }
}

/// One dynamic-programming update: ½(max+min over the ring) + (ε²/2)·f.
#[inline]
pub fn dpp_update(
    field: &ScalarField,
    stencil: &RingStencil,
    f: &SourceTerm,
    node_idx: usize,
) -> f64 {
    let (max, min) = ring_extrema(field, stencil, node_idx);
    0.5 * (max + min) + 0.5 * stencil.eps * stencil.eps * f.value_at(node_idx)
}

/// Per-node |dpp_update − field value|; the sup over inside nodes is the
/// reported residual.
pub fn residual(field: &ScalarField, stencil: &RingStencil, f: &SourceTerm) -> ScalarField {
    let mut out = ScalarField::zeros(field.grid.clone());
    for &i in field.grid.inside_nodes() {
        out.set(i, (dpp_update(field, stencil, f, i) - field.value(i)).abs());
    }
    out
}

/// Converged solve output.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ScalarField,
    pub stencil: RingStencil,
    pub iterations: usize,
    pub residual: f64,
    /// (sweep, sup update difference) log, one entry per sweep.
    pub history: Vec<(usize, f64)>,
}

/// Solves −Δ∞ᴺu = f in Ω, u = 0 on ∂Ω, by fixed-point iteration of the DPP
/// update starting from the zero field.
pub fn solve(d: &ConvexDomain, f: &SourceTerm, p: &SchemeParams) -> Result<Solution, SolverError> {
    let grid = Arc::new(build_grid(d, p.spacing_for(d))?);
    let m = if grid.dimension() == 1 { 2 } else { p.m };
    let stencil = build_ring(&grid, p.eps, m)?;
    f.validate(&grid, p.allow_signed_source)?;
    let tol = p.tolerance_for(d);

    let mut field = ScalarField::zeros(grid.clone());
    let mut history = Vec::new();
    let mut iterations = 0;
    let nodes = grid.inside_nodes();

    // Four sweep orders rotated in turn: row-major, reversed, column-major,
    // reversed. Boundary information travels a full diameter per cycle.
    let orders: Vec<Vec<usize>> = if p.sweep == Sweep::GaussSeidel {
        let fwd: Vec<usize> = nodes.to_vec();
        let rev: Vec<usize> = nodes.iter().rev().copied().collect();
        let mut by_col: Vec<usize> = nodes.to_vec();
        by_col.sort_by_key(|&i| {
            let (ix, iy) = grid.ij(i);
            (ix, iy)
        });
        let col_rev: Vec<usize> = by_col.iter().rev().copied().collect();
        vec![fwd, rev, by_col, col_rev]
    } else {
        Vec::new()
    };

    let mut scratch = vec![0.0f64; grid.len()];
    while iterations < p.max_iter {
        let diff = match p.sweep {
            Sweep::Jacobi => {
                scratch.copy_from_slice(field.values());
                let updates: Vec<(usize, f64)> = nodes
                    .par_iter()
                    .map(|&i| (i, dpp_update(&field, &stencil, f, i)))
                    .collect();
                let mut diff = 0.0f64;
                for (i, v) in updates {
                    diff = diff.max((v - scratch[i]).abs());
                    scratch[i] = v;
                }
                field.values_mut().copy_from_slice(&scratch);
                diff
            }
            Sweep::GaussSeidel => {
                let order = &orders[iterations % orders.len()];
                let mut diff = 0.0f64;
                for &i in order {
                    let v = dpp_update(&field, &stencil, f, i);
                    diff = diff.max((v - field.value(i)).abs());
                    field.set(i, v);
                }
                diff
            }
        };
        iterations += 1;
        history.push((iterations, diff));
        if diff <= tol {
            // Successive differences can dip below tol before the fixed
            // point is reached (Gauss–Seidel in particular); accept only
            // when the true residual agrees.
            let res = residual(&field, &stencil, f).sup_norm();
            if res <= tol {
                field.assert_finite()?;
                return Ok(Solution {
                    field,
                    stencil,
                    iterations,
                    residual: res,
                    history,
                });
            }
        }
    }
    let res = residual(&field, &stencil, f).sup_norm();
    if res <= tol {
        field.assert_finite()?;
        return Ok(Solution {
            field,
            stencil,
            iterations,
            residual: res,
            history,
        });
    }
    Err(SolverError::NoConvergence {
        iterations,
        residual: res,
        tol,
    })
}

/// The 1D family u_r on (−R, R): (R²−r²)/2 on the plateau |x| ≤ r and
/// (R²−x²)/2 outside it. Solves −Δ∞u = |∇u|² for every r ∈ [0, R] but
/// −Δ∞ᴺu = 1 only for r = 0 — sampled here so the residual can exhibit the
/// failure of the DPP for r > 0.
pub fn one_dim_family(grid: &Arc<Grid>, r: f64) -> Result<ScalarField, SolverError> {
    let domain = grid.domain.as_ref().ok_or(GridError::DomainRequired)?;
    let &ConvexDomain::Interval { a, b } = domain else {
        return Err(SolverError::NotSymmetricInterval);
    };
    if (a + b).abs() > 1e-12 * (b - a) {
        return Err(SolverError::NotSymmetricInterval);
    }
    let big_r = b;
    if !(0.0..=big_r).contains(&r) {
        return Err(SolverError::BadPlateauRadius { r, max: big_r });
    }
    Ok(ScalarField::sample(grid.clone(), |p| {
        let x = p[0].abs().max(r).min(big_r);
        (big_r * big_r - x * x) / 2.0
    }))
}

/// Evaluates Δ∞ᴺ on a quadratic probe: the degenerate interval
/// [⟨Ap,p⟩/|p|², ⟨Ap,p⟩/|p|²] when the gradient p ≠ 0, and the interval
/// between the extreme Hessian eigenvalues when p = 0.
pub fn normalized_inf_laplacian(probe: &QuadraticProbe) -> (f64, f64) {
    let p = probe.gradient;
    let p_sq = dot(p, p);
    if p_sq > 0.0 {
        let a = probe.hessian;
        let ap = [
            a[0][0] * p[0] + a[0][1] * p[1],
            a[1][0] * p[0] + a[1][1] * p[1],
        ];
        let q = dot(ap, p) / p_sq;
        (q, q)
    } else if probe.dim == 1 {
        (probe.hessian[0][0], probe.hessian[0][0])
    } else {
        sym2_eigenvalues(
            probe.hessian[0][0],
            probe.hessian[0][1],
            probe.hessian[1][1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexDomain;

    fn interval() -> ConvexDomain {
        ConvexDomain::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn dpp_update_examples() {
        // Zero field, f ≡ 1, eps = 0.1 → eps²/2 = 0.005.
        let d = interval();
        let grid = Arc::new(build_grid(&d, 0.1 / 3.0).unwrap());
        let stencil = build_ring(&grid, 0.1, 2).unwrap();
        let zero = ScalarField::zeros(grid.clone());
        let center = grid.node_at([0.0, 0.0]).unwrap();
        let got = dpp_update(&zero, &stencil, &SourceTerm::Constant(1.0), center);
        assert!((got - 0.005).abs() < 1e-15);

        // f ≡ 0 → plain ½(max+min).
        let got = dpp_update(&zero, &stencil, &SourceTerm::Constant(0.0), center);
        assert_eq!(got, 0.0);
    }

    #[test]
    fn quadratic_is_exact_fixed_point() {
        // With an exact ring {x±ε} the 1D quadratic (1−x²)/2 satisfies
        // u = ½(u(x−ε)+u(x+ε)) + ε²/2 identically.
        let d = interval();
        let grid = Arc::new(build_grid(&d, 0.125).unwrap());
        let stencil = build_ring(&grid, 0.25, 2).unwrap();
        let quad = ScalarField::sample(grid.clone(), |p| (1.0 - p[0] * p[0]) / 2.0);
        let f = SourceTerm::Constant(1.0);
        for &i in grid.inside_nodes() {
            let x = grid.position(i)[0];
            if x.abs() <= 1.0 - 0.25 {
                let got = dpp_update(&quad, &stencil, &f, i);
                assert!(
                    (got - quad.value(i)).abs() < 1e-15,
                    "node x={x}: {got} vs {}",
                    quad.value(i)
                );
            }
        }
        // residual of the exact quadratic vanishes on interior-ring nodes
        let res = residual(&quad, &stencil, &f);
        for &i in grid.inside_nodes() {
            if grid.position(i)[0].abs() <= 0.75 {
                assert!(res.value(i) < 1e-15);
            }
        }
    }

    #[test]
    fn quadratic_fixed_point_2d() {
        // Affine fields are reproduced exactly by the bilinear ring samples,
        // so with f ≡ 0 the residual is float noise. Isotropic quadratics
        // a + ⟨p,x⟩ − ½c|x|² are fixed points of the update with f ≡ c up
        // to the bilinear interpolation error of the x² terms, O(c·h²).
        let d = ConvexDomain::ball([0.0, 0.0], 1.0).unwrap();
        let grid = Arc::new(build_grid(&d, 0.1).unwrap());
        let stencil = build_ring(&grid, 0.3, 16).unwrap();

        let affine = ScalarField::sample(grid.clone(), |p| 0.7 + 0.2 * p[0] - 0.4 * p[1]);
        let res = residual(&affine, &stencil, &SourceTerm::Constant(0.0));
        for &i in grid.inside_nodes() {
            if grid.boundary_dist(i) > 0.3 {
                assert!(res.value(i) < 1e-14, "affine residual {}", res.value(i));
            }
        }

        let c = 2.0;
        let quad = ScalarField::sample(grid.clone(), |p| {
            1.0 + 0.1 * p[0] - 0.5 * c * (p[0] * p[0] + p[1] * p[1])
        });
        let res = residual(&quad, &stencil, &SourceTerm::Constant(c));
        let h = grid.h;
        for &i in grid.inside_nodes() {
            if grid.boundary_dist(i) > 0.3 {
                assert!(
                    res.value(i) <= c * h * h,
                    "quadratic residual {} > c·h² = {}",
                    res.value(i),
                    c * h * h
                );
            }
        }
    }

    #[test]
    fn plateau_family_residual() {
        // u_r with r = 0.5 has residual exactly eps²/2 at the plateau center.
        let d = interval();
        let grid = Arc::new(build_grid(&d, 0.125 / 3.0).unwrap());
        let stencil = build_ring(&grid, 0.125, 2).unwrap();
        let u = one_dim_family(&grid, 0.5).unwrap();
        assert!((u.value(grid.node_at([0.0, 0.0]).unwrap()) - 0.375).abs() < 1e-15);
        assert!((u.value(grid.node_at([0.5, 0.0]).unwrap()) - 0.375).abs() < 1e-15);
        assert!((u.value(grid.node_at([0.75, 0.0]).unwrap()) - 0.21875).abs() < 1e-15);

        let res = residual(&u, &stencil, &SourceTerm::Constant(1.0));
        let center = grid.node_at([0.0, 0.0]).unwrap();
        assert!((res.value(center) - 0.125 * 0.125 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn plateau_family_guards() {
        let grid = Arc::new(build_grid(&interval(), 0.05).unwrap());
        assert!(one_dim_family(&grid, -0.1).is_err());
        assert!(one_dim_family(&grid, 1.1).is_err());
        // r = R collapses to the zero function.
        let u = one_dim_family(&grid, 1.0).unwrap();
        assert!(u.sup_norm() == 0.0);
        // r = 0 is the exact solution.
        let u = one_dim_family(&grid, 0.0).unwrap();
        let c = grid.node_at([0.0, 0.0]).unwrap();
        assert_eq!(u.value(c), 0.5);
    }

    #[test]
    fn solve_1d_matches_exact_solution() {
        let d = interval();
        let sol = solve(
            &d,
            &SourceTerm::Constant(1.0),
            &SchemeParams::new(1.0 / 32.0),
        )
        .unwrap();
        let grid = &sol.field.grid;
        let center = grid.node_at([0.0, 0.0]).unwrap();
        assert!((sol.field.value(center) - 0.5).abs() < 0.02);
        let mut sup = 0.0f64;
        for &i in grid.inside_nodes() {
            let x = grid.position(i)[0];
            sup = sup.max((sol.field.value(i) - (1.0 - x * x) / 2.0).abs());
        }
        assert!(sup <= 0.02, "sup error {sup}");
    }

    #[test]
    fn solve_zero_source_is_zero() {
        let d = interval();
        let sol = solve(&d, &SourceTerm::Constant(0.0), &SchemeParams::new(0.125)).unwrap();
        assert_eq!(sol.field.sup_norm(), 0.0);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn solve_rejects_negative_source() {
        let d = interval();
        let err = solve(&d, &SourceTerm::Constant(-1.0), &SchemeParams::new(0.125));
        assert!(matches!(err, Err(SolverError::NegativeSource { .. })));
    }

    #[test]
    fn jacobi_matches_gauss_seidel() {
        let d = interval();
        let gs = solve(&d, &SourceTerm::Constant(1.0), &SchemeParams::new(0.125)).unwrap();
        let ja = solve(
            &d,
            &SourceTerm::Constant(1.0),
            &SchemeParams::new(0.125).with_sweep(Sweep::Jacobi),
        )
        .unwrap();
        // Both stop at successive-diff ≤ tol; the remaining gap to the fixed
        // point is up to tol/(1−ρ) ≈ tol·(diam/eps)², here ~1e−6.
        assert!(gs.field.sup_diff(&ja.field) < 1e-5);
        assert!(gs.iterations < ja.iterations, "GS should converge faster");
    }

    #[test]
    fn jacobi_deterministic_across_thread_counts() {
        let d = ConvexDomain::ball([0.0, 0.0], 1.0).unwrap();
        let params = SchemeParams::new(0.3).with_sweep(Sweep::Jacobi);
        let f = SourceTerm::Constant(1.0);
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let s1 = pool1.install(|| solve(&d, &f, &params)).unwrap();
        let s4 = pool4.install(|| solve(&d, &f, &params)).unwrap();
        for i in 0..s1.field.grid.len() {
            assert_eq!(s1.field.value(i).to_bits(), s4.field.value(i).to_bits());
        }
    }

    #[test]
    fn monotone_iteration_and_positivity() {
        // Iterates from 0 with f ≥ 0 are nondecreasing; the solved field is
        // strictly positive at every inside node.
        let d = ConvexDomain::ball([0.0, 0.0], 1.0).unwrap();
        let grid = Arc::new(build_grid(&d, 0.1).unwrap());
        let stencil = build_ring(&grid, 0.3, 16).unwrap();
        let f = SourceTerm::Constant(1.0);
        let mut field = ScalarField::zeros(grid.clone());
        for _ in 0..50 {
            let mut next = field.clone();
            for &i in grid.inside_nodes() {
                next.set(i, dpp_update(&field, &stencil, &f, i));
            }
            for &i in grid.inside_nodes() {
                assert!(next.value(i) >= field.value(i));
            }
            field = next;
        }
        let sol = solve(&d, &f, &SchemeParams::new(0.3)).unwrap();
        for &i in sol.field.grid.inside_nodes() {
            assert!(sol.field.value(i) > 0.0);
        }
    }

    #[test]
    fn discrete_comparison_in_source() {
        let d = interval();
        let s1 = solve(&d, &SourceTerm::Constant(1.0), &SchemeParams::new(0.125)).unwrap();
        let s2 = solve(&d, &SourceTerm::Constant(2.0), &SchemeParams::new(0.125)).unwrap();
        for &i in s1.field.grid.inside_nodes() {
            assert!(s1.field.value(i) <= s2.field.value(i) + 1e-12);
        }
    }

    #[test]
    fn convergence_rate_first_order() {
        // sup-error against (1−x²)/2 halves (ratio ≥ 1.5) per eps halving.
        let d = interval();
        let mut errors = Vec::new();
        for eps in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let sol = solve(&d, &SourceTerm::Constant(1.0), &SchemeParams::new(eps)).unwrap();
            let grid = &sol.field.grid;
            let sup = grid
                .inside_nodes()
                .iter()
                .map(|&i| {
                    let x = grid.position(i)[0];
                    (sol.field.value(i) - (1.0 - x * x) / 2.0).abs()
                })
                .fold(0.0, f64::max);
            errors.push(sup);
        }
        assert!(errors[0] / errors[1] >= 1.5, "errors {errors:?}");
        assert!(errors[1] / errors[2] >= 1.5, "errors {errors:?}");
    }

    #[test]
    fn normalized_inf_laplacian_examples() {
        let probe = QuadraticProbe::new_2d([0.0, 0.0], 0.0, [1.0, 0.0], [[-1.0, 0.0], [0.0, -1.0]]);
        assert_eq!(normalized_inf_laplacian(&probe), (-1.0, -1.0));

        let critical =
            QuadraticProbe::new_2d([0.0, 0.0], 0.0, [0.0, 0.0], [[-1.0, 0.0], [0.0, 2.0]]);
        assert_eq!(normalized_inf_laplacian(&critical), (-1.0, 2.0));

        // Probe of u = (R²−|x|²)/2 at any x: gradient −x, Hessian −I, so
        // −Δ∞ᴺu = 1 everywhere.
        for x in [[0.3, -0.4], [0.0, 0.0], [0.9, 0.1]] {
            let probe = QuadraticProbe::new_2d(
                x,
                (1.0 - dot(x, x)) / 2.0,
                [-x[0], -x[1]],
                [[-1.0, 0.0], [0.0, -1.0]],
            );
            let (lo, hi) = normalized_inf_laplacian(&probe);
            assert!((lo + 1.0).abs() < 1e-15 && (hi + 1.0).abs() < 1e-15);
        }
    }
}
