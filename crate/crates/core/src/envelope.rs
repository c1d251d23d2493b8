//! The w = −√u transformation and its convex-envelope machinery.
//!
//! A positive (sub/super)solution of −Δ∞ᴺu = 1 corresponds one-to-one with a
//! negative restricted (super/sub)solution w = −u^{1/2} of
//!
//!   F(w, ∇w, ∇²w) = 0,   F(w, p, A) = −⟨Ap, p⟩ − (1/w)(|p|⁴ + ½|p|²),
//!
//! the "restricted" notion adding an eigenvalue condition at critical points
//! of the test function: λ_min(∇²ψ) ≤ −1/(2w) for supersolutions (λ_max ≥,
//! mirrored, for subsolutions). The convex envelope w** — the largest convex
//! function below w — is evaluated here exactly at grid resolution together
//! with Carathéodory witnesses: points x₁…x_k (k ≤ n+1) and positive weights
//! with Σλᵢxᵢ = x and Σλᵢw(xᵢ) = w**(x).
//!
//! w**(x₀) over the finite lifted cloud {(xᵢ, w(xᵢ))} equals the optimum of
//! the supporting-plane LP max{a₀ + ⟨a, x₀⟩ : a₀ + ⟨a, xᵢ⟩ ≤ w(xᵢ) ∀i}, i.e.
//! the lower convex hull evaluated at x₀. Most nodes of a convex field are
//! hull vertices and are certified k=1 by a direct supporting-plane check;
//! the LP (randomized Seidel, fixed per-node seeds) handles the rest and
//! yields the witnesses from its contact set.

use crate::grid::{Grid, ScalarField};
use crate::linalg::{cross, dist, dot, sub, sym2_eigenvalues, Point};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("field is negative at {count} node(s), first offenders {first:?}: cannot take −√u")]
    NegativeInput { count: usize, first: Vec<usize> },
    #[error("F(w, p, A) is defined only for w < 0, got w = {0}")]
    NonNegativeW(f64),
    #[error("witness extraction failed at node {0}")]
    WitnessFailure(usize),
}

/// A quadratic test function ψ(x) = value + ⟨p, x−x₀⟩ + ½⟨A(x−x₀), x−x₀⟩;
/// the desk-scale stand-in for jets and C² test functions.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticProbe {
    pub dim: usize,
    pub center: Point,
    pub value: f64,
    pub gradient: Point,
    /// Symmetrized on construction.
    pub hessian: [[f64; 2]; 2],
}

impl QuadraticProbe {
    pub fn new_1d(x0: f64, value: f64, slope: f64, second: f64) -> Self {
        QuadraticProbe {
            dim: 1,
            center: [x0, 0.0],
            value,
            gradient: [slope, 0.0],
            hessian: [[second, 0.0], [0.0, 0.0]],
        }
    }

    pub fn new_2d(center: Point, value: f64, gradient: Point, hessian: [[f64; 2]; 2]) -> Self {
        let off = 0.5 * (hessian[0][1] + hessian[1][0]);
        QuadraticProbe {
            dim: 2,
            center,
            value,
            gradient,
            hessian: [[hessian[0][0], off], [off, hessian[1][1]]],
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        let d = sub(x, self.center);
        let ad = [
            self.hessian[0][0] * d[0] + self.hessian[0][1] * d[1],
            self.hessian[1][0] * d[0] + self.hessian[1][1] * d[1],
        ];
        self.value + dot(self.gradient, d) + 0.5 * dot(ad, d)
    }

    pub fn eigenvalue_range(&self) -> (f64, f64) {
        if self.dim == 1 {
            (self.hessian[0][0], self.hessian[0][0])
        } else {
            sym2_eigenvalues(self.hessian[0][0], self.hessian[0][1], self.hessian[1][1])
        }
    }
}

/// w = −√u together with the field it came from.
#[derive(Debug, Clone)]
pub struct TransformedField {
    pub w: ScalarField,
    pub source: ScalarField,
}

/// Applies u ↦ w = −u^{1/2} nodewise. Rejects fields that are negative on
/// inside or collar nodes; squaring w restores u to float precision.
pub fn transform(u: &ScalarField) -> Result<TransformedField, EnvelopeError> {
    let g = &u.grid;
    let offenders: Vec<usize> = (0..g.len())
        .filter(|&i| (g.is_inside(i) || g.is_collar(i)) && u.value(i) < 0.0)
        .collect();
    if !offenders.is_empty() {
        return Err(EnvelopeError::NegativeInput {
            count: offenders.len(),
            first: offenders.into_iter().take(8).collect(),
        });
    }
    let mut w = ScalarField::zeros(g.clone());
    for i in 0..g.len() {
        w.set(i, -u.value(i).max(0.0).sqrt());
    }
    w.boundary_datum = -u.boundary_datum.max(0.0).sqrt();
    Ok(TransformedField {
        w,
        source: u.clone(),
    })
}

/// F(w, p, A) = −⟨Ap, p⟩ − (1/w)(|p|⁴ + ½|p|²), defined for w < 0.
pub fn evaluate_f(w: f64, p: Point, a: [[f64; 2]; 2]) -> Result<f64, EnvelopeError> {
    if w >= 0.0 {
        return Err(EnvelopeError::NonNegativeW(w));
    }
    let ap = [
        a[0][0] * p[0] + a[0][1] * p[1],
        a[1][0] * p[0] + a[1][1] * p[1],
    ];
    let p_sq = dot(p, p);
    Ok(-dot(ap, p) - (p_sq * p_sq + 0.5 * p_sq) / w)
}

/// Outcome of a restricted sub/supersolution probe. `f_value` is F at the
/// probe; `critical_margin` is the slack of the eigenvalue condition when
/// the probe gradient vanishes (≥ 0 means satisfied).
#[derive(Debug, Clone, Copy)]
pub struct RestrictedVerdict {
    pub f_value: f64,
    pub critical_margin: Option<f64>,
    pub pass: bool,
}

/// Supersolution probe at a point with w(x) = `w_val` < 0: requires
/// F(w, ∇ψ, ∇²ψ) ≥ 0 and, when ∇ψ = 0, λ_min(∇²ψ) ≤ −1/(2w).
pub fn restricted_super_probe(
    w_val: f64,
    probe: &QuadraticProbe,
    tol: f64,
) -> Result<RestrictedVerdict, EnvelopeError> {
    let f_value = evaluate_f(w_val, probe.gradient, probe.hessian)?;
    let critical_margin = (dot(probe.gradient, probe.gradient) == 0.0).then(|| {
        let (lambda_min, _) = probe.eigenvalue_range();
        -1.0 / (2.0 * w_val) - lambda_min
    });
    let pass = f_value >= -tol && critical_margin.is_none_or(|m| m >= -tol);
    Ok(RestrictedVerdict {
        f_value,
        critical_margin,
        pass,
    })
}

/// Subsolution probe, mirrored: F ≤ 0 and, at critical points,
/// λ_max(∇²ψ) ≥ −1/(2w).
pub fn restricted_sub_probe(
    w_val: f64,
    probe: &QuadraticProbe,
    tol: f64,
) -> Result<RestrictedVerdict, EnvelopeError> {
    let f_value = evaluate_f(w_val, probe.gradient, probe.hessian)?;
    let critical_margin = (dot(probe.gradient, probe.gradient) == 0.0).then(|| {
        let (_, lambda_max) = probe.eigenvalue_range();
        lambda_max - (-1.0 / (2.0 * w_val))
    });
    let pass = f_value <= tol && critical_margin.is_none_or(|m| m >= -tol);
    Ok(RestrictedVerdict {
        f_value,
        critical_margin,
        pass,
    })
}

/// Least-squares quadratic fit on the 3×3 (1D: 3-point) neighborhood of an
/// inside node. `None` when the neighborhood leaves the lattice.
pub fn fit_quadratic_probe(field: &ScalarField, node_idx: usize) -> Option<QuadraticProbe> {
    let g = &field.grid;
    let (ix, iy) = g.ij(node_idx);
    let h = g.h;
    let x0 = g.position(node_idx);
    if g.ny == 1 {
        if ix == 0 || ix + 1 >= g.nx {
            return None;
        }
        let (um, u0, up) = (
            field.value(node_idx - 1),
            field.value(node_idx),
            field.value(node_idx + 1),
        );
        return Some(QuadraticProbe::new_1d(
            x0[0],
            u0,
            (up - um) / (2.0 * h),
            (up - 2.0 * u0 + um) / (h * h),
        ));
    }
    if ix == 0 || iy == 0 || ix + 1 >= g.nx || iy + 1 >= g.ny {
        return None;
    }
    // Basis (1, dx, dy, dx²/2, dx·dy, dy²/2); 9 samples, 6 coefficients.
    let mut ata = vec![vec![0.0f64; 6]; 6];
    let mut atb = vec![0.0f64; 6];
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let idx = g.index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
            let (sx, sy) = (dx as f64 * h, dy as f64 * h);
            let row = [1.0, sx, sy, 0.5 * sx * sx, sx * sy, 0.5 * sy * sy];
            let v = field.value(idx);
            for i in 0..6 {
                for j in 0..6 {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i] += row[i] * v;
            }
        }
    }
    let c = crate::linalg::solve_dense(&mut ata, &mut atb)?;
    Some(QuadraticProbe::new_2d(
        x0,
        c[0],
        [c[1], c[2]],
        [[c[3], c[4]], [c[4], c[5]]],
    ))
}

/// Carathéodory witnesses of the envelope: for each inside node (in
/// `grid.inside_nodes()` order) the points and positive weights with
/// Σλᵢxᵢ = x and Σλᵢw(xᵢ) = w**(x), k ≤ dimension+1.
#[derive(Debug, Clone)]
pub struct EnvelopeWitness {
    pub grid: Arc<Grid>,
    /// entries[s] aligned with grid.inside_nodes()[s]: (node index, λ).
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl EnvelopeWitness {
    pub fn of_node(&self, node_idx: usize) -> Option<&[(usize, f64)]> {
        let s = self.grid.inside_nodes().binary_search(&node_idx).ok()?;
        Some(&self.entries[s])
    }

    /// Checks the witness invariants at every inside node: k ≤ dimension+1,
    /// strictly positive weights summing to 1 within 1e−12, Σλⱼxⱼ = x
    /// within 1e−9·diam, and Σλⱼw(xⱼ) reproducing w** within
    /// `reproduction_tol`. Returns the first offending node.
    pub fn validate(
        &self,
        w: &ScalarField,
        env: &ScalarField,
        reproduction_tol: f64,
    ) -> Result<(), usize> {
        let g = &self.grid;
        let k_max = g.dimension() + 1;
        let diam = {
            let (lo, hi) = (g.position(0), g.position(g.len() - 1));
            dist(lo, hi).max(g.h)
        };
        for (s, &idx) in g.inside_nodes().iter().enumerate() {
            let witness = &self.entries[s];
            let mut lambda_sum = 0.0;
            let mut xsum = [0.0, 0.0];
            let mut wsum = 0.0;
            for &(j, lambda) in witness {
                if lambda <= 0.0 {
                    return Err(idx);
                }
                lambda_sum += lambda;
                let p = g.position(j);
                xsum[0] += lambda * p[0];
                xsum[1] += lambda * p[1];
                wsum += lambda * w.value(j);
            }
            let x = g.position(idx);
            let ok = witness.len() <= k_max
                && (lambda_sum - 1.0).abs() <= 1e-12
                && dist(xsum, x) <= 1e-9 * diam
                && (wsum - env.value(idx)).abs() <= reproduction_tol;
            if !ok {
                return Err(idx);
            }
        }
        Ok(())
    }
}

/// Interiority report for envelope witnesses: nodes counted as interior at
/// grid scale (boundary_dist > h) whose witness points do not all lie
/// strictly inside Ω.
#[derive(Debug, Clone)]
pub struct InteriorityReport {
    pub checked: usize,
    pub offending_nodes: Vec<usize>,
}

impl InteriorityReport {
    pub fn all_interior(&self) -> bool {
        self.offending_nodes.is_empty()
    }
}

/// Interiority check: for each inside node deeper than one
/// spacing from ∂Ω, every witness point must be an inside node.
pub fn witness_interiority(wit: &EnvelopeWitness) -> InteriorityReport {
    let g = &wit.grid;
    let mut checked = 0;
    let mut offending = Vec::new();
    for (s, &idx) in g.inside_nodes().iter().enumerate() {
        if g.boundary_dist(idx) <= g.h {
            continue;
        }
        checked += 1;
        if wit.entries[s].iter().any(|&(j, _)| !g.is_inside(j)) {
            offending.push(idx);
        }
    }
    InteriorityReport {
        checked,
        offending_nodes: offending,
    }
}

/// Convex envelope w** of a grid function, evaluated at every node, plus
/// witnesses. The point cloud is the inside nodes together with the
/// one-layer boundary collar. Values at non-inside nodes pass through
/// unchanged. w** ≤ w nodewise; w** is convex along grid lines.
pub fn convex_envelope(w: &ScalarField) -> Result<(ScalarField, EnvelopeWitness), EnvelopeError> {
    let g = &w.grid;
    let cloud: Vec<usize> = (0..g.len())
        .filter(|&i| g.is_inside(i) || g.is_collar(i))
        .collect();
    let mut out = w.clone();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::with_capacity(g.inside_nodes().len());
    if g.ny == 1 {
        envelope_1d(w, &cloud, &mut out, &mut entries)?;
    } else {
        envelope_2d(w, &cloud, &mut out, &mut entries)?;
    }
    Ok((
        out,
        EnvelopeWitness {
            grid: g.clone(),
            entries,
        },
    ))
}

/// 1D: lower convex chain over the cloud, collinear points kept so that
/// every point on the chain (including flat runs) stays its own witness.
fn envelope_1d(
    w: &ScalarField,
    cloud: &[usize],
    out: &mut ScalarField,
    entries: &mut Vec<Vec<(usize, f64)>>,
) -> Result<(), EnvelopeError> {
    let g = &w.grid;
    // cloud is already sorted by x (row-major, single row)
    let pts: Vec<(f64, f64, usize)> = cloud
        .iter()
        .map(|&i| (g.position(i)[0], w.value(i), i))
        .collect();
    let mut chain: Vec<usize> = Vec::new(); // indices into pts
    for k in 0..pts.len() {
        while chain.len() >= 2 {
            let a = pts[chain[chain.len() - 2]];
            let b = pts[chain[chain.len() - 1]];
            let c = pts[k];
            // pop b when it lies strictly above the segment a–c
            if cross([b.0 - a.0, b.1 - a.1], [c.0 - b.0, c.1 - b.1]) < 0.0 {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(k);
    }
    let on_chain: std::collections::HashSet<usize> = chain.iter().map(|&k| pts[k].2).collect();
    for &idx in g.inside_nodes() {
        if on_chain.contains(&idx) {
            entries.push(vec![(idx, 1.0)]);
            continue;
        }
        let x = g.position(idx)[0];
        // bracketing chain segment
        let seg = chain
            .windows(2)
            .find(|s| pts[s[0]].0 <= x && x <= pts[s[1]].0)
            .ok_or(EnvelopeError::WitnessFailure(idx))?;
        let (xa, wa, ia) = pts[seg[0]];
        let (xb, wb, ib) = pts[seg[1]];
        let lambda = (xb - x) / (xb - xa);
        out.set(idx, lambda * wa + (1.0 - lambda) * wb);
        entries.push(vec![(ia, lambda), (ib, 1.0 - lambda)]);
    }
    Ok(())
}

fn envelope_2d(
    w: &ScalarField,
    cloud: &[usize],
    out: &mut ScalarField,
    entries: &mut Vec<Vec<(usize, f64)>>,
) -> Result<(), EnvelopeError> {
    let g = &w.grid;
    let pts: Vec<(Point, f64)> = cloud.iter().map(|&i| (g.position(i), w.value(i))).collect();
    let w_scale = 1.0 + pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let coord_scale = 1.0
        + pts
            .iter()
            .map(|p| p.0[0].abs().max(p.0[1].abs()))
            .fold(0.0, f64::max);
    let touch_tol = 1e-11 * w_scale;
    let slope_bound = 8.0 * w_scale / g.h;

    for &idx in g.inside_nodes() {
        let x0 = g.position(idx);
        // Fast path: central-difference slope as supporting-plane candidate.
        let candidate = central_slope(w, idx);
        if let Some(a) = candidate {
            let w0 = w.value(idx);
            let supported = pts.iter().all(|&(x, wx)| {
                w0 + a[0] * (x[0] - x0[0]) + a[1] * (x[1] - x0[1]) <= wx + touch_tol
            });
            if supported {
                entries.push(vec![(idx, 1.0)]);
                continue;
            }
        }
        // Exact supporting-plane LP.
        let (value, plane) = support_lp(&pts, x0, slope_bound, w_scale, coord_scale, idx as u64);
        if value >= w.value(idx) - touch_tol {
            entries.push(vec![(idx, 1.0)]);
            continue;
        }
        out.set(idx, value);
        let contact_tol = 1e-9 * (w_scale + slope_bound_used(&plane) * coord_scale);
        let contact: Vec<usize> = (0..pts.len())
            .filter(|&k| {
                let (x, wx) = pts[k];
                (plane[0] + plane[1] * x[0] + plane[2] * x[1] - wx).abs() <= contact_tol
            })
            .collect();
        let witness =
            pick_witnesses(&pts, &contact, x0).ok_or(EnvelopeError::WitnessFailure(idx))?;
        entries.push(witness.into_iter().map(|(k, l)| (cloud[k], l)).collect());
    }
    Ok(())
}

fn slope_bound_used(plane: &[f64; 3]) -> f64 {
    plane[1].abs().max(plane[2].abs())
}

/// Central-difference slope over the cloud values; inside nodes always have
/// their four axis neighbors inside or on the collar.
fn central_slope(w: &ScalarField, idx: usize) -> Option<[f64; 2]> {
    let g = &w.grid;
    let (ix, iy) = g.ij(idx);
    if ix == 0 || iy == 0 || ix + 1 >= g.nx || iy + 1 >= g.ny {
        return None;
    }
    let ax = (w.value(idx + 1) - w.value(idx - 1)) / (2.0 * g.h);
    let ay = (w.value(idx + g.nx) - w.value(idx - g.nx)) / (2.0 * g.h);
    Some([ax, ay])
}

/// Minimal witness set within the contact points: the node itself if
/// present, else the lexicographically smallest collinear pair containing
/// x₀, else a containing triangle (hull fan when the contact set is large).
fn pick_witnesses(pts: &[(Point, f64)], contact: &[usize], x0: Point) -> Option<Vec<(usize, f64)>> {
    const GEOM_TOL: f64 = 1e-10;
    // k = 1: x0 itself touches the plane.
    for &k in contact {
        if dist(pts[k].0, x0) <= GEOM_TOL {
            return Some(vec![(k, 1.0)]);
        }
    }
    // k = 2: first (lexicographic) pair with x0 strictly between.
    let pair_pool: &[usize] = contact;
    if pair_pool.len() <= 512 {
        for (i, &a) in pair_pool.iter().enumerate() {
            for &b in pair_pool.iter().skip(i + 1) {
                let da = sub(pts[a].0, x0);
                let db = sub(pts[b].0, x0);
                if cross(da, db).abs() <= GEOM_TOL * (1.0 + dist(pts[a].0, pts[b].0))
                    && dot(da, db) < 0.0
                {
                    let la = dist(pts[b].0, x0) / dist(pts[a].0, pts[b].0);
                    return Some(vec![(a, la), (b, 1.0 - la)]);
                }
            }
        }
    }
    // k = 3: triangle containing x0, from the contact set (exhaustive when
    // small, hull fan otherwise).
    let tri_pool: Vec<usize> = if contact.len() <= 64 {
        contact.to_vec()
    } else {
        hull_vertices(pts, contact)
    };
    for (i, &a) in tri_pool.iter().enumerate() {
        for (j, &b) in tri_pool.iter().enumerate().skip(i + 1) {
            for &c in tri_pool.iter().skip(j + 1) {
                if let Some(l) = barycentric(pts[a].0, pts[b].0, pts[c].0, x0) {
                    if l.iter().all(|&v| v > 1e-12) {
                        return Some(vec![(a, l[0]), (b, l[1]), (c, l[2])]);
                    }
                }
            }
        }
    }
    None
}

fn hull_vertices(pts: &[(Point, f64)], set: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = set.to_vec();
    order.sort_by(|&a, &b| {
        pts[a].0[0]
            .total_cmp(&pts[b].0[0])
            .then(pts[a].0[1].total_cmp(&pts[b].0[1]))
    });
    let half = |iter: &mut dyn Iterator<Item = usize>| -> Vec<usize> {
        let mut chain: Vec<usize> = Vec::new();
        for k in iter {
            while chain.len() >= 2 {
                let a = pts[chain[chain.len() - 2]].0;
                let b = pts[chain[chain.len() - 1]].0;
                let c = pts[k].0;
                if cross(sub(b, a), sub(c, b)) <= 0.0 {
                    chain.pop();
                } else {
                    break;
                }
            }
            chain.push(k);
        }
        chain
    };
    let lower = half(&mut order.iter().copied());
    let upper = half(&mut order.iter().rev().copied());
    let mut hull = lower;
    hull.extend(upper.into_iter().skip(1));
    hull.dedup();
    hull
}

fn barycentric(a: Point, b: Point, c: Point, x: Point) -> Option<[f64; 3]> {
    let det = cross(sub(b, a), sub(c, a));
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = cross(sub(b, x), sub(c, x)) / det;
    let l2 = cross(sub(c, x), sub(a, x)) / det;
    let l3 = 1.0 - l1 - l2;
    Some([l1, l2, l3])
}

// --- Supporting-plane LP ----------------------------------------------------
//
// max a₀ + a₁x₀ + a₂y₀  s.t.  a₀ + a₁xᵢ + a₂yᵢ ≤ wᵢ, |a₁|,|a₂| ≤ slope bound.
// Seidel's randomized incremental algorithm in dimension 3; per-node seeds
// keep the result deterministic.

fn support_lp(
    pts: &[(Point, f64)],
    x0: Point,
    slope_bound: f64,
    w_scale: f64,
    coord_scale: f64,
    seed: u64,
) -> (f64, [f64; 3]) {
    let a0_bound = w_scale + 2.0 * slope_bound * coord_scale;
    let cons: Vec<[f64; 4]> = pts.iter().map(|&(x, wx)| [1.0, x[0], x[1], wx]).collect();
    let mut order: Vec<u32> = (0..cons.len() as u32).collect();
    shuffle(&mut order, seed.wrapping_mul(0x9e3779b97f4a7c15) ^ 0x5eed);
    let feas_tol = 1e-12 * (w_scale + slope_bound * coord_scale + a0_bound);
    let obj = [1.0, x0[0], x0[1]];
    let bounds = [a0_bound, slope_bound, slope_bound];
    match seidel(&cons, &order, &obj, &bounds, feas_tol) {
        Some(y) => (obj[0] * y[0] + obj[1] * y[1] + obj[2] * y[2], y),
        // The LP is feasible by construction (the flat plane at min w);
        // a tolerance-induced failure degrades to "no chord below w(x₀)",
        // which the caller treats as a k = 1 vertex.
        None => (f64::INFINITY, [0.0; 3]),
    }
}

fn shuffle(order: &mut [u32], mut state: u64) {
    let mut next = || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    for i in (1..order.len()).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// max obj·y over rows[order] (a·y ≤ b, b in the last slot) within the box
/// |yᵢ| ≤ bounds[i]. Returns None when infeasible.
fn seidel(
    rows: &[[f64; 4]],
    order: &[u32],
    obj: &[f64; 3],
    bounds: &[f64; 3],
    feas_tol: f64,
) -> Option<[f64; 3]> {
    let d = 3;
    let mut y = box_vertex(obj, bounds, d);
    for (t, &k) in order.iter().enumerate() {
        let row = rows[k as usize];
        if eval_row(&row, &y, d) <= row[3] + feas_tol {
            continue;
        }
        // New optimum lies on this hyperplane; recurse over the rows already
        // processed plus the box of the eliminated variable.
        let prior: Vec<[f64; 4]> = order[..t].iter().map(|&i| rows[i as usize]).collect();
        y = on_hyperplane(&prior, &row, obj, bounds, d, feas_tol)?;
    }
    Some(y)
}

fn box_vertex(obj: &[f64; 3], bounds: &[f64; 3], d: usize) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..d {
        y[i] = if obj[i] >= 0.0 { bounds[i] } else { -bounds[i] };
    }
    y
}

fn eval_row(row: &[f64; 4], y: &[f64; 3], d: usize) -> f64 {
    (0..d).map(|i| row[i] * y[i]).sum()
}

/// Solve the LP restricted to eq·y = eq[3], eliminating the variable with
/// the largest coefficient, recursing into dimension d−1.
fn on_hyperplane(
    rows: &[[f64; 4]],
    eq: &[f64; 4],
    obj: &[f64; 3],
    bounds: &[f64; 3],
    d: usize,
    feas_tol: f64,
) -> Option<[f64; 3]> {
    let j = (0..d).max_by(|&a, &b| eq[a].abs().total_cmp(&eq[b].abs()))?;
    if eq[j].abs() < 1e-300 {
        return None;
    }
    // y_j = (eq[3] − Σ_{i≠j} eq[i] y_i) / eq[j]
    let keep: Vec<usize> = (0..d).filter(|&i| i != j).collect();
    let project = |row: &[f64; 4]| -> [f64; 4] {
        let f = row[j] / eq[j];
        let mut out = [0.0; 4];
        for (slot, &i) in keep.iter().enumerate() {
            out[slot] = row[i] - f * eq[i];
        }
        out[3] = row[3] - f * eq[3];
        out
    };
    let mut sub_rows: Vec<[f64; 4]> = rows.iter().map(project).collect();
    // box bounds of the eliminated variable become two ordinary rows
    let mut up = [0.0; 4];
    up[j] = 1.0;
    up[3] = bounds[j];
    sub_rows.push(project(&up));
    let mut lo = [0.0; 4];
    lo[j] = -1.0;
    lo[3] = bounds[j];
    sub_rows.push(project(&lo));

    let mut sub_obj = [0.0; 3];
    let fo = obj[j] / eq[j];
    for (slot, &i) in keep.iter().enumerate() {
        sub_obj[slot] = obj[i] - fo * eq[i];
    }
    let mut sub_bounds = [0.0; 3];
    for (slot, &i) in keep.iter().enumerate() {
        sub_bounds[slot] = bounds[i];
    }

    let sub_y = if d - 1 == 1 {
        solve_1d(&sub_rows, sub_obj[0], sub_bounds[0], feas_tol)?
    } else {
        let order: Vec<u32> = (0..sub_rows.len() as u32).collect();
        seidel_dim2(&sub_rows, &order, &sub_obj, &sub_bounds, feas_tol)?
    };

    let mut y = [0.0; 3];
    for (slot, &i) in keep.iter().enumerate() {
        y[i] = sub_y[slot];
    }
    y[j] = (eq[3] - keep.iter().map(|&i| eq[i] * y[i]).sum::<f64>()) / eq[j];
    Some(y)
}

fn seidel_dim2(
    rows: &[[f64; 4]],
    order: &[u32],
    obj: &[f64; 3],
    bounds: &[f64; 3],
    feas_tol: f64,
) -> Option<[f64; 3]> {
    let d = 2;
    let mut y = box_vertex(obj, bounds, d);
    for (t, &k) in order.iter().enumerate() {
        let row = rows[k as usize];
        if eval_row(&row, &y, d) <= row[3] + feas_tol {
            continue;
        }
        let prior: Vec<[f64; 4]> = order[..t].iter().map(|&i| rows[i as usize]).collect();
        y = on_hyperplane(&prior, &row, obj, bounds, d, feas_tol)?;
    }
    Some(y)
}

fn solve_1d(rows: &[[f64; 4]], obj: f64, bound: f64, feas_tol: f64) -> Option<[f64; 3]> {
    let mut lo = -bound;
    let mut hi = bound;
    for row in rows {
        let (a, b) = (row[0], row[3]);
        if a > 1e-300 {
            hi = hi.min(b / a);
        } else if a < -1e-300 {
            lo = lo.max(b / a);
        } else if b < -feas_tol {
            return None;
        }
    }
    if lo > hi + feas_tol {
        return None;
    }
    let mid = 0.5 * (lo + hi);
    let (lo, hi) = (lo.min(mid), hi.max(mid));
    let y0 = if obj > 0.0 {
        hi
    } else if obj < 0.0 {
        lo
    } else {
        0.0f64.clamp(lo, hi)
    };
    Some([y0, 0.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexDomain;
    use crate::grid::build_grid;
    use proptest::prelude::*;

    fn interval_grid(h: f64) -> Arc<Grid> {
        Arc::new(build_grid(&ConvexDomain::interval(-1.0, 1.0).unwrap(), h).unwrap())
    }

    fn square_grid(h: f64) -> Arc<Grid> {
        let d = ConvexDomain::polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
            .unwrap();
        Arc::new(build_grid(&d, h).unwrap())
    }

    #[test]
    fn transform_examples() {
        let g = interval_grid(0.125);
        let zero = ScalarField::zeros(g.clone());
        let t = transform(&zero).unwrap();
        assert_eq!(t.w.sup_norm(), 0.0);

        let u = ScalarField::sample(g.clone(), |p| (1.0 - p[0] * p[0]) / 2.0);
        let t = transform(&u).unwrap();
        let center = g.node_at([0.0, 0.0]).unwrap();
        // w(0) = −√(0.5) ≈ −0.70711
        assert!((t.w.value(center) + 0.5f64.sqrt()).abs() < 1e-12);
        #[allow(clippy::approx_constant)]
        let frozen = -0.70711;
        assert!((t.w.value(center) - frozen).abs() < 1e-5);

        // Round-trip: squaring restores u within 1e−14 relative.
        for &i in g.inside_nodes() {
            let back = t.w.value(i) * t.w.value(i);
            assert!((back - u.value(i)).abs() <= 1e-14 * u.value(i).abs().max(1.0));
        }
    }

    #[test]
    fn transform_rejects_negative() {
        let g = interval_grid(0.125);
        let u = ScalarField::sample(g, |p| p[0]); // negative on the left half
        match transform(&u) {
            Err(EnvelopeError::NegativeInput { count, first }) => {
                assert!(count > 0 && !first.is_empty());
            }
            other => panic!("expected NegativeInput, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_f_examples() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let f = evaluate_f(-1.0, [1.0, 0.0], id).unwrap();
        assert!((f - 0.5).abs() < 1e-15);

        let f = evaluate_f(-3.7, [0.0, 0.0], [[5.0, 1.0], [1.0, -2.0]]).unwrap();
        assert_eq!(f, 0.0);

        let f = evaluate_f(-2.0, [1.0, 0.0], [[0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!((f - 0.75).abs() < 1e-15);

        assert!(evaluate_f(0.0, [1.0, 0.0], id).is_err());
        assert!(evaluate_f(0.5, [1.0, 0.0], id).is_err());
    }

    #[test]
    fn restricted_super_probe_examples() {
        // w(x) = −√((1−x²)/2) at 0: second-order Taylor has p = 0,
        // A = [1/√2]; λ_min = 1/√2 equals −1/(2w) → pass with equality.
        let w0 = -(0.5f64).sqrt();
        let probe = QuadraticProbe::new_1d(0.0, w0, 0.0, 0.5f64.sqrt());
        let v = restricted_super_probe(w0, &probe, 1e-12).unwrap();
        assert!(v.pass);
        assert!(v.critical_margin.unwrap().abs() < 1e-12);

        let id = [[1.0, 0.0], [0.0, 1.0]];
        let probe = QuadraticProbe::new_2d([0.0, 0.0], -1.0, [1.0, 0.0], id);
        let v = restricted_super_probe(-1.0, &probe, 0.0).unwrap();
        assert!(v.pass && (v.f_value - 0.5).abs() < 1e-15);
        assert!(v.critical_margin.is_none());

        // p = 0, A = I: λ_min = 1 > −1/(2·(−1)) = 0.5 → fail.
        let probe = QuadraticProbe::new_2d([0.0, 0.0], -1.0, [0.0, 0.0], id);
        let v = restricted_super_probe(-1.0, &probe, 0.0).unwrap();
        assert!(!v.pass);
        assert!((v.critical_margin.unwrap() - (0.5 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn restricted_sub_probe_mirrors() {
        // λ_max(A) ≥ −1/(2w) at critical points.
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let v = restricted_sub_probe(
            -1.0,
            &QuadraticProbe::new_2d([0.0; 2], -1.0, [0.0; 2], id),
            0.0,
        )
        .unwrap();
        assert!(v.pass); // λ_max = 1 ≥ 0.5, F = 0 ≤ 0
        let neg = [[-1.0, 0.0], [0.0, -1.0]];
        let v = restricted_sub_probe(
            -1.0,
            &QuadraticProbe::new_2d([0.0; 2], -1.0, [0.0; 2], neg),
            0.0,
        )
        .unwrap();
        assert!(!v.pass); // λ_max = −1 < 0.5
    }

    #[test]
    fn envelope_1d_already_convex() {
        let g = interval_grid(0.125);
        let w = ScalarField::sample(g.clone(), |p| p[0].abs() - 1.0);
        let (env, wit) = convex_envelope(&w).unwrap();
        assert_eq!(env.sup_diff(&w), 0.0);
        for &i in g.inside_nodes() {
            assert_eq!(wit.of_node(i).unwrap(), &[(i, 1.0)]);
        }
    }

    #[test]
    fn envelope_1d_concave_becomes_chord() {
        // w = −x² on [−1,1]: the largest convex minorant is the constant −1
        // (chord through the endpoints); witnesses sit on the boundary.
        let g = interval_grid(0.125);
        let w = ScalarField::sample(g.clone(), |p| -p[0] * p[0]);
        let (env, wit) = convex_envelope(&w).unwrap();
        for &i in g.inside_nodes() {
            assert!(
                (env.value(i) + 1.0).abs() < 1e-12,
                "node {i}: {}",
                env.value(i)
            );
        }
        let center = g.node_at([0.0, 0.0]).unwrap();
        let witness = wit.of_node(center).unwrap();
        assert_eq!(witness.len(), 2);
        let xs: Vec<f64> = witness.iter().map(|&(j, _)| g.position(j)[0]).collect();
        assert!((xs[0] + 1.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
        let lambda_sum: f64 = witness.iter().map(|&(_, l)| l).sum();
        assert!((lambda_sum - 1.0).abs() < 1e-12);

        // The interiority check must flag them: they sit on the boundary.
        let report = witness_interiority(&wit);
        assert!(!report.all_interior());
        assert!(report.offending_nodes.contains(&center));
    }

    #[test]
    fn envelope_2d_convex_is_fixed_point() {
        let g = square_grid(0.25);
        let w = ScalarField::sample(g.clone(), |p| p[0] * p[0] + 0.5 * p[1] * p[1] + 0.1 * p[0]);
        let (env, wit) = convex_envelope(&w).unwrap();
        assert!(env.sup_diff(&w) < 1e-12);
        for &i in g.inside_nodes() {
            assert_eq!(wit.of_node(i).unwrap().len(), 1);
        }
        let report = witness_interiority(&wit);
        assert!(report.all_interior());
    }

    #[test]
    fn envelope_2d_concave_bowl() {
        // w = −|x|² on the square: w** is the convex interpolation of the
        // boundary values, strictly below w in the interior.
        let g = square_grid(0.25);
        let w = ScalarField::sample(g.clone(), |p| -(p[0] * p[0] + p[1] * p[1]));
        let (env, wit) = convex_envelope(&w).unwrap();
        let center = g.node_at([0.0, 0.0]).unwrap();
        assert!(env.value(center) < w.value(center) - 0.5);
        // w** ≤ w everywhere; witnesses reproduce the value.
        for (s, &i) in g.inside_nodes().iter().enumerate() {
            assert!(env.value(i) <= w.value(i) + 1e-10);
            let witness = &wit.entries[s];
            let wsum: f64 = witness.iter().map(|&(j, l)| l * w.value(j)).sum();
            let lsum: f64 = witness.iter().map(|&(_, l)| l).sum();
            assert!((lsum - 1.0).abs() < 1e-9);
            assert!((wsum - env.value(i)).abs() < 1e-8 * (1.0 + w.sup_norm()));
            assert!(witness.len() <= 3);
            assert!(witness.iter().all(|&(_, l)| l > 0.0));
            // Σλⱼxⱼ = x
            let mut xsum = [0.0, 0.0];
            for &(j, l) in witness {
                let p = g.position(j);
                xsum[0] += l * p[0];
                xsum[1] += l * p[1];
            }
            let x = g.position(i);
            assert!(dist(xsum, x) < 1e-9);
        }
    }

    #[test]
    fn envelope_midpoint_convexity() {
        let g = square_grid(0.25);
        let w = ScalarField::sample(g.clone(), |p| (3.0 * p[0]).sin() + (2.0 * p[1]).cos());
        let (env, _) = convex_envelope(&w).unwrap();
        // Along axis and diagonal node pairs with on-grid midpoints.
        for &i in g.inside_nodes() {
            let (ix, iy) = g.ij(i);
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                let (jx, jy) = (ix as i64 + 2 * dx, iy as i64 + 2 * dy);
                if jx < 0 || jy < 0 || jx as usize >= g.nx || jy as usize >= g.ny {
                    continue;
                }
                let j = g.index(jx as usize, jy as usize);
                let mid = g.index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
                if !(g.is_inside(i) && g.is_inside(j) && g.is_inside(mid)) {
                    continue;
                }
                assert!(
                    env.value(mid) <= 0.5 * (env.value(i) + env.value(j)) + 1e-9,
                    "midpoint convexity fails at {i}"
                );
            }
        }
    }

    #[test]
    fn fit_quadratic_probe_exact_on_quadratics() {
        let g = square_grid(0.25);
        let u = ScalarField::sample(g.clone(), |p| {
            1.0 + 0.5 * p[0] - 0.25 * p[1] + 0.5 * (2.0 * p[0] * p[0] - p[0] * p[1] + p[1] * p[1])
        });
        let idx = g.node_at([0.0, 0.0]).unwrap();
        let probe = fit_quadratic_probe(&u, idx).unwrap();
        assert!((probe.value - 1.0).abs() < 1e-10);
        assert!((probe.gradient[0] - 0.5).abs() < 1e-10);
        assert!((probe.gradient[1] + 0.25).abs() < 1e-10);
        assert!((probe.hessian[0][0] - 2.0).abs() < 1e-9);
        assert!((probe.hessian[0][1] + 0.5).abs() < 1e-9);
        assert!((probe.hessian[1][1] - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Envelope order, idempotence, and monotonicity on random fields.
        #[test]
        fn envelope_invariants(seed in 0u64..5000) {
            let g = square_grid(0.4);
            let noise = |i: usize, s: u64| {
                let x = (i as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(s);
                ((x >> 11) % 2048) as f64 / 1024.0 - 1.0
            };
            let mut w1 = ScalarField::zeros(g.clone());
            let mut w2 = ScalarField::zeros(g.clone());
            for i in 0..g.len() {
                let v = noise(i, seed);
                w1.set(i, v);
                w2.set(i, v + 0.3 * (1.0 + noise(i, seed ^ 0x77)));
            }
            let (e1, _) = convex_envelope(&w1).unwrap();
            let (e2, _) = convex_envelope(&w2).unwrap();
            let scale = 1.0 + w1.sup_norm().max(w2.sup_norm());
            for &i in g.inside_nodes() {
                // order: w** ≤ w
                prop_assert!(e1.value(i) <= w1.value(i) + 1e-10 * scale);
                // monotone: w1 ≤ w2 ⇒ w1** ≤ w2**
                prop_assert!(e1.value(i) <= e2.value(i) + 1e-9 * scale);
            }
            // idempotent: (w**)** = w**
            let (ee1, _) = convex_envelope(&e1).unwrap();
            for &i in g.inside_nodes() {
                prop_assert!((ee1.value(i) - e1.value(i)).abs() <= 1e-9 * scale);
            }
        }
    }
}
