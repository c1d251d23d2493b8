//! Uniform grids on convex domains, scalar fields, and ε-ring stencils.
//!
//! A grid covers the bounding box of its domain; nodes strictly inside Ω are
//! flagged `inside`, and outside nodes adjacent to an inside node form the
//! one-layer boundary collar used by interpolation and by the convex
//! envelope. The ring stencil realizes the ε-ball moves of the tug-of-war
//! step: for every inside node and every one of `m` unit directions (closed
//! under negation) the sample is either a bilinear interpolation at
//! x + ε·v, or — when the segment [x, x+ε·v] leaves Ω — the Dirichlet datum
//! at the exact exit point, at its true (possibly < ε) distance.
//!
//! Grids and stencils are immutable after construction; fields are value
//! snapshots, so all reads are concurrent-safe.

use crate::geometry::ConvexDomain;
use crate::linalg::Point;
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("grid spacing {h} too coarse: must be below diameter/4 = {max}")]
    SpacingTooCoarse { h: f64, max: f64 },
    #[error("domain under-resolved: only {got} inside nodes (need at least {need})")]
    UnderResolved { got: usize, need: usize },
    #[error("inside nodes are not grid-connected")]
    Disconnected,
    #[error("ring radius {eps} must be at least 2h = {min}")]
    RingTooTight { eps: f64, min: f64 },
    #[error("direction count {m} invalid: need m = 2 in 1D, even m ≥ 8 in 2D")]
    BadDirectionCount { m: usize },
    #[error(
        "grid carries no domain (loaded from a field file); rebuild from a domain description"
    )]
    DomainRequired,
    #[error("field file malformed: {0}")]
    BadFieldFile(String),
    #[error("field value at node {0} is not finite")]
    NonFiniteValue(usize),
}

/// Uniform lattice restricted to an open convex domain.
#[derive(Debug, Clone)]
pub struct Grid {
    pub h: f64,
    pub origin: Point,
    pub nx: usize,
    pub ny: usize,
    /// Exact domain; absent when the grid was reloaded from a field file.
    pub domain: Option<ConvexDomain>,
    inside: Vec<bool>,
    collar: Vec<bool>,
    /// Distance to ∂Ω, positive inside (−signed_distance). For reloaded
    /// grids this is the Chebyshev grid distance to the outside mask.
    boundary_dist: Vec<f64>,
    inside_ids: Vec<usize>,
}

impl Grid {
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn position(&self, idx: usize) -> Point {
        let (ix, iy) = self.ij(idx);
        [
            self.origin[0] + ix as f64 * self.h,
            self.origin[1] + iy as f64 * self.h,
        ]
    }

    #[inline]
    pub fn is_inside(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    #[inline]
    pub fn is_collar(&self, idx: usize) -> bool {
        self.collar[idx]
    }

    #[inline]
    pub fn boundary_dist(&self, idx: usize) -> f64 {
        self.boundary_dist[idx]
    }

    /// Indices of inside nodes, row-major order.
    pub fn inside_nodes(&self) -> &[usize] {
        &self.inside_ids
    }

    /// Nearest node to a point, if the point lands on the lattice.
    pub fn node_at(&self, p: Point) -> Option<usize> {
        let gx = (p[0] - self.origin[0]) / self.h;
        let gy = (p[1] - self.origin[1]) / self.h;
        let (ix, iy) = (gx.round(), gy.round());
        if (gx - ix).abs() > 1e-9 || (gy - iy).abs() > 1e-9 {
            return None;
        }
        if ix < 0.0 || iy < 0.0 || ix as usize >= self.nx || iy as usize >= self.ny {
            return None;
        }
        Some(self.index(ix as usize, iy as usize))
    }

    fn from_mask(
        h: f64,
        origin: Point,
        nx: usize,
        ny: usize,
        domain: Option<ConvexDomain>,
        inside: Vec<bool>,
    ) -> Self {
        let n = nx * ny;
        let mut collar = vec![false; n];
        for idx in 0..n {
            if inside[idx] {
                continue;
            }
            let (ix, iy) = (idx % nx, idx / nx);
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                        continue;
                    }
                    if inside[jy as usize * nx + jx as usize] {
                        collar[idx] = true;
                        break 'nb;
                    }
                }
            }
        }
        let boundary_dist = match &domain {
            Some(d) => (0..n)
                .map(|idx| {
                    let (ix, iy) = (idx % nx, idx / nx);
                    let p = [origin[0] + ix as f64 * h, origin[1] + iy as f64 * h];
                    -d.signed_distance(p)
                })
                .collect(),
            None => chebyshev_depth(&inside, nx, ny, h),
        };
        let inside_ids = (0..n).filter(|&i| inside[i]).collect();
        Grid {
            h,
            origin,
            nx,
            ny,
            domain,
            inside,
            collar,
            boundary_dist,
            inside_ids,
        }
    }
}

/// Grid distance (in Chebyshev steps × h) from each inside node to the
/// outside mask. A stand-in for the exact boundary distance when the grid
/// comes from a field file with no domain attached.
fn chebyshev_depth(inside: &[bool], nx: usize, ny: usize, h: f64) -> Vec<f64> {
    let n = nx * ny;
    let mut depth = vec![0i64; n];
    let mut queue = VecDeque::new();
    for idx in 0..n {
        if !inside[idx] {
            depth[idx] = 0;
            queue.push_back(idx);
        } else {
            depth[idx] = i64::MAX;
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (ix, iy) = (idx % nx, idx / nx);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx as usize >= nx || jy as usize >= ny {
                    continue;
                }
                let j = jy as usize * nx + jx as usize;
                if depth[j] > depth[idx] + 1 {
                    depth[j] = depth[idx] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    depth
        .iter()
        .zip(inside)
        .map(|(&d, &ins)| if ins { d as f64 * h } else { -(d as f64) * h })
        .collect()
}

/// Builds the lattice over the bounding box of `d` with spacing `h`.
pub fn build_grid(d: &ConvexDomain, h: f64) -> Result<Grid, GridError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GridError::BadSpacing(h));
    }
    let max_h = d.diameter() / 4.0;
    if h > max_h * (1.0 + 1e-12) {
        return Err(GridError::SpacingTooCoarse { h, max: max_h });
    }
    let (lo, hi) = d.bounding_box();
    let count = |a: f64, b: f64| ((b - a) / h - 1e-9).ceil().max(0.0) as usize + 1;
    let nx = count(lo[0], hi[0]);
    let ny = if d.dimension() == 1 {
        1
    } else {
        count(lo[1], hi[1])
    };
    let origin = [lo[0], if d.dimension() == 1 { 0.0 } else { lo[1] }];
    let mut inside = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let p = [origin[0] + ix as f64 * h, origin[1] + iy as f64 * h];
            inside[iy * nx + ix] = d.contains(p);
        }
    }
    let grid = Grid::from_mask(h, origin, nx, ny, Some(d.clone()), inside);
    // 3 nodes per dimension: 9 in 2D, 3 in 1D.
    let need = 3usize.pow(d.dimension() as u32);
    if grid.inside_ids.len() < need {
        return Err(GridError::UnderResolved {
            got: grid.inside_ids.len(),
            need,
        });
    }
    if !axis_connected(&grid) {
        return Err(GridError::Disconnected);
    }
    Ok(grid)
}

/// Any two inside nodes joined by axis steps through inside nodes.
fn axis_connected(g: &Grid) -> bool {
    let Some(&start) = g.inside_ids.first() else {
        return true;
    };
    let mut seen = vec![false; g.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut found = 1usize;
    while let Some(idx) = queue.pop_front() {
        let (ix, iy) = g.ij(idx);
        let mut push = |jx: i64, jy: i64| {
            if jx < 0 || jy < 0 || jx as usize >= g.nx || jy as usize >= g.ny {
                return;
            }
            let j = jy as usize * g.nx + jx as usize;
            if g.inside[j] && !seen[j] {
                seen[j] = true;
                found += 1;
                queue.push_back(j);
            }
        };
        push(ix as i64 - 1, iy as i64);
        push(ix as i64 + 1, iy as i64);
        push(ix as i64, iy as i64 - 1);
        push(ix as i64, iy as i64 + 1);
    }
    found == g.inside_ids.len()
}

/// Grid function: one value per node (outside nodes carry the boundary
/// datum, or whatever the sampler put there).
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid>,
    values: Vec<f64>,
    /// Value contributed by clipped boundary samples. 0 for Dirichlet fields.
    pub boundary_datum: f64,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        ScalarField {
            grid,
            values: vec![0.0; n],
            boundary_datum: 0.0,
        }
    }

    /// Samples `f` at every node (inside, collar, and outside alike).
    pub fn sample(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        ScalarField {
            grid,
            values,
            boundary_datum: 0.0,
        }
    }

    pub fn is_dirichlet_zero(&self) -> bool {
        self.boundary_datum == 0.0
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn assert_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFiniteValue(i)),
            None => Ok(()),
        }
    }

    /// max |self − other| over inside nodes.
    pub fn sup_diff(&self, other: &ScalarField) -> f64 {
        self.grid
            .inside_nodes()
            .iter()
            .map(|&i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }

    /// max |value| over inside nodes.
    pub fn sup_norm(&self) -> f64 {
        self.grid
            .inside_nodes()
            .iter()
            .map(|&i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear (1D: linear) interpolation. Points outside the lattice hull
    /// are clamped into the boundary cell.
    pub fn interpolate(&self, p: Point) -> f64 {
        let g = &self.grid;
        let (c0, fx, fy) = cell_weights(g, p);
        let v00 = self.values[c0];
        let v10 = self.values[c0 + 1];
        if g.ny == 1 {
            return v00 * (1.0 - fx) + v10 * fx;
        }
        let v01 = self.values[c0 + g.nx];
        let v11 = self.values[c0 + g.nx + 1];
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }
}

/// Cell base index plus fractional offsets for a point; fractions within
/// 1e−9 of a node snap exactly so lattice-aligned samples stay bit-exact.
fn cell_weights(g: &Grid, p: Point) -> (usize, f64, f64) {
    let locate = |coord: f64, o: f64, n: usize| -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let t = (coord - o) / g.h;
        if t <= 0.0 {
            return (0, 0.0);
        }
        if t >= (n - 1) as f64 {
            return (n - 2, 1.0);
        }
        let mut i = t.floor();
        let mut f = t - i;
        if f > 1.0 - 1e-9 {
            i += 1.0;
            f = 0.0;
        } else if f < 1e-9 {
            f = 0.0;
        }
        let i = i as usize;
        if i > n - 2 {
            (n - 2, 1.0)
        } else {
            (i, f)
        }
    };
    let (ix, fx) = locate(p[0], g.origin[0], g.nx);
    let (iy, fy) = locate(p[1], g.origin[1], g.ny);
    (g.index(ix, iy), fx, fy)
}

/// One ring sample of one node: interior interpolation or a boundary hit.
#[derive(Debug, Clone)]
pub enum RingSample {
    Interior {
        corners: [u32; 4],
        weights: [f64; 4],
    },
    Boundary {
        point: Point,
        dist: f64,
    },
}

/// ε-ring stencil over all inside nodes of a grid.
#[derive(Debug, Clone)]
pub struct RingStencil {
    pub eps: f64,
    pub m: usize,
    pub directions: Vec<Point>,
    grid: Arc<Grid>,
    /// position of each node in the samples table; u32::MAX if not inside
    slot: Vec<u32>,
    samples: Vec<RingSample>,
}

impl RingStencil {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn samples_of(&self, node_idx: usize) -> &[RingSample] {
        let s = self.slot[node_idx] as usize;
        &self.samples[s * self.m..(s + 1) * self.m]
    }
}

/// The `m` unit directions: exact ±1 in 1D; in 2D, equally spaced with the
/// second half the exact negation of the first so v and −v are both present.
/// The 2D set is rotated by half the angular spacing so that no direction is
/// lattice-aligned: with ε an integer multiple of h, axis-aligned rays would
/// sample exact nodes and split the grid into residue-class chains that
/// never mix, each carrying its own boundary-truncation error.
pub fn ring_directions(dim: usize, m: usize) -> Vec<Point> {
    if dim == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    let half = m / 2;
    let mut dirs = Vec::with_capacity(m);
    for k in 0..half {
        let theta = std::f64::consts::TAU * (k as f64 + 0.5) / m as f64;
        let (c, s) = (theta.cos(), theta.sin());
        let n = (c * c + s * s).sqrt();
        dirs.push([c / n, s / n]);
    }
    for k in 0..half {
        dirs.push([-dirs[k][0], -dirs[k][1]]);
    }
    dirs
}

/// Builds the ring stencil: per inside node and direction, either bilinear
/// weights at x + ε·v or the exact boundary hit of the segment [x, x+ε·v].
pub fn build_ring(grid: &Arc<Grid>, eps: f64, m: usize) -> Result<RingStencil, GridError> {
    if eps < 2.0 * grid.h {
        return Err(GridError::RingTooTight {
            eps,
            min: 2.0 * grid.h,
        });
    }
    let dim = grid.dimension();
    if (dim == 1 && m != 2) || (dim == 2 && (m < 8 || !m.is_multiple_of(2))) {
        return Err(GridError::BadDirectionCount { m });
    }
    let domain = grid.domain.as_ref().ok_or(GridError::DomainRequired)?;
    let m = if dim == 1 { 2 } else { m };
    let directions = ring_directions(dim, m);

    let mut slot = vec![u32::MAX; grid.len()];
    for (s, &idx) in grid.inside_nodes().iter().enumerate() {
        slot[idx] = s as u32;
    }
    let mut samples = Vec::with_capacity(grid.inside_nodes().len() * m);
    for &idx in grid.inside_nodes() {
        let x = grid.position(idx);
        for v in &directions {
            match domain.ray_exit(x, *v, eps) {
                Some((t, p)) => samples.push(RingSample::Boundary { point: p, dist: t }),
                None => {
                    let q = [x[0] + eps * v[0], x[1] + eps * v[1]];
                    let (c0, fx, fy) = cell_weights(grid, q);
                    let (nx, one_d) = (grid.nx as u32, grid.ny == 1);
                    let c0 = c0 as u32;
                    let corners = if one_d {
                        [c0, c0 + 1, c0, c0 + 1]
                    } else {
                        [c0, c0 + 1, c0 + nx, c0 + nx + 1]
                    };
                    let weights = if one_d {
                        [1.0 - fx, fx, 0.0, 0.0]
                    } else {
                        [
                            (1.0 - fx) * (1.0 - fy),
                            fx * (1.0 - fy),
                            (1.0 - fx) * fy,
                            fx * fy,
                        ]
                    };
                    samples.push(RingSample::Interior { corners, weights });
                }
            }
        }
    }
    Ok(RingStencil {
        eps,
        m,
        directions,
        grid: grid.clone(),
        slot,
        samples,
    })
}

/// Max and min of the field over the ring of a node; boundary hits
/// contribute the field's boundary datum.
#[inline]
pub fn ring_extrema(field: &ScalarField, stencil: &RingStencil, node_idx: usize) -> (f64, f64) {
    let values = field.values();
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for s in stencil.samples_of(node_idx) {
        let v = match s {
            RingSample::Interior { corners, weights } => {
                weights[0] * values[corners[0] as usize]
                    + weights[1] * values[corners[1] as usize]
                    + weights[2] * values[corners[2] as usize]
                    + weights[3] * values[corners[3] as usize]
            }
            RingSample::Boundary { .. } => field.boundary_datum,
        };
        max = max.max(v);
        min = min.min(v);
    }
    (max, min)
}

// --- Field file format -----------------------------------------------------
//
// Bit-exact text format:
//   line 1:  # grid nx=<int> ny=<int> h=<dec> ox=<dec> oy=<dec>
//   then one line per node in row-major order:
//   <ix> <iy> <inside:0|1> <value>
// with all decimals printed to 17 significant digits so f64 round-trips
// exactly. 1D grids use ny=1.

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl ScalarField {
    pub fn to_field_file(&self) -> String {
        let g = &self.grid;
        let mut out = String::with_capacity(g.len() * 32 + 64);
        let _ = writeln!(
            out,
            "# grid nx={} ny={} h={} ox={} oy={}",
            g.nx,
            g.ny,
            fmt17(g.h),
            fmt17(g.origin[0]),
            fmt17(g.origin[1])
        );
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let idx = g.index(ix, iy);
                let _ = writeln!(
                    out,
                    "{} {} {} {}",
                    ix,
                    iy,
                    u8::from(g.inside[idx]),
                    fmt17(self.values[idx])
                );
            }
        }
        out
    }

    /// Parses a field file. The reconstructed grid has no domain attached;
    /// its boundary distances are grid-metric approximations.
    pub fn from_field_file(text: &str) -> Result<Self, GridError> {
        let bad = |msg: &str| GridError::BadFieldFile(msg.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let rest = header
            .strip_prefix("# grid ")
            .ok_or_else(|| bad("missing '# grid' header"))?;
        let mut nx = None;
        let mut ny = None;
        let mut h = None;
        let mut ox = None;
        let mut oy = None;
        for kv in rest.split_whitespace() {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| bad("header entries must be key=value"))?;
            match key {
                "nx" => nx = Some(value.parse().map_err(|_| bad("bad nx"))?),
                "ny" => ny = Some(value.parse().map_err(|_| bad("bad ny"))?),
                "h" => h = Some(value.parse().map_err(|_| bad("bad h"))?),
                "ox" => ox = Some(value.parse().map_err(|_| bad("bad ox"))?),
                "oy" => oy = Some(value.parse().map_err(|_| bad("bad oy"))?),
                other => return Err(bad(&format!("unknown header key {other}"))),
            }
        }
        let (nx, ny): (usize, usize) = (
            nx.ok_or_else(|| bad("missing nx"))?,
            ny.ok_or_else(|| bad("missing ny"))?,
        );
        let h: f64 = h.ok_or_else(|| bad("missing h"))?;
        let origin = [
            ox.ok_or_else(|| bad("missing ox"))?,
            oy.ok_or_else(|| bad("missing oy"))?,
        ];
        if nx == 0 || ny == 0 || !h.is_finite() || h <= 0.0 {
            return Err(bad("degenerate grid header"));
        }
        let mut inside = vec![false; nx * ny];
        let mut values = vec![0.0f64; nx * ny];
        let mut seen = 0usize;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse_next = |it: &mut std::str::SplitWhitespace| -> Result<f64, GridError> {
                it.next()
                    .ok_or_else(|| bad(&format!("truncated line {}", lineno + 2)))?
                    .parse()
                    .map_err(|_| bad(&format!("bad number on line {}", lineno + 2)))
            };
            let ix = parse_next(&mut it)? as usize;
            let iy = parse_next(&mut it)? as usize;
            let flag = parse_next(&mut it)?;
            let value = parse_next(&mut it)?;
            if ix >= nx || iy >= ny {
                return Err(bad(&format!("node ({ix},{iy}) out of range")));
            }
            let idx = iy * nx + ix;
            inside[idx] = flag != 0.0;
            values[idx] = value;
            seen += 1;
        }
        if seen != nx * ny {
            return Err(bad(&format!("expected {} node lines, got {seen}", nx * ny)));
        }
        let grid = Arc::new(Grid::from_mask(h, origin, nx, ny, None, inside));
        let field = ScalarField {
            grid,
            values,
            boundary_datum: 0.0,
        };
        field.assert_finite()?;
        Ok(field)
    }
}
