//! Bounded convex domains Ω with exact geometric queries.
//!
//! Supported shapes: 1D intervals, balls, ellipses, convex polygons
//! (counterclockwise), and outer parallel bodies Ω_ε = {x : dist(x, Ω) < ε}.
//! Parallel bodies are kept exact as a Minkowski sum `Offset{base, margin}`
//! rather than approximated by arc-sampled polygons: for a convex base the
//! identity sd_{Ω_ε} = sd_Ω − ε makes every query exact, and the interior
//! sphere radius of Ω_ε is exactly ε plus that of the base.
//!
//! All operations are pure; domains are immutable after construction.

use crate::linalg::{self, cross, dist, dot, scale, sub, Point};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("interval must satisfy a < b with finite endpoints, got ({0}, {1})")]
    BadInterval(f64, f64),
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("semi-axes must be positive and finite, got ({0}, {1})")]
    BadSemiAxes(f64, f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices must be finite")]
    NonFiniteVertex,
    #[error("polygon must be convex and counterclockwise (cross product failed at vertex {0})")]
    NotConvexCcw(usize),
    #[error("parallel body margin must be positive, got {0}")]
    BadMargin(f64),
}

/// An open bounded convex subset of R¹ or R².
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexDomain {
    /// Open interval (a, b) on the line; 2D queries live on the x-axis.
    Interval {
        a: f64,
        b: f64,
    },
    Ball {
        center: Point,
        radius: f64,
    },
    /// Axis-aligned ellipse (x−c)₁²/a₁² + (x−c)₂²/a₂² < 1.
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
    },
    /// Convex polygon, vertices counterclockwise, no collinear triples.
    Polygon {
        vertices: Vec<Point>,
    },
    /// Outer parallel body: base ⊕ open ball of radius `margin`.
    Offset {
        base: Box<ConvexDomain>,
        margin: f64,
    },
}

impl ConvexDomain {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(GeometryError::BadInterval(a, b));
        }
        Ok(ConvexDomain::Interval { a, b })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(ConvexDomain::Ball { center, radius })
    }

    pub fn ellipse(center: Point, semi_axes: [f64; 2]) -> Result<Self, GeometryError> {
        let ok = semi_axes.iter().all(|a| a.is_finite() && *a > 0.0)
            && center.iter().all(|c| c.is_finite());
        if !ok {
            return Err(GeometryError::BadSemiAxes(semi_axes[0], semi_axes[1]));
        }
        Ok(ConvexDomain::Ellipse { center, semi_axes })
    }

    /// Vertices must be counterclockwise and strictly convex: the cross
    /// product of consecutive edges must be positive at every vertex.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if !vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFiniteVertex);
        }
        let n = vertices.len();
        for i in 0..n {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let r = vertices[(i + 2) % n];
            if cross(sub(q, p), sub(r, q)) <= 0.0 {
                return Err(GeometryError::NotConvexCcw(i));
            }
        }
        Ok(ConvexDomain::Polygon { vertices })
    }

    pub fn dimension(&self) -> usize {
        match self {
            ConvexDomain::Interval { .. } => 1,
            ConvexDomain::Offset { base, .. } => base.dimension(),
            _ => 2,
        }
    }

    /// True iff `x` lies in the open region.
    pub fn contains(&self, x: Point) -> bool {
        match self {
            ConvexDomain::Interval { a, b } => *a < x[0] && x[0] < *b,
            ConvexDomain::Ball { center, radius } => dist(x, *center) < *radius,
            ConvexDomain::Ellipse { center, semi_axes } => {
                let d = sub(x, *center);
                let u = d[0] / semi_axes[0];
                let v = d[1] / semi_axes[1];
                u * u + v * v < 1.0
            }
            ConvexDomain::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    cross(sub(q, p), sub(x, p)) > 0.0
                })
            }
            ConvexDomain::Offset { .. } => self.signed_distance(x) < 0.0,
        }
    }

    /// Signed Euclidean distance to ∂Ω: negative inside, 0 on the boundary,
    /// positive outside.
    pub fn signed_distance(&self, x: Point) -> f64 {
        match self {
            ConvexDomain::Interval { a, b } => (a - x[0]).max(x[0] - b),
            ConvexDomain::Ball { center, radius } => dist(x, *center) - radius,
            ConvexDomain::Ellipse { center, semi_axes } => {
                ellipse_signed_distance(sub(x, *center), *semi_axes)
            }
            ConvexDomain::Polygon { vertices } => {
                let unsigned = (0..vertices.len())
                    .map(|i| segment_distance(x, vertices[i], vertices[(i + 1) % vertices.len()]))
                    .fold(f64::INFINITY, f64::min);
                if self.contains(x) {
                    -unsigned
                } else {
                    unsigned
                }
            }
            ConvexDomain::Offset { base, margin } => base.signed_distance(x) - margin,
        }
    }

    /// Outer parallel body Ω_ε = {x : dist(x, Ω) < ε}.
    pub fn outer_parallel_body(&self, eps: f64) -> Result<Self, GeometryError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(GeometryError::BadMargin(eps));
        }
        Ok(match self {
            ConvexDomain::Interval { a, b } => ConvexDomain::Interval {
                a: a - eps,
                b: b + eps,
            },
            ConvexDomain::Ball { center, radius } => ConvexDomain::Ball {
                center: *center,
                radius: radius + eps,
            },
            ConvexDomain::Offset { base, margin } => ConvexDomain::Offset {
                base: base.clone(),
                margin: margin + eps,
            },
            other => ConvexDomain::Offset {
                base: Box::new(other.clone()),
                margin: eps,
            },
        })
    }

    /// Interior sphere condition: `(true, r)` with the largest `r` such that
    /// every boundary point is touched from inside by a ball of radius `r`;
    /// `(false, 0)` when no positive radius works (polygons with genuine
    /// corners, i.e. any interior angle below π − 1e−9).
    pub fn has_interior_sphere(&self) -> (bool, f64) {
        match self {
            ConvexDomain::Interval { a, b } => (true, 0.5 * (b - a)),
            ConvexDomain::Ball { radius, .. } => (true, *radius),
            ConvexDomain::Ellipse { semi_axes, .. } => {
                // Limited by the osculating circle at the flat ends of the
                // major axis: radius b²/a.
                let a = semi_axes[0].max(semi_axes[1]);
                let b = semi_axes[0].min(semi_axes[1]);
                (true, b * b / a)
            }
            ConvexDomain::Polygon { vertices } => {
                let n = vertices.len();
                for i in 0..n {
                    let p = vertices[(i + n - 1) % n];
                    let q = vertices[i];
                    let r = vertices[(i + 1) % n];
                    let u = sub(p, q);
                    let v = sub(r, q);
                    let angle = cross(v, u).atan2(dot(v, u));
                    let interior = if angle < 0.0 {
                        angle + std::f64::consts::TAU
                    } else {
                        angle
                    };
                    if interior < std::f64::consts::PI - 1e-9 {
                        return (false, 0.0);
                    }
                }
                (true, 0.0)
            }
            ConvexDomain::Offset { base, margin } => {
                let (_, r) = base.has_interior_sphere();
                (true, r + margin)
            }
        }
    }

    /// sup of pairwise distances.
    pub fn diameter(&self) -> f64 {
        match self {
            ConvexDomain::Interval { a, b } => b - a,
            ConvexDomain::Ball { radius, .. } => 2.0 * radius,
            ConvexDomain::Ellipse { semi_axes, .. } => 2.0 * semi_axes[0].max(semi_axes[1]),
            ConvexDomain::Polygon { vertices } => {
                let mut best = 0.0f64;
                for (i, p) in vertices.iter().enumerate() {
                    for q in vertices.iter().skip(i + 1) {
                        best = best.max(dist(*p, *q));
                    }
                }
                best
            }
            ConvexDomain::Offset { base, margin } => base.diameter() + 2.0 * margin,
        }
    }

    /// Axis-aligned bounding box `(min, max)`. 1D boxes have zero height.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            ConvexDomain::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            ConvexDomain::Ball { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            ConvexDomain::Ellipse { center, semi_axes } => (
                [center[0] - semi_axes[0], center[1] - semi_axes[1]],
                [center[0] + semi_axes[0], center[1] + semi_axes[1]],
            ),
            ConvexDomain::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
            ConvexDomain::Offset { base, margin } => {
                let (lo, hi) = base.bounding_box();
                if base.dimension() == 1 {
                    ([lo[0] - margin, 0.0], [hi[0] + margin, 0.0])
                } else {
                    (
                        [lo[0] - margin, lo[1] - margin],
                        [hi[0] + margin, hi[1] + margin],
                    )
                }
            }
        }
    }

    /// An interior reference point (midpoint / center / vertex average).
    pub fn centroid(&self) -> Point {
        match self {
            ConvexDomain::Interval { a, b } => [0.5 * (a + b), 0.0],
            ConvexDomain::Ball { center, .. } | ConvexDomain::Ellipse { center, .. } => *center,
            ConvexDomain::Polygon { vertices } => {
                let n = vertices.len() as f64;
                let mut c = [0.0, 0.0];
                for v in vertices {
                    c[0] += v[0] / n;
                    c[1] += v[1] / n;
                }
                c
            }
            ConvexDomain::Offset { base, .. } => base.centroid(),
        }
    }

    /// First boundary crossing of the segment {x + t·v : 0 < t ≤ tmax} for an
    /// interior start `x` and unit direction `v`. Returns `(t, exit point)`,
    /// or `None` when the whole segment stays inside. The exit point lies on
    /// ∂Ω to within 1e−12 of the segment length.
    pub fn ray_exit(&self, x: Point, v: Point, tmax: f64) -> Option<(f64, Point)> {
        debug_assert!(self.signed_distance(x) < 0.0);
        match self {
            ConvexDomain::Interval { a, b } => {
                let t = if v[0] > 0.0 {
                    (b - x[0]) / v[0]
                } else if v[0] < 0.0 {
                    (a - x[0]) / v[0]
                } else {
                    return None;
                };
                (t <= tmax).then(|| (t, [x[0] + t * v[0], 0.0]))
            }
            ConvexDomain::Ball { center, radius } => {
                // |x + t v − c|² = r², take the positive root.
                let d = sub(x, *center);
                let b = dot(d, v);
                let c = dot(d, d) - radius * radius;
                let t = -b + (b * b - c).sqrt();
                (t <= tmax).then(|| (t, linalg::add(x, scale(v, t))))
            }
            ConvexDomain::Ellipse { center, semi_axes } => {
                let d = sub(x, *center);
                let p = [d[0] / semi_axes[0], d[1] / semi_axes[1]];
                let w = [v[0] / semi_axes[0], v[1] / semi_axes[1]];
                let a = dot(w, w);
                let b = dot(p, w);
                let c = dot(p, p) - 1.0;
                let t = (-b + (b * b - a * c).sqrt()) / a;
                (t <= tmax).then(|| (t, linalg::add(x, scale(v, t))))
            }
            ConvexDomain::Polygon { vertices } => {
                // Exit through the half-plane boundaries the ray is leaving.
                let n = vertices.len();
                let mut t_exit = f64::INFINITY;
                for i in 0..n {
                    let p = vertices[i];
                    let q = vertices[(i + 1) % n];
                    let edge = sub(q, p);
                    let nrm = [edge[1], -edge[0]]; // outward for ccw
                    let denom = dot(nrm, v);
                    if denom > 0.0 {
                        let t = dot(nrm, sub(p, x)) / denom;
                        t_exit = t_exit.min(t);
                    }
                }
                (t_exit <= tmax).then(|| (t_exit, linalg::add(x, scale(v, t_exit))))
            }
            ConvexDomain::Offset { .. } => {
                if self.signed_distance(linalg::add(x, scale(v, tmax))) < 0.0 {
                    return None;
                }
                // sd is convex along the segment, so the crossing is unique.
                let (mut lo, mut hi) = (0.0f64, tmax);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.signed_distance(linalg::add(x, scale(v, mid))) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                Some((t, linalg::add(x, scale(v, t))))
            }
        }
    }

    /// `count` points on ∂Ω. Intervals return the two endpoints; 2D shapes
    /// are sampled along rays from the centroid.
    pub fn boundary_samples(&self, count: usize) -> Vec<Point> {
        if let ConvexDomain::Interval { a, b } = self {
            return vec![[*a, 0.0], [*b, 0.0]];
        }
        let c = self.centroid();
        let reach = self.diameter() * 1.01;
        (0..count)
            .map(|k| {
                let theta = std::f64::consts::TAU * k as f64 / count as f64;
                let v = [theta.cos(), theta.sin()];
                self.ray_exit(c, v, reach)
                    .map(|(_, p)| p)
                    .expect("centroid ray must reach the boundary of a bounded domain")
            })
            .collect()
    }
}

fn segment_distance(x: Point, p: Point, q: Point) -> f64 {
    let pq = sub(q, p);
    let t = (dot(sub(x, p), pq) / dot(pq, pq)).clamp(0.0, 1.0);
    dist(x, linalg::add(p, scale(pq, t)))
}

/// Exact distance from `p` (relative to the center) to the ellipse with
/// semi-axes `axes`, negative inside. Robust bisection on the Lagrange
/// parameter (Eberly's method), with the degenerate on-axis branches.
fn ellipse_signed_distance(p: Point, axes: [f64; 2]) -> f64 {
    // Work in the quadrant copy sorted so e0 ≥ e1.
    let (e0, e1, y0, y1) = if axes[0] >= axes[1] {
        (axes[0], axes[1], p[0].abs(), p[1].abs())
    } else {
        (axes[1], axes[0], p[1].abs(), p[0].abs())
    };
    let inside = (y0 / e0) * (y0 / e0) + (y1 / e1) * (y1 / e1) < 1.0;

    let unsigned = if y1 > 1e-300 {
        // F(t) = (e0 y0/(t+e0²))² + (e1 y1/(t+e1²))² − 1 is strictly
        // decreasing on (−e1², ∞) with a unique root.
        let f = |t: f64| {
            let a = e0 * y0 / (t + e0 * e0);
            let b = e1 * y1 / (t + e1 * e1);
            a * a + b * b - 1.0
        };
        let mut lo = -e1 * e1 + 1e-300;
        let mut hi = e1 * y1.max(y0) + e0 * e0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        // lo may start with f(lo) huge; plain bisection is fine.
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let cx = e0 * e0 * y0 / (t + e0 * e0);
        let cy = e1 * e1 * y1 / (t + e1 * e1);
        dist([y0, y1], [cx, cy])
    } else if y0 < (e0 * e0 - e1 * e1) / e0 {
        // Interior point on the major axis whose nearest boundary point is
        // off-axis.
        let cx = e0 * e0 * y0 / (e0 * e0 - e1 * e1);
        let cy = e1 * (1.0 - (cx / e0) * (cx / e0)).max(0.0).sqrt();
        dist([y0, y1], [cx, cy])
    } else {
        (y0 - e0).abs()
    };

    if inside {
        -unsigned
    } else {
        unsigned
    }
}
