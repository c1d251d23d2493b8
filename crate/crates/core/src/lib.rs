//! Solver and structural verifier for the Dirichlet problem of the
//! inhomogeneous normalized infinity Laplacian on convex domains:
//!
//!   −Δ∞ᴺ u = f  in Ω,   u = 0  on ∂Ω,
//!
//! where Δ∞ᴺu is the second derivative of u in its own gradient direction
//! (the interval between the extreme Hessian eigenvalues at critical points).
//! The discrete solution comes from fixed-point iteration of the
//! tug-of-war dynamic programming principle on a wide ring stencil; the
//! verifier then checks the structural properties the solution must have on
//! a convex domain — ½-power concavity, convex-envelope fixed point of
//! w = −√u with interior Carathéodory witnesses, comparison with (quadratic)
//! cones, local semiconcavity with constant C = 2M², boundary blow-up of the
//! normal derivative of w, and C¹ smoothness probes — against exact and
//! brute-force oracles.

pub mod analysis;
pub mod config;
pub mod envelope;
pub mod game;
pub mod geometry;
pub mod grid;
mod linalg;
pub mod report;
pub mod solver;

pub use geometry::{ConvexDomain, GeometryError};
pub use grid::{build_grid, build_ring, ring_extrema, Grid, RingStencil, ScalarField};
pub use linalg::Point;
pub use solver::{solve, SchemeParams, SourceTerm, Sweep};
