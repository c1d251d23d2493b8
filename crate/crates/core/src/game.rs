//! Monte Carlo ε-tug-of-war with running payoff.
//!
//! Two players flip a fair coin; the winner moves the token to the ring
//! point (radius ε, clipped at ∂Ω) that maximizes (heads) or minimizes
//! (tails) a guide field. Each step accrues (ε²/2)·f at the current
//! position; reaching ∂Ω ends the game and adds the boundary datum 0. The
//! greedy pair on the true discrete value is optimal for the discrete game,
//! so running the greedy strategies on the solver's field realizes the DPP
//! trajectories and the sample mean estimates the solution value — an
//! independent cross-check of the solver.
//!
//! Trajectories are independent with per-trajectory RNG streams derived as
//! seed ⊕ trajectory-index, so results are identical no matter how the
//! trajectories are scheduled across threads.

use crate::geometry::ConvexDomain;
use crate::grid::ScalarField;
use crate::linalg::{add, dist, scale, Point};
use crate::solver::SourceTerm;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("step radius must be positive, got {0}")]
    BadStepRadius(f64),
    #[error("need at least one trajectory")]
    NoTrials,
    #[error("R/eps = {0} is not an integer: the 1D chain needs lattice-aligned endpoints")]
    NonIntegerChain(f64),
    #[error("chain too long: R/eps = {0} exceeds 10^4")]
    ChainTooLong(f64),
}

/// Move selection for the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Maximize/minimize the supplied guide field over the candidate moves.
    #[default]
    GreedyOnField,
    /// Maximizer steps toward the domain centroid, minimizer away from it.
    Radial,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    /// Cap per trajectory; `None` → 50·(diam/ε)².
    pub max_steps: Option<usize>,
    pub strategy: Strategy,
    /// Move directions; forced to 2 in 1D.
    pub m: usize,
}

impl GameConfig {
    pub fn new(eps: f64, trials: usize, seed: u64) -> Self {
        GameConfig {
            eps,
            trials,
            seed,
            max_steps: None,
            strategy: Strategy::default(),
            m: 16,
        }
    }

    pub fn max_steps_for(&self, d: &ConvexDomain) -> usize {
        self.max_steps.unwrap_or_else(|| {
            let ratio = d.diameter() / self.eps;
            (50.0 * ratio * ratio).ceil() as usize
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameResult {
    pub mean_payoff: f64,
    pub std_error: f64,
    /// Fraction of trajectories that reached ∂Ω within max_steps. Anything
    /// below 1 means truncated payoffs (reported, not fatal).
    pub exit_rate: f64,
}

/// Runs `cfg.trials` independent trajectories from `start`.
pub fn play(
    d: &ConvexDomain,
    start: Point,
    f: &SourceTerm,
    cfg: &GameConfig,
    guide: &ScalarField,
) -> Result<GameResult, GameError> {
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
        return Err(GameError::BadStepRadius(cfg.eps));
    }
    if cfg.trials == 0 {
        return Err(GameError::NoTrials);
    }
    let m = if d.dimension() == 1 { 2 } else { cfg.m };
    let directions = crate::grid::ring_directions(d.dimension(), m);
    let max_steps = cfg.max_steps_for(d);
    let centroid = d.centroid();

    let outcomes: Vec<(f64, bool)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ t);
            run_trajectory(
                d,
                start,
                f,
                guide,
                &directions,
                cfg,
                centroid,
                max_steps,
                &mut rng,
            )
        })
        .collect();

    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.0).sum::<f64>() / n;
    let std_error = if outcomes.len() > 1 {
        let var = outcomes
            .iter()
            .map(|o| (o.0 - mean) * (o.0 - mean))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let exit_rate = outcomes.iter().filter(|o| o.1).count() as f64 / n;
    Ok(GameResult {
        mean_payoff: mean,
        std_error,
        exit_rate,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    d: &ConvexDomain,
    start: Point,
    f: &SourceTerm,
    guide: &ScalarField,
    directions: &[Point],
    cfg: &GameConfig,
    centroid: Point,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, bool) {
    let eps = cfg.eps;
    let step_payoff = 0.5 * eps * eps;
    let mut pos = start;
    if !d.contains(pos) {
        return (0.0, true); // on ∂Ω (or beyond): immediate exit, datum 0
    }
    let mut payoff = 0.0;
    for _ in 0..max_steps {
        payoff += step_payoff * source_at(f, pos);

        // Each player scores all m candidate moves; ties go to the lowest
        // direction index.
        let mut best_max: Option<(f64, Point, bool)> = None;
        let mut best_min: Option<(f64, Point, bool)> = None;
        for v in directions {
            let (target, exits) = match d.ray_exit(pos, *v, eps) {
                Some((_, p)) => (p, true),
                None => (add(pos, scale(*v, eps)), false),
            };
            let score = match cfg.strategy {
                Strategy::GreedyOnField => {
                    if exits {
                        guide.boundary_datum
                    } else {
                        guide.interpolate(target)
                    }
                }
                // radial play scores by depth: farther from the centroid is
                // worse for the maximizer when f ≥ 0
                Strategy::Radial => -dist(target, centroid),
            };
            if best_max.is_none_or(|(s, _, _)| score > s) {
                best_max = Some((score, target, exits));
            }
            if best_min.is_none_or(|(s, _, _)| score < s) {
                best_min = Some((score, target, exits));
            }
        }
        let heads = rng.next_u64() & 1 == 1;
        let (_, target, exits) = if heads {
            best_max.expect("at least one direction")
        } else {
            best_min.expect("at least one direction")
        };
        pos = target;
        if exits {
            return (payoff, true); // boundary datum 0
        }
    }
    (payoff, false)
}

fn source_at(f: &SourceTerm, p: Point) -> f64 {
    match f {
        SourceTerm::Constant(c) => *c,
        SourceTerm::Samples(field) => field.interpolate(p),
    }
}

/// Exact values of the 1D chain DPP u(x) = ½(u(x−ε)+u(x+ε)) + ε²f/2 with
/// u(±R) = 0, by direct tridiagonal solve. The lattice quadratic
/// f·(R²−x²)/2 solves the chain exactly, which makes this a brute-force
/// oracle for both the solver and the game payoff normalization.
pub fn chain_value_1d(big_r: f64, eps: f64, f: f64) -> Result<Vec<(f64, f64)>, GameError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GameError::BadStepRadius(eps));
    }
    let ratio = big_r / eps;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(GameError::NonIntegerChain(ratio));
    }
    if ratio > 1e4 {
        return Err(GameError::ChainTooLong(ratio));
    }
    let half = ratio.round() as usize;
    let n = 2 * half + 1;
    // Thomas algorithm on −½u_{j−1} + u_j − ½u_{j+1} = ε²f/2, u_0 = u_{n−1} = 0.
    let mut c_prime = vec![0.0f64; n];
    let mut d_prime = vec![0.0f64; n];
    let rhs = 0.5 * eps * eps * f;
    for j in 1..n - 1 {
        let denom = 1.0 + 0.5 * c_prime[j - 1];
        c_prime[j] = -0.5 / denom;
        d_prime[j] = (rhs + 0.5 * d_prime[j - 1]) / denom;
    }
    let mut u = vec![0.0f64; n];
    for j in (1..n - 1).rev() {
        u[j] = d_prime[j] - c_prime[j] * u[j + 1];
    }
    Ok((0..n).map(|j| (-big_r + j as f64 * eps, u[j])).collect())
}
