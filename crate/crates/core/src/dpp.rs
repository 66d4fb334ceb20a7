//! Deterministic value iteration for the parabolic dynamic programming
//! principle of tug-of-war with noise:
//!
//!   u_ε(x,t) = (α/2)·[ sup_{B_ε(x)} u_ε(·, t−ε²/2) + inf_{B_ε(x)} u_ε(·, t−ε²/2) ]
//!              + β·⨍_{B_ε(x)} u_ε(y, t−ε²/2) dy,
//!
//! with α = (p−2)/(p+n), β = (2+n)/(p+n), boundary values g on the
//! parabolic strip Γ_ε^par. As ε → 0 the values converge to the solution
//! of (n+p)·∂ₜu = Δ_p^N u, which is the homogeneous special case of the
//! main equation with p̃ = q̃ = 0, a ≡ 1 and time rescaled by 2(n+p).
//!
//! The DPP clock runs forward: slice k lives at t = k·ε²/2. Ball
//! sampling uses all grid nodes within distance ε; the average is the
//! unweighted node mean, a Riemann approximation of the volume average
//! controlled by h/ε.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{GridBuilder, GridError, SpaceTimeField, SpaceTimeGrid};
use crate::types::{norm, Point};

#[derive(Debug, Error, PartialEq)]
pub enum DppError {
    #[error("game exponent must satisfy p > 1, got {0}")]
    BadP(f64),
    #[error("dimension must be >= 1, got {0}")]
    BadN(usize),
    #[error("game step must be positive, got eps = {0}")]
    BadEps(f64),
    #[error("grid lattice must extend at least max(eps, h) beyond the domain; box radius {box_radius} < {needed}")]
    CollarMissing { box_radius: f64, needed: f64 },
    #[error("the value iteration clock requires dt = eps^2/2 = {want}, grid has dt = {got}")]
    WrongClock { want: f64, got: f64 },
    #[error("ball sample around node {0} is empty")]
    EmptyBall(usize),
    #[error("update requested at node {0} outside the domain")]
    OutsideDomain(usize),
    #[error("boundary data is missing (non-finite) at node {node}, t = {t}")]
    MissingData { node: usize, t: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Game weights α = (p−2)/(p+n), β = 1−α. Exact unity of the sum is kept
/// by computing β as the complement.
pub fn dpp_weights(p: f64, n: usize) -> Result<(f64, f64), DppError> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(DppError::BadP(p));
    }
    if n == 0 {
        return Err(DppError::BadN(n));
    }
    let alpha = (p - 2.0) / (p + n as f64);
    Ok((alpha, 1.0 - alpha))
}

/// Step size, exponent, and dimension of one tug-of-war game.
#[derive(Debug, Clone, Copy)]
pub struct DppConfig {
    pub eps_game: f64,
    pub p: f64,
    pub n: usize,
}

impl DppConfig {
    pub fn new(eps_game: f64, p: f64, n: usize) -> Result<Self, DppError> {
        if !(eps_game > 0.0) || !eps_game.is_finite() {
            return Err(DppError::BadEps(eps_game));
        }
        dpp_weights(p, n)?;
        Ok(Self { eps_game, p, n })
    }

    pub fn weights(&self) -> (f64, f64) {
        dpp_weights(self.p, self.n).expect("validated at construction")
    }

    /// α >= 0, the regime where the update is order-preserving.
    pub fn monotone(&self) -> bool {
        self.p >= 2.0
    }

    /// The DPP's intrinsic time step ε²/2.
    pub fn clock_dt(&self) -> f64 {
        0.5 * self.eps_game * self.eps_game
    }

    /// Time-scale factor for comparing against the explicit solver run
    /// with p̃ = q̃ = 0, a ≡ 1, f ≡ 0 (multiplier H ≡ 2): game values at
    /// time t match that solver at time t/(2(n+p)).
    pub fn matched_fd_time(&self) -> f64 {
        1.0 / (2.0 * (self.n as f64 + self.p))
    }
}

/// Grid tailored to a game: lattice over the domain plus a collar of
/// width max(ε, h), clock dt = ε²/2, time running forward from 0.
pub fn dpp_grid(
    dim: usize,
    radius: f64,
    h: f64,
    config: &DppConfig,
    t_end: f64,
) -> Result<SpaceTimeGrid, DppError> {
    let collar = config.eps_game.max(h);
    let grid = GridBuilder::new(dim, radius, h, config.clock_dt(), 0.0, t_end)
        .collar(collar)
        .build()?;
    Ok(grid)
}

fn require_collar(grid: &SpaceTimeGrid, eps: f64) -> Result<f64, DppError> {
    let needed = grid.domain_radius + eps.max(grid.h) * (1.0 - 1e-12);
    if grid.box_radius < needed {
        return Err(DppError::CollarMissing {
            box_radius: grid.box_radius,
            needed: grid.domain_radius + eps.max(grid.h),
        });
    }
    Ok(grid.domain_radius + eps.max(grid.h))
}

fn is_collar(grid: &SpaceTimeGrid, s: usize, collar_radius: f64) -> bool {
    let r = norm(grid.coord(s));
    !grid.in_mask(s) && r <= collar_radius * (1.0 + 1e-12)
}

/// The parabolic boundary strip: every collar node at every slice, plus
/// every domain node in the initial slab (slice 0). Sorted by (slice,
/// node).
pub fn boundary_strip(grid: &SpaceTimeGrid, eps_game: f64) -> Result<Vec<(usize, usize)>, DppError> {
    let collar_radius = require_collar(grid, eps_game)?;
    let collar: Vec<usize> = (0..grid.n_space())
        .filter(|&s| is_collar(grid, s, collar_radius))
        .collect();
    let mut out: Vec<(usize, usize)> = grid.masked_nodes().map(|s| (s, 0)).collect();
    out.extend(collar.iter().map(|&s| (s, 0)));
    for k in 1..grid.n_time() {
        out.extend(collar.iter().map(|&s| (s, k)));
    }
    out.sort_unstable_by_key(|&(s, k)| (k, s));
    Ok(out)
}

/// Lattice offsets reaching every node within distance ε.
pub fn ball_offsets(grid: &SpaceTimeGrid, eps: f64) -> Vec<(isize, isize)> {
    let reach = (eps / grid.h * (1.0 + 1e-12)).floor() as isize;
    let r2 = eps * eps * (1.0 + 1e-9);
    let mut out = Vec::new();
    let jr = if grid.dim == 2 { reach } else { 0 };
    for dj in -jr..=jr {
        for di in -reach..=reach {
            let d2 = (di * di + dj * dj) as f64 * grid.h * grid.h;
            if d2 <= r2 {
                out.push((di, dj));
            }
        }
    }
    out
}

fn ball_stats(
    grid: &SpaceTimeGrid,
    prev: &[f64],
    s: usize,
    offsets: &[(isize, isize)],
) -> Option<(f64, f64, f64)> {
    let (i, j) = grid.unflat(s);
    let (i, j) = (i as isize, j as isize);
    let nx = grid.nodes_per_axis() as isize;
    let ny = if grid.dim == 2 { nx } else { 1 };
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(di, dj) in offsets {
        let (ni, nj) = (i + di, j + dj);
        if ni < 0 || nj < 0 || ni >= nx || nj >= ny {
            continue;
        }
        let v = prev[grid.flat(ni as usize, nj as usize)];
        max = max.max(v);
        min = min.min(v);
        sum += v;
        count += 1;
    }
    (count > 0).then(|| (max, min, sum / count as f64))
}

/// One value-iteration read: (α/2)(max + min) + β·mean over the sampled
/// ball of the previous slice.
pub fn dpp_update(
    grid: &SpaceTimeGrid,
    prev_slice: &[f64],
    s: usize,
    eps_game: f64,
    weights: (f64, f64),
) -> Result<f64, DppError> {
    if !grid.in_mask(s) {
        return Err(DppError::OutsideDomain(s));
    }
    let offsets = ball_offsets(grid, eps_game);
    let (max, min, mean) =
        ball_stats(grid, prev_slice, s, &offsets).ok_or(DppError::EmptyBall(s))?;
    let (alpha, beta) = weights;
    Ok(0.5 * alpha * (max + min) + beta * mean)
}

#[derive(Debug, Clone)]
pub struct DppReport {
    /// False only in the 1 < p < 2 regime, where α < 0 and the update is
    /// not order-preserving; values are still computed.
    pub monotone: bool,
    pub warning: Option<String>,
    /// Nodes sampled per full interior ball.
    pub ball_nodes: usize,
    pub slices: usize,
}

/// Slice-by-slice forward value iteration with boundary data g on the
/// parabolic strip. The grid must carry the game clock dt = ε²/2 and a
/// collar of width max(ε, h).
pub fn dpp_solve(
    g: &(impl Fn(Point, f64) -> f64 + Sync),
    grid: Arc<SpaceTimeGrid>,
    config: &DppConfig,
) -> Result<(SpaceTimeField, DppReport), DppError> {
    let collar_radius = require_collar(&grid, config.eps_game)?;
    let want_dt = config.clock_dt();
    if (grid.dt - want_dt).abs() > 1e-12 * want_dt {
        return Err(DppError::WrongClock {
            want: want_dt,
            got: grid.dt,
        });
    }
    let offsets = ball_offsets(&grid, config.eps_game);
    let (alpha, beta) = config.weights();

    let ns = grid.n_space();
    let nt = grid.n_time();
    let mut values = Vec::with_capacity(ns * nt);

    let slice0: Vec<f64> = (0..ns)
        .map(|s| {
            if grid.in_mask(s) || is_collar(&grid, s, collar_radius) {
                g(grid.coord(s), grid.t(0))
            } else {
                0.0
            }
        })
        .collect();
    check_slice(&slice0, grid.t(0))?;
    values.extend_from_slice(&slice0);
    let mut prev = slice0;

    for k in 1..nt {
        let t = grid.t(k);
        let next: Vec<f64> = (0..ns)
            .into_par_iter()
            .map(|s| {
                if grid.in_mask(s) {
                    match ball_stats(&grid, &prev, s, &offsets) {
                        Some((max, min, mean)) => 0.5 * alpha * (max + min) + beta * mean,
                        None => f64::NAN,
                    }
                } else if is_collar(&grid, s, collar_radius) {
                    g(grid.coord(s), t)
                } else {
                    0.0
                }
            })
            .collect();
        check_slice(&next, t)?;
        values.extend_from_slice(&next);
        prev = next;
    }

    let report = DppReport {
        monotone: config.monotone(),
        warning: (!config.monotone()).then(|| {
            format!(
                "p = {} < 2: the game weight alpha is negative, the update is \
                 not order-preserving, and no convergence claim is made",
                config.p
            )
        }),
        ball_nodes: offsets.len(),
        slices: nt,
    };
    let field = SpaceTimeField::new(grid, values)?;
    Ok((field, report))
}

fn check_slice(slice: &[f64], t: f64) -> Result<(), DppError> {
    for (s, &v) in slice.iter().enumerate() {
        if !v.is_finite() {
            return Err(DppError::MissingData { node: s, t });
        }
    }
    Ok(())
}
