//! Intrinsic θ-parabolic cylinders B_ρ(x₀) × (t₀ − ρ^θ, t₀] and their
//! node queries.
//!
//! The time interval is half-open: the top slice belongs to the cylinder,
//! the exact bottom endpoint does not. The discrete parabolic boundary is
//! the lateral shell ρ−h < |x−x₀| ≤ ρ at every cylinder slice plus the
//! whole spatial section at the earliest slice.

use crate::grid::{SpaceTimeGrid, GEOM_TOL};
use crate::types::{dist, Point};

/// B_ρ(x₀) × (t₀ − ρ^θ, t₀] with θ > 1: the geometry in which the
/// degenerate diffusion scales like the heat equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicCylinder {
    pub center_x: Point,
    pub center_t: f64,
    pub radius: f64,
    pub theta: f64,
}

impl IntrinsicCylinder {
    pub fn new(center_x: Point, center_t: f64, radius: f64, theta: f64) -> Self {
        debug_assert!(radius > 0.0 && theta > 0.0);
        Self {
            center_x,
            center_t,
            radius,
            theta,
        }
    }

    /// ρ^θ, the depth of the time interval.
    pub fn time_depth(&self) -> f64 {
        self.radius.powf(self.theta)
    }

    pub fn bottom_time(&self) -> f64 {
        self.center_t - self.time_depth()
    }

    fn radial_tol(&self) -> f64 {
        GEOM_TOL * (1.0 + self.radius)
    }

    fn time_tol(&self) -> f64 {
        GEOM_TOL * (1.0 + self.center_t.abs() + self.time_depth())
    }

    pub fn contains_x(&self, x: Point) -> bool {
        dist(x, self.center_x) <= self.radius + self.radial_tol()
    }

    /// Strict inclusion in (t₀ − ρ^θ, t₀].
    pub fn contains_t(&self, t: f64) -> bool {
        t > self.bottom_time() + self.time_tol() && t <= self.center_t + self.time_tol()
    }

    /// Lateral shell ρ − h < |x − x₀| ≤ ρ (everything when ρ < h).
    pub fn on_lateral_shell(&self, x: Point, h: f64) -> bool {
        let d = dist(x, self.center_x);
        self.contains_x(x) && d > self.radius - h + self.radial_tol()
    }
}

/// All grid nodes (flat space index, time index) inside the cylinder,
/// sorted by (time, space). Masked-out nodes are never included. An empty
/// intersection is an empty vector, not an error.
pub fn cylinder_nodes(grid: &SpaceTimeGrid, cyl: &IntrinsicCylinder) -> Vec<(usize, usize)> {
    let spatial: Vec<usize> = grid
        .masked_nodes()
        .filter(|&s| cyl.contains_x(grid.coord(s)))
        .collect();
    let mut out = Vec::new();
    for k in 0..grid.n_time() {
        if cyl.contains_t(grid.t(k)) {
            out.extend(spatial.iter().map(|&s| (s, k)));
        }
    }
    out
}

/// Discrete parabolic boundary: lateral shell nodes at every cylinder
/// slice, plus the full spatial section at the earliest slice. Sorted by
/// (time, space), deduplicated.
pub fn parabolic_boundary_nodes(
    grid: &SpaceTimeGrid,
    cyl: &IntrinsicCylinder,
) -> Vec<(usize, usize)> {
    let spatial: Vec<usize> = grid
        .masked_nodes()
        .filter(|&s| cyl.contains_x(grid.coord(s)))
        .collect();
    let lateral: Vec<usize> = spatial
        .iter()
        .copied()
        .filter(|&s| cyl.on_lateral_shell(grid.coord(s), grid.h))
        .collect();
    let slices: Vec<usize> = (0..grid.n_time())
        .filter(|&k| cyl.contains_t(grid.t(k)))
        .collect();
    let mut out = Vec::new();
    if let Some(&bottom) = slices.first() {
        out.extend(spatial.iter().map(|&s| (s, bottom)));
        for &k in &slices[1..] {
            out.extend(lateral.iter().map(|&s| (s, k)));
        }
    }
    out.sort_unstable_by_key(|&(s, k)| (k, s));
    out.dedup();
    out
}
