//! Uniform tensor grids on space-time boxes, with a ball mask for the
//! spatial domain, and the sampled fields living on them.
//!
//! Node coordinates are always computed as x_i = -box_radius + i·h, never
//! accumulated, so there is no drift across an axis. The physical domain
//! B_R is the set of nodes with |x| <= R (the mask); the node lattice may
//! extend beyond R (a collar), which the tug-of-war module relies on.

use std::sync::Arc;

use thiserror::Error;

use crate::types::{norm, Point};

/// Relative slack used in all geometric comparisons against grid nodes.
pub(crate) const GEOM_TOL: f64 = 1e-12;

const DEFAULT_MAX_VALUES: usize = 1 << 26;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("spatial step must be positive, got h = {0}")]
    NonPositiveH(f64),
    #[error("time step must be positive, got dt = {0}")]
    NonPositiveDt(f64),
    #[error("spatial radius must be positive, got R = {0}")]
    NonPositiveRadius(f64),
    #[error("time range requires t_begin < t_end, got [{0}, {1}]")]
    EmptyTimeRange(f64, f64),
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("grid would hold {requested} values, exceeding the cap of {cap}")]
    TooLarge { requested: usize, cap: usize },
    #[error("field rejected a non-finite value {value} at flat index {index}")]
    NonFiniteValue { value: f64, index: usize },
    #[error("field length {got} does not match grid ({want} values)")]
    LengthMismatch { got: usize, want: usize },
}

/// Uniform grid over [-box_radius, box_radius]^dim × [t_begin, t_end].
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    pub dim: usize,
    /// Radius of the ball mask (the physical domain B_R).
    pub domain_radius: f64,
    /// Extent of the node lattice; >= domain_radius.
    pub box_radius: f64,
    pub h: f64,
    pub dt: f64,
    pub t_begin: f64,
    pub t_end: f64,
    nx: [usize; 2],
    nt: usize,
    mask: Vec<bool>,
    update_interior: Vec<bool>,
}

pub struct GridBuilder {
    dim: usize,
    radius: f64,
    collar: f64,
    h: f64,
    dt: f64,
    t_begin: f64,
    t_end: f64,
    max_values: usize,
}

impl GridBuilder {
    pub fn new(dim: usize, radius: f64, h: f64, dt: f64, t_begin: f64, t_end: f64) -> Self {
        Self {
            dim,
            radius,
            collar: 0.0,
            h,
            dt,
            t_begin,
            t_end,
            max_values: DEFAULT_MAX_VALUES,
        }
    }

    /// Extend the node lattice `width` beyond the domain ball, rounded up
    /// to whole layers so the domain nodes stay on the lattice.
    pub fn collar(mut self, width: f64) -> Self {
        self.collar = width;
        self
    }

    pub fn max_values(mut self, cap: usize) -> Self {
        self.max_values = cap;
        self
    }

    pub fn build(self) -> Result<SpaceTimeGrid, GridError> {
        let Self {
            dim,
            radius,
            collar,
            h,
            dt,
            t_begin,
            t_end,
            max_values,
        } = self;
        if dim != 1 && dim != 2 {
            return Err(GridError::BadDimension(dim));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(GridError::NonPositiveH(h));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(GridError::NonPositiveDt(dt));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GridError::NonPositiveRadius(radius));
        }
        if !(t_begin < t_end) {
            return Err(GridError::EmptyTimeRange(t_begin, t_end));
        }

        let layers = if collar > 0.0 {
            (collar / h - GEOM_TOL).ceil().max(1.0) as usize
        } else {
            0
        };
        let box_radius = radius + layers as f64 * h;

        let per_axis = (2.0 * box_radius / h + GEOM_TOL).floor() as usize + 1;
        let nx = [per_axis, if dim == 2 { per_axis } else { 1 }];
        let nt = ((t_end - t_begin) / dt + GEOM_TOL).floor() as usize + 1;

        let n_space = nx[0]
            .checked_mul(nx[1])
            .ok_or(GridError::TooLarge {
                requested: usize::MAX,
                cap: max_values,
            })?;
        let total = n_space.checked_mul(nt).unwrap_or(usize::MAX);
        if total > max_values {
            return Err(GridError::TooLarge {
                requested: total,
                cap: max_values,
            });
        }

        let mut grid = SpaceTimeGrid {
            dim,
            domain_radius: radius,
            box_radius,
            h,
            dt,
            t_begin,
            t_end,
            nx,
            nt,
            mask: Vec::new(),
            update_interior: Vec::new(),
        };
        let r_tol = radius * (1.0 + GEOM_TOL) + 1e-14;
        grid.mask = (0..n_space)
            .map(|s| norm(grid.coord(s)) <= r_tol)
            .collect();
        grid.update_interior = (0..n_space)
            .map(|s| grid.mask[s] && grid.full_neighborhood_masked(s))
            .collect();
        Ok(grid)
    }
}

/// Grid over the box [-R, R]^dim with ball mask B_R, no collar.
pub fn make_grid(
    dim: usize,
    radius: f64,
    h: f64,
    dt: f64,
    t_begin: f64,
    t_end: f64,
) -> Result<SpaceTimeGrid, GridError> {
    GridBuilder::new(dim, radius, h, dt, t_begin, t_end).build()
}

impl SpaceTimeGrid {
    pub fn nodes_per_axis(&self) -> usize {
        self.nx[0]
    }

    pub fn n_space(&self) -> usize {
        self.nx[0] * self.nx[1]
    }

    pub fn n_time(&self) -> usize {
        self.nt
    }

    /// Coordinate of the i-th node on an axis, exactly -box_radius + i·h.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.box_radius + i as f64 * self.h
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t_begin + k as f64 * self.dt
    }

    pub fn flat(&self, i: usize, j: usize) -> usize {
        j * self.nx[0] + i
    }

    pub fn unflat(&self, s: usize) -> (usize, usize) {
        (s % self.nx[0], s / self.nx[0])
    }

    pub fn coord(&self, s: usize) -> Point {
        let (i, j) = self.unflat(s);
        if self.dim == 1 {
            [self.axis_coord(i), 0.0]
        } else {
            [self.axis_coord(i), self.axis_coord(j)]
        }
    }

    /// Flat spatial index of the node at `x`; None when `x` is not a
    /// lattice point (up to round-off).
    pub fn node_at(&self, x: Point) -> Option<usize> {
        let mut idx = [0usize; 2];
        for axis in 0..self.dim {
            let f = (x[axis] + self.box_radius) / self.h;
            let i = f.round();
            if i < 0.0 || i >= self.nx[axis] as f64 {
                return None;
            }
            if (f - i).abs() > 1e-9 * (1.0 + f.abs()) {
                return None;
            }
            idx[axis] = i as usize;
        }
        Some(self.flat(idx[0], idx[1]))
    }

    /// Time index of the slice at `t`; None when `t` is off the time
    /// lattice (up to round-off).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let f = (t - self.t_begin) / self.dt;
        let k = f.round();
        if k < 0.0 || k >= self.nt as f64 || (f - k).abs() > 1e-9 * (1.0 + f.abs()) {
            return None;
        }
        Some(k as usize)
    }

    pub fn in_mask(&self, s: usize) -> bool {
        self.mask[s]
    }

    /// Masked-in node whose full 3^dim-1 neighborhood is also masked-in.
    /// These are the nodes where every stencil in the crate is available.
    pub fn is_update_interior(&self, s: usize) -> bool {
        self.update_interior[s]
    }

    /// Masked-in node with at least one missing neighbor: the discrete
    /// stand-in for the lateral boundary of B_R.
    pub fn is_mask_boundary(&self, s: usize) -> bool {
        self.mask[s] && !self.update_interior[s]
    }

    pub fn neighbor(&self, s: usize, axis: usize, step: isize) -> Option<usize> {
        let (i, j) = self.unflat(s);
        let idx = [i as isize, j as isize];
        let mut next = idx;
        next[axis] += step;
        if next[0] < 0
            || next[1] < 0
            || next[0] >= self.nx[0] as isize
            || next[1] >= self.nx[1] as isize
        {
            None
        } else {
            Some(self.flat(next[0] as usize, next[1] as usize))
        }
    }

    fn full_neighborhood_masked(&self, s: usize) -> bool {
        let (i, j) = self.unflat(s);
        let (i, j) = (i as isize, j as isize);
        let deltas: &[(isize, isize)] = if self.dim == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ]
        };
        for &(di, dj) in deltas {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= self.nx[0] as isize || nj >= self.nx[1] as isize {
                return false;
            }
            if !self.mask[self.flat(ni as usize, nj as usize)] {
                return false;
            }
        }
        true
    }

    /// Flat indices of all masked-in nodes, ascending.
    pub fn masked_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_space()).filter(|&s| self.mask[s])
    }

    /// Structural equality of the discretization (ignores the mask cache).
    pub fn same_layout(&self, other: &SpaceTimeGrid) -> bool {
        self.dim == other.dim
            && self.domain_radius == other.domain_radius
            && self.box_radius == other.box_radius
            && self.h == other.h
            && self.dt == other.dt
            && self.t_begin == other.t_begin
            && self.nx == other.nx
            && self.nt == other.nt
    }
}

fn check_finite(values: &[f64]) -> Result<(), GridError> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(GridError::NonFiniteValue { value, index });
        }
    }
    Ok(())
}

/// A single time slice sampled on the grid's spatial lattice.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<SpaceTimeGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SpaceTimeGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_space() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                want: grid.n_space(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<SpaceTimeGrid>, t: f64, f: impl Fn(Point, f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.n_space()).map(|s| f(grid.coord(s), t)).collect();
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }
}

/// A full space-time sample: n_time slices, time-major storage.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub grid: Arc<SpaceTimeGrid>,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: Arc<SpaceTimeGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_space() * grid.n_time() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                want: grid.n_space() * grid.n_time(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(
        grid: Arc<SpaceTimeGrid>,
        f: impl Fn(Point, f64) -> f64,
    ) -> Result<Self, GridError> {
        let ns = grid.n_space();
        let mut values = Vec::with_capacity(ns * grid.n_time());
        for k in 0..grid.n_time() {
            let t = grid.t(k);
            for s in 0..ns {
                values.push(f(grid.coord(s), t));
            }
        }
        Self::new(grid, values)
    }

    /// Exact node lookup; no interpolation.
    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values[k * self.grid.n_space() + s]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let ns = self.grid.n_space();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodewise a + scale·b on a shared grid layout.
    pub fn axpy(&self, scale: f64, other: &SpaceTimeField) -> Result<SpaceTimeField, GridError> {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        SpaceTimeField::new(self.grid.clone(), values)
    }

    /// Max of |self - other| over masked nodes of every slice.
    pub fn sup_diff_masked(&self, other: &SpaceTimeField) -> f64 {
        let ns = self.grid.n_space();
        let mut sup: f64 = 0.0;
        for k in 0..self.grid.n_time() {
            for s in self.grid.masked_nodes() {
                sup = sup.max((self.values[k * ns + s] - other.values[k * ns + s]).abs());
            }
        }
        sup
    }
}
