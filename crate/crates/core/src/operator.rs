//! Finite-difference realizations of ∇u, D²u, the normalized p-Laplacian,
//! the degeneracy multiplier H(x,t,ξ) = |ξ|^p̃ + a(x,t)|ξ|^q̃, and the full
//! equation residual.
//!
//! Every |∇u| in the crate is replaced by the regularized magnitude
//! √(|∇u|² + ε²); the vanishing-gradient case of the viscosity test has
//! no grid analog and is absorbed by this regularization.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{SpaceTimeField, SpaceTimeGrid};
use crate::types::{CoefficientField, Exponents, Point};

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("node {0} lies outside the domain mask")]
    OutsideMask(usize),
    #[error("node {0} lacks the neighborhood required by the stencil")]
    InsufficientNeighborhood(usize),
    #[error("normalized p-Laplacian evaluated at a critical point with epsilon = 0")]
    SingularGradient,
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("residual needs at least 2 time slices, got {0}")]
    TooFewSlices(usize),
}

/// Gradient regularizer: |∇u| is evaluated as √(|∇u|² + ε²).
///
/// ε = 0 is only legal on evaluation paths that guarantee |∇u| > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationPolicy {
    pub epsilon: f64,
}

impl RegularizationPolicy {
    pub fn fixed(epsilon: f64) -> Self {
        debug_assert!(epsilon >= 0.0);
        Self { epsilon }
    }

    pub fn zero() -> Self {
        Self { epsilon: 0.0 }
    }

    /// Default policy: ε = max(10⁻⁶, h²), keeping the regularization error
    /// below the spatial truncation error.
    pub fn auto_for(h: f64) -> Self {
        Self {
            epsilon: (h * h).max(1e-6),
        }
    }

    pub fn magnitude(&self, grad: Point) -> f64 {
        (grad[0] * grad[0] + grad[1] * grad[1] + self.epsilon * self.epsilon).sqrt()
    }
}

/// m^e with the exponents that actually occur fast-pathed; powf keeps the
/// 0^0 = 1 convention either way.
pub(crate) fn pow_deg(m: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        m
    } else if e == 2.0 {
        m * m
    } else {
        m.powf(e)
    }
}

/// Central-difference spatial gradient of one time slice at node `s`;
/// one-sided where a mask edge removes a neighbor.
pub fn gradient(grid: &SpaceTimeGrid, slice: &[f64], s: usize) -> Result<Point, OperatorError> {
    if !grid.in_mask(s) {
        return Err(OperatorError::OutsideMask(s));
    }
    let mut g = [0.0, 0.0];
    for axis in 0..grid.dim {
        let fwd = grid
            .neighbor(s, axis, 1)
            .filter(|&n| grid.in_mask(n));
        let bwd = grid
            .neighbor(s, axis, -1)
            .filter(|&n| grid.in_mask(n));
        g[axis] = match (bwd, fwd) {
            (Some(b), Some(f)) => (slice[f] - slice[b]) / (2.0 * grid.h),
            (None, Some(f)) => (slice[f] - slice[s]) / grid.h,
            (Some(b), None) => (slice[s] - slice[b]) / grid.h,
            (None, None) => return Err(OperatorError::InsufficientNeighborhood(s)),
        };
    }
    Ok(g)
}

/// Second central differences; the cross term uses the 4-corner formula.
/// Requires the full 9-point (2-D) / 3-point (1-D) neighborhood.
pub fn hessian(
    grid: &SpaceTimeGrid,
    slice: &[f64],
    s: usize,
) -> Result<[[f64; 2]; 2], OperatorError> {
    if !grid.in_mask(s) {
        return Err(OperatorError::OutsideMask(s));
    }
    if !grid.is_update_interior(s) {
        return Err(OperatorError::InsufficientNeighborhood(s));
    }
    let h2 = grid.h * grid.h;
    let mut d2 = [[0.0; 2]; 2];
    for axis in 0..grid.dim {
        let f = grid.neighbor(s, axis, 1).unwrap();
        let b = grid.neighbor(s, axis, -1).unwrap();
        d2[axis][axis] = (slice[f] - 2.0 * slice[s] + slice[b]) / h2;
    }
    if grid.dim == 2 {
        let pp = grid.neighbor(grid.neighbor(s, 0, 1).unwrap(), 1, 1).unwrap();
        let mm = grid
            .neighbor(grid.neighbor(s, 0, -1).unwrap(), 1, -1)
            .unwrap();
        let pm = grid
            .neighbor(grid.neighbor(s, 0, 1).unwrap(), 1, -1)
            .unwrap();
        let mp = grid
            .neighbor(grid.neighbor(s, 0, -1).unwrap(), 1, 1)
            .unwrap();
        let cross = (slice[pp] + slice[mm] - slice[pm] - slice[mp]) / (4.0 * h2);
        d2[0][1] = cross;
        d2[1][0] = cross;
    }
    Ok(d2)
}

/// Δ_p^N = tr(D²u) + (p−2)⟨D²u q, q⟩ with q = ∇u/√(|∇u|² + ε²).
///
/// p = 2 reduces to the Laplacian for every input, gradient direction
/// included; otherwise ε = 0 together with ∇u = 0 is a singular-point
/// error.
pub fn normalized_p_laplacian(
    d2: &[[f64; 2]; 2],
    grad: Point,
    p: f64,
    reg: RegularizationPolicy,
) -> Result<f64, OperatorError> {
    let trace = d2[0][0] + d2[1][1];
    if p == 2.0 {
        // Exact reduction to the Laplacian.
        return Ok(trace);
    }
    let g2 = grad[0] * grad[0] + grad[1] * grad[1];
    if reg.epsilon == 0.0 && g2 == 0.0 {
        return Err(OperatorError::SingularGradient);
    }
    let m = (g2 + reg.epsilon * reg.epsilon).sqrt();
    let q = [grad[0] / m, grad[1] / m];
    let quad = q[0] * (d2[0][0] * q[0] + d2[0][1] * q[1])
        + q[1] * (d2[1][0] * q[0] + d2[1][1] * q[1]);
    Ok(trace + (p - 2.0) * quad)
}

/// Degeneracy multiplier H(x,t,∇u) = m^p̃ + a(x,t)·m^q̃, m = √(|∇u|²+ε²).
pub fn degeneracy_h(
    x: Point,
    t: f64,
    grad: Point,
    coeff: &CoefficientField,
    exps: &Exponents,
    reg: RegularizationPolicy,
) -> f64 {
    let m = reg.magnitude(grad);
    pow_deg(m, exps.p_tilde) + coeff.eval(x, t) * pow_deg(m, exps.q_tilde)
}

/// Pointwise residual field with an explicit presence mask: residual
/// values exist only at update-interior nodes of slices k >= 1.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub grid: Arc<SpaceTimeGrid>,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl ResidualField {
    pub fn get(&self, s: usize, k: usize) -> Option<f64> {
        let idx = k * self.grid.n_space() + s;
        self.present[idx].then(|| self.values[idx])
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.present)
            .filter(|&(_, &p)| p)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Max |residual| over present nodes satisfying a spatial predicate.
    pub fn max_abs_where(&self, pred: impl Fn(Point) -> bool) -> f64 {
        let ns = self.grid.n_space();
        let mut out: f64 = 0.0;
        for (idx, (&v, &p)) in self.values.iter().zip(&self.present).enumerate() {
            if p && pred(self.grid.coord(idx % ns)) {
                out = out.max(v.abs());
            }
        }
        out
    }
}

/// r = ∂ₜu − H(x,t,∇u)·Δ_p^N u − f at every update-interior node of every
/// slice k >= 1, with ∂ₜu the backward difference. Other nodes are absent.
pub fn residual(
    u: &SpaceTimeField,
    f: &SpaceTimeField,
    coeff: &CoefficientField,
    exps: &Exponents,
    reg: RegularizationPolicy,
) -> Result<ResidualField, OperatorError> {
    let grid = &u.grid;
    if !grid.same_layout(&f.grid) {
        return Err(OperatorError::GridMismatch);
    }
    if grid.n_time() < 2 {
        return Err(OperatorError::TooFewSlices(grid.n_time()));
    }
    let ns = grid.n_space();
    let mut values = vec![0.0; ns * grid.n_time()];
    let mut present = vec![false; ns * grid.n_time()];
    for k in 1..grid.n_time() {
        let t = grid.t(k);
        let slice = u.slice(k);
        let prev = u.slice(k - 1);
        for s in 0..ns {
            if !grid.is_update_interior(s) {
                continue;
            }
            let grad = gradient(grid, slice, s)?;
            let d2 = hessian(grid, slice, s)?;
            let lap = normalized_p_laplacian(&d2, grad, exps.p, reg)?;
            let x = grid.coord(s);
            let h_mult = degeneracy_h(x, t, grad, coeff, exps, reg);
            let dudt = (slice[s] - prev[s]) / grid.dt;
            let idx = k * ns + s;
            values[idx] = dudt - h_mult * lap - f.get(s, k);
            present[idx] = true;
        }
    }
    Ok(ResidualField {
        grid: grid.clone(),
        values,
        present,
    })
}
