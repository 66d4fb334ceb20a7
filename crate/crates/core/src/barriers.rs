//! Closed-form barrier functions with machine verification that they are
//! numerical supersolutions of the equation.
//!
//! The non-degeneracy barrier Φ(x,t) = c·(|x−x₀|^(1+α) + (t₀−t)^((1+α)/θ))
//! with the canonical choices α = 1/(1+p̃), θ = 1+α satisfies
//! ∂ₜΦ − H(x,t,∇Φ)·Δ_p^N Φ ≥ −c·K with K = 1 + 2^(1+q̃)(1+a⁺)(n−1+α(p−1)),
//! so any c ≤ |c₀|/K makes it a supersolution whenever sup f ≤ −|c₀|.
//! The quadratic-in-space barrier η + M₁(t−t₀) + (M₂/η)|x|² dominates
//! Lipschitz cones at its anchor time and is the engine behind time
//! Hölder estimates.

use thiserror::Error;

use crate::cylinder::IntrinsicCylinder;
use crate::grid::SpaceTimeField;
use crate::operator::{
    degeneracy_h, gradient, hessian, normalized_p_laplacian, OperatorError, RegularizationPolicy,
};
use crate::types::{dist, CoefficientField, Exponents, Point};

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error("no checkable nodes: the grid is too coarse to exclude the 2h-neighborhood of the center")]
    TooCoarse,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Φ(x,t) = c·(|x−x₀|^(1+α) + (t₀−t)^((1+α)/θ)), defined for t <= t₀.
///
/// Strictly positive away from its center and vanishing there, which is
/// what a contradiction argument at an extremum needs.
#[derive(Debug, Clone, Copy)]
pub struct NonDegBarrier {
    pub c: f64,
    pub alpha: f64,
    pub theta: f64,
    pub center_x: Point,
    pub center_t: f64,
}

impl NonDegBarrier {
    /// The canonical barrier: α = α* = 1/(1+p̃) and θ = 1+α, which makes
    /// the time exponent (1+α)/θ exactly one.
    pub fn canonical(exps: &Exponents, c: f64, center_x: Point, center_t: f64) -> Self {
        let alpha = exps.alpha_star();
        Self {
            c,
            alpha,
            theta: 1.0 + alpha,
            center_x,
            center_t,
        }
    }

    pub fn eval(&self, x: Point, t: f64) -> f64 {
        let r = dist(x, self.center_x);
        let back = (self.center_t - t).max(0.0);
        self.c * (r.powf(1.0 + self.alpha) + back.powf((1.0 + self.alpha) / self.theta))
    }

    /// Analytic minimum of Φ over the parabolic boundary of
    /// Q_{r,θ}(center): both the lateral and the bottom case give
    /// c·r^(1+α) when θ = 1+α.
    pub fn boundary_minimum(&self, radius: f64) -> f64 {
        let lateral = self.c * radius.powf(1.0 + self.alpha);
        let bottom = self.c * radius.powf(self.theta * (1.0 + self.alpha) / self.theta);
        lateral.min(bottom)
    }
}

/// v̄(x,t) = η + M₁(t−t₀) + (M₂/η)·|x−x₀|².
#[derive(Debug, Clone, Copy)]
pub struct TimeHolderBarrier {
    pub eta: f64,
    pub m1: f64,
    pub m2: f64,
    pub center_x: Point,
    pub anchor_t: f64,
}

impl TimeHolderBarrier {
    pub fn eval(&self, x: Point, t: f64) -> f64 {
        let r = dist(x, self.center_x);
        self.eta + self.m1 * (t - self.anchor_t) + self.m2 / self.eta * r * r
    }
}

/// Largest admissible barrier constant c = min(1, |c₀| / K) with
/// K = 1 + 2^(1+q̃)·(1+a⁺)·(n−1+α(p−1)) and α = 1/(1+p̃).
///
/// c₀ is the negative upper bound of the source (c0_mag = |c₀|); this is
/// the value that turns the final inequality −c·K >= c₀ into an equality
/// chain rather than the sign-flipped form.
pub fn admissible_c(n: usize, exps: &Exponents, a_plus: f64, c0_mag: f64) -> f64 {
    let alpha = exps.alpha_star();
    let k = 1.0
        + f64::powf(2.0, 1.0 + exps.q_tilde)
            * (1.0 + a_plus)
            * (n as f64 - 1.0 + alpha * (exps.p - 1.0));
    (c0_mag / k).min(1.0)
}

/// Constants for the quadratic barrier:
/// M₂ = lip² + (8/3)²·sup_u² and
/// M₁ = C·(M₂^(1+p̃)/η^(1+p̃) + M₂^(1+q̃)/η^(1+q̃)) + sup_f,
/// with C = max{1, p−1}·n·2^(1+q̃)·(1+a⁺), the explicit constant
/// dominating H·Δ_p^N of the barrier.
pub fn time_barrier_constants(
    lip: f64,
    sup_u: f64,
    eta: f64,
    exps: &Exponents,
    a_plus: f64,
    n: usize,
    sup_f: f64,
) -> (f64, f64) {
    let m2 = lip * lip + (8.0 / 3.0) * (8.0 / 3.0) * sup_u * sup_u;
    let c = (exps.p - 1.0).max(1.0) * n as f64 * f64::powf(2.0, 1.0 + exps.q_tilde) * (1.0 + a_plus);
    let m1 = c
        * ((m2 / eta).powf(1.0 + exps.p_tilde) + (m2 / eta).powf(1.0 + exps.q_tilde))
        + sup_f;
    (m1, m2)
}

/// Outcome of a supersolution check over a cylinder.
#[derive(Debug, Clone, Copy)]
pub struct SupersolutionReport {
    /// min over checked nodes of ∂ₜΦ − H·Δ_p^N Φ − f_bound.
    pub min_margin: f64,
    pub tol: f64,
    /// min_margin >= -tol.
    pub pass: bool,
    pub checked: usize,
    pub argmin_x: Point,
    pub argmin_t: f64,
}

/// Verify ∂ₜΦ − H(x,t,∇Φ)·Δ_p^N Φ − f_bound >= −tol on the cylinder,
/// with tol = 10(h+ε), excluding the 2h-neighborhood of the spatial
/// center where Φ is not C². The time derivative is the backward
/// difference, so the field must carry at least one slice below each
/// checked one.
pub fn verify_supersolution(
    phi: &SpaceTimeField,
    cyl: &IntrinsicCylinder,
    f_bound: f64,
    coeff: &CoefficientField,
    exps: &Exponents,
    reg: RegularizationPolicy,
) -> Result<SupersolutionReport, BarrierError> {
    let grid = &phi.grid;
    let tol = 10.0 * (grid.h + reg.epsilon);
    let mut min_margin = f64::INFINITY;
    let mut checked = 0usize;
    let mut argmin = ([0.0, 0.0], 0.0);
    for k in 1..grid.n_time() {
        let t = grid.t(k);
        if !cyl.contains_t(t) {
            continue;
        }
        let slice = phi.slice(k);
        let prev = phi.slice(k - 1);
        for s in 0..grid.n_space() {
            if !grid.is_update_interior(s) {
                continue;
            }
            let x = grid.coord(s);
            if !cyl.contains_x(x) || dist(x, cyl.center_x) <= 2.0 * grid.h * (1.0 + 1e-12) {
                continue;
            }
            let grad = gradient(grid, slice, s)?;
            let d2 = hessian(grid, slice, s)?;
            let lap = normalized_p_laplacian(&d2, grad, exps.p, reg)?;
            let h_mult = degeneracy_h(x, t, grad, coeff, exps, reg);
            let dphi_dt = (slice[s] - prev[s]) / grid.dt;
            let margin = dphi_dt - h_mult * lap - f_bound;
            checked += 1;
            if margin < min_margin {
                min_margin = margin;
                argmin = (x, t);
            }
        }
    }
    if checked == 0 {
        return Err(BarrierError::TooCoarse);
    }
    Ok(SupersolutionReport {
        min_margin,
        tol,
        pass: min_margin >= -tol,
        checked,
        argmin_x: argmin.0,
        argmin_t: argmin.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, SpaceTimeField};
    use crate::operator::RegularizationPolicy;
    use std::sync::Arc;

    fn canonical_setup() -> (Exponents, CoefficientField, f64) {
        // n=2, p=3 (p̃=1), q̃=1, a⁺=1, |c₀|=1: K = 1 + 4·2·2 = 17.
        let exps = Exponents::new(3.0, 1.0, 1.0).unwrap();
        let coeff = CoefficientField::constant(1.0).unwrap();
        let c = admissible_c(2, &exps, 1.0, 1.0);
        (exps, coeff, c)
    }

    #[test]
    fn admissible_c_closed_form() {
        let (_, _, c) = canonical_setup();
        assert!((c - 1.0 / 17.0).abs() < 1e-15, "c = {c}");

        // Monotone decreasing in a+.
        let exps = Exponents::new(3.0, 1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for a_plus in [0.5, 1.0, 2.0, 10.0] {
            let c = admissible_c(2, &exps, a_plus, 1.0);
            assert!(c < prev);
            prev = c;
        }

        // Linear in |c0| until the cap at 1.
        let c1 = admissible_c(2, &exps, 1.0, 0.5);
        assert!((c1 - 0.5 / 17.0).abs() < 1e-15);
        assert_eq!(admissible_c(2, &exps, 1.0, 100.0), 1.0);
    }

    #[test]
    fn time_barrier_constants_formulas() {
        let exps = Exponents::new(3.0, 1.0, 2.0).unwrap();
        let (_, m2) = time_barrier_constants(1.0, 1.0, 0.5, &exps, 1.0, 2, 0.0);
        assert!((m2 - (1.0 + 64.0 / 9.0)).abs() < 1e-12);

        let (_, m2z) = time_barrier_constants(0.0, 0.0, 0.5, &exps, 1.0, 2, 0.0);
        assert_eq!(m2z, 0.0);

        // p̃ = q̃ = 0: the η-dependent part of M1 halves when η doubles.
        let e0 = Exponents::new(2.0, 0.0, 0.0).unwrap();
        let (m1a, _) = time_barrier_constants(1.0, 1.0, 0.5, &e0, 1.0, 2, 0.25);
        let (m1b, _) = time_barrier_constants(1.0, 1.0, 1.0, &e0, 1.0, 2, 0.25);
        assert!(((m1a - 0.25) / (m1b - 0.25) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn barrier_strict_minimum_at_center() {
        let (exps, _, c) = canonical_setup();
        let b = NonDegBarrier::canonical(&exps, c, [0.0, 0.0], 0.0);
        assert_eq!(b.eval([0.0, 0.0], 0.0), 0.0);
        for (x, t) in [([0.1, 0.0], 0.0), ([0.0, 0.0], -0.01), ([-0.2, 0.3], -0.5)] {
            assert!(b.eval(x, t) > 0.0, "barrier must be positive at {x:?},{t}");
        }
    }

    #[test]
    fn barrier_boundary_minimum_matches_grid() {
        // Analytic min over the parabolic boundary is c r^(1+alpha) in
        // both the lateral and bottom cases; the grid minimum agrees to
        // O(h).
        let (exps, _, c) = canonical_setup();
        let b = NonDegBarrier::canonical(&exps, c, [0.0, 0.0], 0.0);
        let radius: f64 = 0.5;
        let h = 1.0 / 64.0;
        let depth = radius.powf(b.theta);
        let grid = Arc::new(make_grid(2, radius, h, depth / 64.0, -depth - 0.01, 0.0).unwrap());
        let phi = SpaceTimeField::from_fn(grid.clone(), |x, t| b.eval(x, t)).unwrap();
        let cyl = IntrinsicCylinder::new([0.0, 0.0], 0.0, radius, b.theta);
        let boundary = crate::cylinder::parabolic_boundary_nodes(&grid, &cyl);
        let grid_min = boundary
            .into_iter()
            .map(|(s, k)| phi.get(s, k))
            .fold(f64::INFINITY, f64::min);
        let analytic = b.boundary_minimum(radius);
        assert!((analytic - c * radius.powf(1.5)).abs() < 1e-15);
        assert!(
            (grid_min - analytic).abs() < 3.0 * c * h,
            "grid min {grid_min} vs analytic {analytic}"
        );
    }

    #[test]
    fn canonical_barrier_is_a_supersolution() {
        let (exps, coeff, c) = canonical_setup();
        let b = NonDegBarrier::canonical(&exps, c, [0.0, 0.0], 0.0);
        let radius: f64 = 0.5;
        let h = 1.0 / 32.0;
        let depth = radius.powf(b.theta);
        let dt = depth / 32.0;
        let grid = Arc::new(make_grid(2, radius, h, dt, -depth - 2.0 * dt, 0.0).unwrap());
        let phi = SpaceTimeField::from_fn(grid.clone(), |x, t| b.eval(x, t)).unwrap();
        let cyl = IntrinsicCylinder::new([0.0, 0.0], 0.0, radius, b.theta);
        let reg = RegularizationPolicy::auto_for(h);
        let report = verify_supersolution(&phi, &cyl, -1.0, &coeff, &exps, reg).unwrap();
        assert!(report.pass, "margin {} tol {}", report.min_margin, report.tol);
        // The analytic margin is 1 - c - 9c^2, comfortably positive.
        let analytic = 1.0 - c - 9.0 * c * c;
        assert!(
            (report.min_margin - analytic).abs() < 0.15,
            "margin {} vs analytic {analytic}",
            report.min_margin
        );
    }

    #[test]
    fn inflated_barrier_constant_fails() {
        let (exps, coeff, c) = canonical_setup();
        let b = NonDegBarrier::canonical(&exps, 1e3 * c, [0.0, 0.0], 0.0);
        let radius: f64 = 0.5;
        let h = 1.0 / 32.0;
        let depth = radius.powf(b.theta);
        let dt = depth / 32.0;
        let grid = Arc::new(make_grid(2, radius, h, dt, -depth - 2.0 * dt, 0.0).unwrap());
        let phi = SpaceTimeField::from_fn(grid.clone(), |x, t| b.eval(x, t)).unwrap();
        let cyl = IntrinsicCylinder::new([0.0, 0.0], 0.0, radius, b.theta);
        let reg = RegularizationPolicy::auto_for(h);
        let report = verify_supersolution(&phi, &cyl, -1.0, &coeff, &exps, reg).unwrap();
        assert!(!report.pass, "inflated c must fail, margin {}", report.min_margin);
        assert!(report.min_margin < -report.tol * 10.0);
    }

    #[test]
    fn zero_barrier_against_negative_bound_passes() {
        let (exps, coeff, _) = canonical_setup();
        let grid = Arc::new(make_grid(2, 0.5, 1.0 / 16.0, 0.05, -0.5, 0.0).unwrap());
        let phi = SpaceTimeField::from_fn(grid.clone(), |_, _| 0.0).unwrap();
        let cyl = IntrinsicCylinder::new([0.0, 0.0], 0.0, 0.5, 1.5);
        let report = verify_supersolution(
            &phi,
            &cyl,
            -1.0,
            &coeff,
            &exps,
            RegularizationPolicy::fixed(1e-6),
        )
        .unwrap();
        assert!(report.pass);
        assert!((report.min_margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_grid_is_an_error() {
        let (exps, coeff, c) = canonical_setup();
        let b = NonDegBarrier::canonical(&exps, c, [0.0, 0.0], 0.0);
        // h = 0.25 on a radius-0.5 cylinder: everything is within 2h.
        let grid = Arc::new(make_grid(2, 0.5, 0.25, 0.05, -0.5, 0.0).unwrap());
        let phi = SpaceTimeField::from_fn(grid.clone(), |x, t| b.eval(x, t)).unwrap();
        let cyl = IntrinsicCylinder::new([0.0, 0.0], 0.0, 0.5, b.theta);
        assert_eq!(
            verify_supersolution(&phi, &cyl, -1.0, &coeff, &exps, RegularizationPolicy::zero())
                .unwrap_err(),
            BarrierError::TooCoarse
        );
    }

    #[test]
    fn quadratic_barrier_dominates_lipschitz_cone() {
        // At the anchor time, eta + (M2/eta)|x|^2 >= lip*|x| for |x| <= 3/4
        // because M2 >= lip^2 (Young's inequality).
        let exps = Exponents::new(3.0, 1.0, 2.0).unwrap();
        let lip = 2.0;
        let eta = 0.3;
        let (m1, m2) = time_barrier_constants(lip, 1.5, eta, &exps, 1.0, 2, 0.5);
        let bar = TimeHolderBarrier {
            eta,
            m1,
            m2,
            center_x: [0.0, 0.0],
            anchor_t: -0.25,
        };
        let mut x = 0.0;
        while x <= 0.75 {
            let v = bar.eval([x, 0.0], -0.25);
            assert!(v >= lip * x - 1e-12, "x={x}: {v} < {}", lip * x);
            x += 0.01;
        }
    }
}
