//! Closed-form reference solutions and their exact source terms.
//!
//! These are the ground truth for every convergence and exponent study in
//! the crate. Each reference holds its solution u and source f as exact
//! closures, sampled on demand, never pre-tabulated.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{GridError, SpaceTimeField, SpaceTimeGrid};
use crate::types::{norm, CoefficientField, Exponents, Point, TypesError};

pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error("the critical-growth solution requires p >= 2, got p = {0}")]
    PBelowTwo(f64),
    #[error("q_tilde must be >= p - 2 = {p_tilde}, got {q_tilde}")]
    QTildeTooSmall { p_tilde: f64, q_tilde: f64 },
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error(transparent)]
    Types(#[from] TypesError),
}

/// A solution/source pair with the coefficient and exponents it solves
/// the equation for, plus a validity note (domain, smoothness caveats).
#[derive(Clone)]
pub struct ReferenceSolution {
    pub u: SpaceTimeFn,
    pub f: SpaceTimeFn,
    pub coeff: CoefficientField,
    pub exps: Exponents,
    pub note: String,
}

impl ReferenceSolution {
    pub fn sample_u(&self, grid: Arc<SpaceTimeGrid>) -> Result<SpaceTimeField, GridError> {
        let u = self.u.clone();
        SpaceTimeField::from_fn(grid, move |x, t| u(x, t))
    }

    pub fn sample_f(&self, grid: Arc<SpaceTimeGrid>) -> Result<SpaceTimeField, GridError> {
        let f = self.f.clone();
        SpaceTimeField::from_fn(grid, move |x, t| f(x, t))
    }
}

fn pow_or_one(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

/// The critical-point solution u(x,t) = |x|^(1+1/(1+p̃)) + t with p̃ = p−2,
/// a ≡ 1, and the exact source
///
///   f(x,t) = 1 − [n−1 + (p−1)/(1+p̃)]·[β^(1+p̃) + |x|^((q̃−p̃)/(1+p̃))·β^(1+q̃)],
///
/// β = (2+p̃)/(1+p̃). It has a critical point at the space-time origin and
/// grows there exactly like r^(1+1/(1+p̃)): the witness that the sharp
/// growth exponent cannot be improved.
pub fn sharp_example(n: usize, p: f64, q_tilde: f64) -> Result<ReferenceSolution, ExactError> {
    if n != 1 && n != 2 {
        return Err(ExactError::BadDimension(n));
    }
    if !(p >= 2.0) {
        return Err(ExactError::PBelowTwo(p));
    }
    let p_tilde = p - 2.0;
    if !(q_tilde >= p_tilde) || !q_tilde.is_finite() {
        return Err(ExactError::QTildeTooSmall { p_tilde, q_tilde });
    }
    let exps = Exponents::new(p, p_tilde, q_tilde)?;
    let beta = 1.0 + exps.alpha_star(); // growth exponent 1 + 1/(1+p̃)
    let factor = (n as f64) - 1.0 + (p - 1.0) / (1.0 + p_tilde);
    let radial_pow = (q_tilde - p_tilde) / (1.0 + p_tilde);
    let b_low = beta.powf(1.0 + p_tilde);
    let b_high = beta.powf(1.0 + q_tilde);

    let u = Arc::new(move |x: Point, t: f64| norm(x).powf(beta) + t);
    let f = Arc::new(move |x: Point, _t: f64| {
        1.0 - factor * (b_low + pow_or_one(norm(x), radial_pow) * b_high)
    });
    Ok(ReferenceSolution {
        u,
        f,
        coeff: CoefficientField::constant(1.0)?,
        exps,
        note: format!(
            "critical-point solution on B_1 x (-1,0]; u is C^1 but not C^2 at x=0, \
             growth exponent {beta} at the origin; n={n}"
        ),
    })
}

/// u = b·x + c, f ≡ 0. The Hessian vanishes, so the pair solves the
/// equation for any coefficient and any admissible exponents; defaults
/// are supplied for convenience.
pub fn affine_solution(b: Point, c: f64) -> ReferenceSolution {
    let u = Arc::new(move |x: Point, _t: f64| b[0] * x[0] + b[1] * x[1] + c);
    let f = Arc::new(|_: Point, _: f64| 0.0);
    ReferenceSolution {
        u,
        f,
        coeff: CoefficientField::constant(1.0).expect("constant 1 is admissible"),
        exps: Exponents::new(3.0, 1.0, 2.0).expect("default exponents"),
        note: "affine solution; exact for any coefficient and exponents".into(),
    }
}

/// u = exp(−2|k|²t)·cos(k·x) with p = 2, p̃ = q̃ = 0, a ≡ 1, f ≡ 0:
/// the multiplier is identically 2 and the equation is ∂ₜu = 2Δu.
pub fn heat_reference(k: Point) -> ReferenceSolution {
    let k2 = k[0] * k[0] + k[1] * k[1];
    let u = Arc::new(move |x: Point, t: f64| {
        (-2.0 * k2 * t).exp() * (k[0] * x[0] + k[1] * x[1]).cos()
    });
    let f = Arc::new(|_: Point, _: f64| 0.0);
    ReferenceSolution {
        u,
        f,
        coeff: CoefficientField::constant(1.0).expect("constant 1 is admissible"),
        exps: Exponents::new(2.0, 0.0, 0.0).expect("heat exponents"),
        note: "heat-type reference for dt u = 2 du; smooth everywhere".into(),
    }
}
