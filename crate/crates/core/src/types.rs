//! Exponent triples and the modulating coefficient a(x,t).

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::SpaceTimeGrid;

/// Spatial point. One-dimensional setups keep the second component at 0.
pub type Point = [f64; 2];

/// Euclidean norm of a point.
pub fn norm(x: Point) -> f64 {
    (x[0] * x[0] + x[1] * x[1]).sqrt()
}

/// Euclidean distance between two points.
pub fn dist(x: Point, y: Point) -> f64 {
    norm([x[0] - y[0], x[1] - y[1]])
}

#[derive(Debug, Error, PartialEq)]
pub enum TypesError {
    #[error("ellipticity exponent must satisfy p > 1, got p = {0}")]
    PNotAdmissible(f64),
    #[error("degeneracy exponents require 0 <= p_tilde <= q_tilde < inf, got ({0}, {1})")]
    DegeneracyExponents(f64, f64),
    #[error("coefficient bounds require 0 < a_minus <= a_plus, got ({0}, {1})")]
    CoefficientBounds(f64, f64),
    #[error("coefficient value {value} at x={x:?}, t={t} escapes [{lo}, {hi}]")]
    CoefficientOutOfBounds {
        value: f64,
        x: Point,
        t: f64,
        lo: f64,
        hi: f64,
    },
    #[error("coefficient finite-difference slope {observed} exceeds Lipschitz budget {budget}")]
    CoefficientLipschitz { observed: f64, budget: f64 },
}

/// The exponent triple (p, p̃, q̃) governing ellipticity and degeneracy.
///
/// `p` enters the normalized p-Laplacian; `p_tilde` and `q_tilde` are the
/// two rates at which the diffusion multiplier |∇u|^p̃ + a|∇u|^q̃ vanishes
/// on the critical set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub p: f64,
    pub p_tilde: f64,
    pub q_tilde: f64,
}

impl Exponents {
    pub fn new(p: f64, p_tilde: f64, q_tilde: f64) -> Result<Self, TypesError> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(TypesError::PNotAdmissible(p));
        }
        if !(0.0 <= p_tilde && p_tilde <= q_tilde) || !q_tilde.is_finite() {
            return Err(TypesError::DegeneracyExponents(p_tilde, q_tilde));
        }
        Ok(Self { p, p_tilde, q_tilde })
    }

    /// Sharp spatial growth deficit: α* = 1/(1+p̃) ∈ (0, 1].
    ///
    /// Solutions grow like r^(1+α*) around critical points.
    pub fn alpha_star(&self) -> f64 {
        1.0 / (1.0 + self.p_tilde)
    }

    /// Intrinsic time scaling: θ* = (2+p̃)/(1+p̃) = 1 + α*. Computed as
    /// 1 + α* so the identity with [`Self::alpha_star`] is bit-exact.
    pub fn theta_star(&self) -> f64 {
        1.0 + self.alpha_star()
    }
}

impl fmt::Display for Exponents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={}, p_tilde={}, q_tilde={}",
            self.p, self.p_tilde, self.q_tilde
        )
    }
}

type CoeffFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// The modulating coefficient a(x,t) with its certified bounds.
///
/// Required to stay inside [a_minus, a_plus] with 0 < a_minus, and to have
/// space-time Lipschitz constant at most `lip_bound`; both are checked
/// against sampled grids by [`CoefficientField::validate_on`].
#[derive(Clone)]
pub struct CoefficientField {
    evaluator: CoeffFn,
    pub a_minus: f64,
    pub a_plus: f64,
    pub lip_bound: f64,
}

impl CoefficientField {
    pub fn new(
        evaluator: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        a_minus: f64,
        a_plus: f64,
        lip_bound: f64,
    ) -> Result<Self, TypesError> {
        if !(0.0 < a_minus && a_minus <= a_plus) || !a_plus.is_finite() {
            return Err(TypesError::CoefficientBounds(a_minus, a_plus));
        }
        Ok(Self {
            evaluator: Arc::new(evaluator),
            a_minus,
            a_plus,
            lip_bound,
        })
    }

    /// Spatially and temporally constant coefficient a ≡ a0.
    pub fn constant(a0: f64) -> Result<Self, TypesError> {
        Self::new(move |_, _| a0, a0, a0, 0.0)
    }

    /// Affine-in-x₁ coefficient a(x,t) = a0 + slope·x₁, with bounds taken
    /// over the box [-box_radius, box_radius]^dim.
    pub fn ramp(a0: f64, slope: f64, box_radius: f64) -> Result<Self, TypesError> {
        let reach = slope.abs() * box_radius;
        Self::new(
            move |x, _| a0 + slope * x[0],
            a0 - reach,
            a0 + reach,
            slope.abs(),
        )
    }

    pub fn eval(&self, x: Point, t: f64) -> f64 {
        (self.evaluator)(x, t)
    }

    /// Check the bounds and the finite-difference Lipschitz estimate over
    /// every node of `grid`. A true Lipschitz function never exceeds its
    /// constant on difference quotients, so only round-off slack is added.
    pub fn validate_on(&self, grid: &SpaceTimeGrid) -> Result<(), TypesError> {
        let slack = 1e-12 * (1.0 + self.a_plus.abs());
        let lip_slack = self.lip_bound * 1e-12 + 1e-12;
        let mut max_slope: f64 = 0.0;
        for k in 0..grid.n_time() {
            let t = grid.t(k);
            for s in 0..grid.n_space() {
                let x = grid.coord(s);
                let v = self.eval(x, t);
                if !(v >= self.a_minus - slack && v <= self.a_plus + slack) {
                    return Err(TypesError::CoefficientOutOfBounds {
                        value: v,
                        x,
                        t,
                        lo: self.a_minus,
                        hi: self.a_plus,
                    });
                }
                for axis in 0..grid.dim {
                    if let Some(sn) = grid.neighbor(s, axis, 1) {
                        let w = self.eval(grid.coord(sn), t);
                        max_slope = max_slope.max((w - v).abs() / grid.h);
                    }
                }
                if k + 1 < grid.n_time() {
                    let w = self.eval(x, grid.t(k + 1));
                    max_slope = max_slope.max((w - v).abs() / grid.dt);
                }
            }
        }
        if max_slope > self.lip_bound + lip_slack {
            return Err(TypesError::CoefficientLipschitz {
                observed: max_slope,
                budget: self.lip_bound,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("a_minus", &self.a_minus)
            .field("a_plus", &self.a_plus)
            .field("lip_bound", &self.lip_bound)
            .finish()
    }
}
