//! Numerical laboratory for the quasilinear parabolic equation
//!
//!   ∂ₜu = (|∇u|^p̃ + a(x,t)·|∇u|^q̃) · Δ_p^N u + f(x,t)
//!
//! where Δ_p^N is the normalized p-Laplacian
//! Δu + (p−2)⟨D²u ∇u/|∇u|, ∇u/|∇u|⟩ and the diffusion multiplier
//! vanishes at critical points of u at two different rates.
//!
//! The crate provides:
//! - uniform space-time grids on boxes with a ball mask, θ-scaled
//!   parabolic cylinders, and their node queries ([`grid`], [`cylinder`]);
//! - finite-difference realizations of ∇u, D²u, Δ_p^N, the degeneracy
//!   multiplier, and the full equation residual ([`operator`]);
//! - an explicit time-marching solver for the Cauchy–Dirichlet problem
//!   with CFL control ([`fdsolver`]);
//! - deterministic value iteration for the tug-of-war-with-noise dynamic
//!   programming principle ([`dpp`]);
//! - closed-form reference solutions with exact source terms ([`exact`]);
//! - oscillation, seminorm, critical-set, and growth-exponent
//!   measurements over intrinsic cylinders ([`analysis`]);
//! - closed-form barrier functions with supersolution verification
//!   ([`barriers`]);
//! - comparison-principle, Perron-bracket, and stability harnesses
//!   ([`compare`]);
//! - CSV import/export of sampled fields ([`io`]).

pub mod analysis;
pub mod barriers;
pub mod compare;
pub mod cylinder;
pub mod dpp;
pub mod exact;
pub mod fdsolver;
pub mod grid;
pub mod io;
pub mod operator;
pub mod types;

pub use cylinder::{cylinder_nodes, parabolic_boundary_nodes, IntrinsicCylinder};
pub use grid::{make_grid, GridBuilder, ScalarField, SpaceTimeField, SpaceTimeGrid};
pub use types::{CoefficientField, Exponents, Point};
