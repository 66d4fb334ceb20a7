//! Explicit time-marching solver for the Cauchy–Dirichlet problem
//!
//!   ∂ₜu = H(x,t,∇u)·Δ_p^N u + f  in B_R × (t_begin, t_end],
//!   u = g                        on the parabolic boundary.
//!
//! Forward Euler on the regularized operator. The step size is governed
//! by a CFL bound built from an a-priori gradient cap; the realized
//! gradient is measured every substep and the solve aborts if it escapes
//! the cap instead of silently destabilizing.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{GridError, SpaceTimeField, SpaceTimeGrid};
use crate::operator::{
    degeneracy_h, gradient, hessian, normalized_p_laplacian, pow_deg, OperatorError,
    RegularizationPolicy,
};
use crate::types::{CoefficientField, Exponents, Point};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("time step {got} exceeds the stable step {required} and auto-clamping is disabled")]
    CflViolation { required: f64, got: f64 },
    #[error(
        "realized gradient magnitude {grad} at node {node} exceeds the CFL cap {cap}; \
         the step bound is no longer valid"
    )]
    CflAudit { node: usize, grad: f64, cap: f64 },
    #[error("non-finite value at node {node} (x={x:?}, t={t}); local |grad u| = {grad_mag}")]
    NonFinite {
        node: usize,
        x: Point,
        t: f64,
        grad_mag: f64,
    },
    #[error("field magnitude {max_abs} exceeded the divergence cap {cap} at t={t}")]
    Divergence { max_abs: f64, cap: f64, t: f64 },
    #[error("substep budget exhausted: more than {limit} steps required")]
    MaxSteps { limit: usize },
}

/// Solver knobs. `grad_cap` is the a-priori bound on |∇u| entering the
/// CFL bound; with `adaptive_grad_cap` it is refreshed each slice from
/// the computed field (never below the configured value).
#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub reg: RegularizationPolicy,
    pub cfl_safety: f64,
    pub max_steps: usize,
    pub grad_cap: f64,
    pub auto_clamp: bool,
    pub adaptive_grad_cap: bool,
    pub divergence_cap: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            reg: RegularizationPolicy::fixed(1e-6),
            cfl_safety: 0.9,
            max_steps: 50_000_000,
            grad_cap: 1.0,
            auto_clamp: true,
            adaptive_grad_cap: true,
            divergence_cap: 1e8,
        }
    }
}

impl SolveConfig {
    /// Default gradient cap for Dirichlet data g: 2·Lip(g) + 1, with the
    /// Lipschitz constant estimated on the given grid.
    pub fn default_grad_cap(
        grid: &SpaceTimeGrid,
        g: impl Fn(Point, f64) -> f64,
    ) -> f64 {
        let mut lip: f64 = 0.0;
        for k in 0..grid.n_time() {
            let t = grid.t(k);
            for s in grid.masked_nodes() {
                let v = g(grid.coord(s), t);
                for axis in 0..grid.dim {
                    if let Some(nb) = grid.neighbor(s, axis, 1).filter(|&n| grid.in_mask(n)) {
                        lip = lip.max((g(grid.coord(nb), t) - v).abs() / grid.h);
                    }
                }
            }
        }
        2.0 * lip + 1.0
    }
}

fn h_max_for_cap(exps: &Exponents, a_plus: f64, cap: f64, eps: f64) -> f64 {
    let m = (cap * cap + eps * eps).sqrt();
    pow_deg(m, exps.p_tilde) + a_plus * pow_deg(m, exps.q_tilde)
}

/// Stable explicit step: dt = safety·h² / (2·dim·H_max·max{1, p−1}) with
/// H_max = (cap²+ε²)^(p̃/2) + a⁺·(cap²+ε²)^(q̃/2).
pub fn cfl_dt(dim: usize, h: f64, exps: &Exponents, a_plus: f64, config: &SolveConfig) -> f64 {
    let h_max = h_max_for_cap(exps, a_plus, config.grad_cap, config.reg.epsilon);
    config.cfl_safety * h * h
        / (2.0 * dim as f64 * h_max * (exps.p - 1.0).max(1.0))
}

/// One forward-Euler step of length `dt` from time `t`. Interior nodes
/// get u + dt·(H·Δ_p^N u + f); masked boundary nodes are overwritten with
/// g at t+dt; nodes outside the mask are left at zero.
///
/// Returns the next slice and the max |∇u| realized over the interior of
/// the input slice.
pub fn step(
    grid: &SpaceTimeGrid,
    u: &[f64],
    t: f64,
    dt: f64,
    g: &(impl Fn(Point, f64) -> f64 + Sync),
    f: &(impl Fn(Point, f64) -> f64 + Sync),
    coeff: &CoefficientField,
    exps: &Exponents,
    config: &SolveConfig,
) -> Result<(Vec<f64>, f64), SolveError> {
    let ns = grid.n_space();
    let evaluated: Vec<(f64, f64)> = (0..ns)
        .into_par_iter()
        .map(|s| {
            if grid.is_update_interior(s) {
                let grad = match gradient(grid, u, s) {
                    Ok(gr) => gr,
                    Err(_) => return (f64::NAN, 0.0),
                };
                let d2 = match hessian(grid, u, s) {
                    Ok(d) => d,
                    Err(_) => return (f64::NAN, 0.0),
                };
                let lap = match normalized_p_laplacian(&d2, grad, exps.p, config.reg) {
                    Ok(l) => l,
                    Err(_) => return (f64::NAN, 0.0),
                };
                let x = grid.coord(s);
                let mult = degeneracy_h(x, t, grad, coeff, exps, config.reg);
                let value = u[s] + dt * (mult * lap + f(x, t));
                let gm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
                (value, gm)
            } else if grid.in_mask(s) {
                (g(grid.coord(s), t + dt), 0.0)
            } else {
                (0.0, 0.0)
            }
        })
        .collect();

    let mut next = Vec::with_capacity(ns);
    let mut max_grad: f64 = 0.0;
    for (s, &(value, gm)) in evaluated.iter().enumerate() {
        if !value.is_finite() {
            let grad_mag = gradient(grid, u, s).map(|gr| (gr[0] * gr[0] + gr[1] * gr[1]).sqrt());
            return Err(SolveError::NonFinite {
                node: s,
                x: grid.coord(s),
                t,
                grad_mag: grad_mag.unwrap_or(f64::NAN),
            });
        }
        next.push(value);
        max_grad = max_grad.max(gm);
    }
    Ok((next, max_grad))
}

/// Diagnostics recorded during a solve, for post-hoc CFL auditing.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub achieved_max_grad: f64,
    pub substeps: usize,
    pub min_substep_dt: f64,
    pub clamped: bool,
    pub final_grad_cap: f64,
}

/// March g-compatible data from t_begin to t_end, storing every grid
/// slice. Substeps finer than the grid dt are inserted whenever the CFL
/// bound requires them (with `auto_clamp`; otherwise that is an error).
/// The result is deterministic given inputs.
pub fn solve_cauchy_dirichlet(
    g: &(impl Fn(Point, f64) -> f64 + Sync),
    f: &(impl Fn(Point, f64) -> f64 + Sync),
    coeff: &CoefficientField,
    exps: &Exponents,
    grid: Arc<SpaceTimeGrid>,
    config: &SolveConfig,
) -> Result<(SpaceTimeField, SolveReport), SolveError> {
    let ns = grid.n_space();
    let nt = grid.n_time();
    let mut values = Vec::with_capacity(ns * nt);

    let mut slice: Vec<f64> = (0..ns)
        .map(|s| {
            if grid.in_mask(s) {
                g(grid.coord(s), grid.t_begin)
            } else {
                0.0
            }
        })
        .collect();
    for (s, &v) in slice.iter().enumerate() {
        if !v.is_finite() {
            return Err(SolveError::NonFinite {
                node: s,
                x: grid.coord(s),
                t: grid.t_begin,
                grad_mag: f64::NAN,
            });
        }
    }
    values.extend_from_slice(&slice);

    let mut report = SolveReport {
        achieved_max_grad: 0.0,
        substeps: 0,
        min_substep_dt: f64::INFINITY,
        clamped: false,
        final_grad_cap: config.grad_cap,
    };

    let mut cap = config.grad_cap;
    for k in 1..nt {
        // Measure the field before stepping; refresh the cap if allowed.
        let realized = max_interior_grad(&grid, &slice);
        report.achieved_max_grad = report.achieved_max_grad.max(realized);
        if config.adaptive_grad_cap {
            cap = cap.max(1.25 * realized).max(config.grad_cap);
        }
        let mut cfg_cap = *config;
        cfg_cap.grad_cap = cap;
        let stable = cfl_dt(grid.dim, grid.h, exps, coeff.a_plus, &cfg_cap);

        let m = if grid.dt <= stable * (1.0 + 1e-12) {
            1
        } else if config.auto_clamp {
            report.clamped = true;
            (grid.dt / stable).ceil() as usize
        } else {
            return Err(SolveError::CflViolation {
                required: stable,
                got: grid.dt,
            });
        };
        report.substeps += m;
        if report.substeps > config.max_steps {
            return Err(SolveError::MaxSteps {
                limit: config.max_steps,
            });
        }
        let delta = grid.dt / m as f64;
        report.min_substep_dt = report.min_substep_dt.min(delta);

        let t_base = grid.t(k - 1);
        for j in 0..m {
            let t0 = t_base + j as f64 * delta;
            let (next, max_grad) = step(&grid, &slice, t0, delta, g, f, coeff, exps, &cfg_cap)?;
            report.achieved_max_grad = report.achieved_max_grad.max(max_grad);
            if max_grad > cap {
                let worst = worst_grad_node(&grid, &slice);
                return Err(SolveError::CflAudit {
                    node: worst,
                    grad: max_grad,
                    cap,
                });
            }
            slice = next;
        }

        let max_abs = slice.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if max_abs > config.divergence_cap {
            return Err(SolveError::Divergence {
                max_abs,
                cap: config.divergence_cap,
                t: grid.t(k),
            });
        }
        values.extend_from_slice(&slice);
    }
    report.final_grad_cap = cap;

    let field = SpaceTimeField::new(grid, values)?;
    Ok((field, report))
}

fn max_interior_grad(grid: &SpaceTimeGrid, slice: &[f64]) -> f64 {
    (0..grid.n_space())
        .into_par_iter()
        .map(|s| {
            if grid.is_update_interior(s) {
                match gradient(grid, slice, s) {
                    Ok(gr) => (gr[0] * gr[0] + gr[1] * gr[1]).sqrt(),
                    Err(_) => 0.0,
                }
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max)
}

fn worst_grad_node(grid: &SpaceTimeGrid, slice: &[f64]) -> usize {
    let mut worst = 0;
    let mut best: f64 = -1.0;
    for s in 0..grid.n_space() {
        if grid.is_update_interior(s) {
            if let Ok(gr) = gradient(grid, slice, s) {
                let gm = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
                if gm > best {
                    best = gm;
                    worst = s;
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{affine_solution, heat_reference, sharp_example};
    use crate::grid::make_grid;

    fn config_for(h: f64, grad_cap: f64) -> SolveConfig {
        SolveConfig {
            reg: RegularizationPolicy::auto_for(h),
            grad_cap,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn cfl_formula_arithmetic() {
        // dim=1, h=0.1, p=2, p_tilde=q_tilde=0, a+=1, safety=1:
        // H_max = 2 and dt = 0.01/(2*1*2*1) = 0.0025.
        let exps = Exponents::new(2.0, 0.0, 0.0).unwrap();
        let cfg = SolveConfig {
            cfl_safety: 1.0,
            grad_cap: 1.0,
            reg: RegularizationPolicy::zero(),
            ..SolveConfig::default()
        };
        let dt = cfl_dt(1, 0.1, &exps, 1.0, &cfg);
        assert!((dt - 0.0025).abs() < 1e-15);

        // a+ -> 0 limit: dt -> safety*h^2/(2*dim*max(1,p-1)).
        let dt0 = cfl_dt(1, 0.1, &exps, 1e-12, &cfg);
        assert!((dt0 - 0.005).abs() < 1e-12);
    }

    #[test]
    fn cfl_shrinks_with_grad_cap() {
        let exps = Exponents::new(4.0, 2.0, 2.0).unwrap();
        let mk = |cap: f64| SolveConfig {
            cfl_safety: 1.0,
            grad_cap: cap,
            reg: RegularizationPolicy::zero(),
            ..SolveConfig::default()
        };
        let d1 = cfl_dt(2, 0.1, &exps, 1.0, &mk(1.0));
        let d2 = cfl_dt(2, 0.1, &exps, 1.0, &mk(2.0));
        assert!((d1 / d2 - 4.0).abs() < 1e-12, "doubling the cap quarters dt");
    }

    #[test]
    fn step_is_stationary_on_affine_data() {
        let grid = Arc::new(make_grid(2, 1.0, 0.25, 0.001, -1.0, 0.0).unwrap());
        let r = affine_solution([1.5, -0.5], 0.2);
        let u: Vec<f64> = (0..grid.n_space())
            .map(|s| (r.u)(grid.coord(s), -1.0))
            .collect();
        let cfg = config_for(0.25, 3.0);
        let g = |x: Point, t: f64| (r.u)(x, t);
        let f = |x: Point, t: f64| (r.f)(x, t);
        let (next, max_grad) =
            step(&grid, &u, -1.0, 0.001, &g, &f, &r.coeff, &r.exps, &cfg).unwrap();
        for (s, (&a, &b)) in u.iter().zip(&next).enumerate() {
            if grid.in_mask(s) {
                assert!((a - b).abs() < 1e-13, "node {s}: {a} vs {b}");
            }
        }
        let expected = (1.5f64 * 1.5 + 0.5 * 0.5).sqrt();
        assert!((max_grad - expected).abs() < 1e-12);
    }

    #[test]
    fn step_constant_source_adds_dt() {
        let grid = Arc::new(make_grid(1, 1.0, 0.25, 0.001, 0.0, 1.0).unwrap());
        let u = vec![0.0; grid.n_space()];
        let cfg = config_for(0.25, 1.0);
        let g = |_: Point, _: f64| 0.0;
        let f = |_: Point, _: f64| 1.0;
        let coeff = CoefficientField::constant(1.0).unwrap();
        let exps = Exponents::new(3.0, 1.0, 2.0).unwrap();
        let (next, _) = step(&grid, &u, 0.0, 0.001, &g, &f, &coeff, &exps, &cfg).unwrap();
        for s in 0..grid.n_space() {
            if grid.is_update_interior(s) {
                assert!((next[s] - 0.001).abs() < 1e-16);
            } else {
                assert_eq!(next[s], 0.0);
            }
        }
    }

    #[test]
    fn solve_reproduces_affine_exactly() {
        let grid = Arc::new(make_grid(2, 1.0, 0.25, 0.05, -1.0, 0.0).unwrap());
        let r = affine_solution([1.0, 0.5], -0.3);
        let cfg = config_for(0.25, 3.0);
        let g = |x: Point, t: f64| (r.u)(x, t);
        let f = |x: Point, t: f64| (r.f)(x, t);
        let (sol, report) =
            solve_cauchy_dirichlet(&g, &f, &r.coeff, &r.exps, grid.clone(), &cfg).unwrap();
        let exact = r.sample_u(grid).unwrap();
        let err = sol.sup_diff_masked(&exact);
        assert!(err <= 1e-12, "affine solve error {err}");
        assert!(report.achieved_max_grad > 1.0);
    }

    #[test]
    fn solve_heat_reference_refines() {
        let r = heat_reference([1.0, 0.0]);
        let g = |x: Point, t: f64| (r.u)(x, t);
        let f = |_: Point, _: f64| 0.0;
        let mut errors = Vec::new();
        for lvl in 0..3 {
            let h = 0.1 / f64::powi(2.0, lvl);
            let grid = Arc::new(make_grid(1, 1.0, h, 0.01, -0.5, 0.0).unwrap());
            let cfg = config_for(h, 2.0);
            let (sol, _) =
                solve_cauchy_dirichlet(&g, &f, &r.coeff, &r.exps, grid.clone(), &cfg).unwrap();
            let exact = r.sample_u(grid).unwrap();
            errors.push(sol.sup_diff_masked(&exact));
        }
        for w in errors.windows(2) {
            assert!(w[1] < w[0] / 1.5, "heat errors not refining: {errors:?}");
        }
        assert!(errors[2] < 5e-3, "finest error too large: {errors:?}");
    }

    #[test]
    fn constant_shift_invariance() {
        let r = heat_reference([1.0, 0.0]);
        let shift = 4.0;
        let g0 = |x: Point, t: f64| (r.u)(x, t);
        let g1 = |x: Point, t: f64| (r.u)(x, t) + shift;
        let f = |_: Point, _: f64| 0.0;
        let grid = Arc::new(make_grid(1, 1.0, 0.05, 0.01, -0.5, 0.0).unwrap());
        let cfg = config_for(0.05, 2.0);
        let (a, _) = solve_cauchy_dirichlet(&g0, &f, &r.coeff, &r.exps, grid.clone(), &cfg).unwrap();
        let (b, _) = solve_cauchy_dirichlet(&g1, &f, &r.coeff, &r.exps, grid.clone(), &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..grid.n_time() {
            for s in grid.masked_nodes() {
                worst = worst.max((b.get(s, k) - a.get(s, k) - shift).abs());
            }
        }
        assert!(worst < 1e-12, "shift not preserved: {worst}");
    }

    #[test]
    fn monotone_in_time_data_propagation() {
        // Zero data with f = 1: the initial slice is a subsolution and the
        // lateral data is nondecreasing, so the discrete solution must be
        // nondecreasing in time up to round-off.
        let grid = Arc::new(make_grid(1, 1.0, 0.1, 0.01, 0.0, 0.5).unwrap());
        let g = |_: Point, _: f64| 0.0;
        let f = |_: Point, _: f64| 1.0;
        let coeff = CoefficientField::constant(1.0).unwrap();
        let exps = Exponents::new(3.0, 1.0, 2.0).unwrap();
        let cfg = config_for(0.1, 2.0);
        let (sol, _) = solve_cauchy_dirichlet(&g, &f, &coeff, &exps, grid.clone(), &cfg).unwrap();
        for k in 1..grid.n_time() {
            for s in grid.masked_nodes() {
                let dt_u = sol.get(s, k) - sol.get(s, k - 1);
                assert!(dt_u >= -1e-12, "slice {k}, node {s}: dt u = {dt_u}");
            }
        }
    }

    #[test]
    fn cfl_violation_without_auto_clamp() {
        let grid = Arc::new(make_grid(1, 1.0, 0.05, 0.1, 0.0, 0.5).unwrap());
        let coeff = CoefficientField::constant(1.0).unwrap();
        let exps = Exponents::new(3.0, 1.0, 2.0).unwrap();
        let cfg = SolveConfig {
            auto_clamp: false,
            ..config_for(0.05, 2.0)
        };
        let g = |_: Point, _: f64| 0.0;
        let f = |_: Point, _: f64| 0.0;
        let err = solve_cauchy_dirichlet(&g, &f, &coeff, &exps, grid, &cfg).unwrap_err();
        assert!(matches!(err, SolveError::CflViolation { .. }), "{err}");
    }

    #[test]
    fn divergence_reported_with_time() {
        // Spatially uniform growth u = 100 t: no gradients, so the CFL
        // audit stays quiet and the magnitude cap is what trips.
        let grid = Arc::new(make_grid(1, 1.0, 0.1, 0.05, 0.0, 1.0).unwrap());
        let coeff = CoefficientField::constant(1.0).unwrap();
        let exps = Exponents::new(3.0, 0.0, 0.0).unwrap();
        let cfg = SolveConfig {
            divergence_cap: 10.0,
            ..config_for(0.1, 2.0)
        };
        let g = |_: Point, t: f64| 100.0 * t;
        let f = |_: Point, _: f64| 100.0;
        let err = solve_cauchy_dirichlet(&g, &f, &coeff, &exps, grid, &cfg).unwrap_err();
        assert!(matches!(err, SolveError::Divergence { .. }), "{err}");
    }

    #[test]
    fn single_step_tracks_sharp_example() {
        // One explicit step from an exact slice stays within
        // O(dt^2 + dt*(h+eps)) of the exact solution away from the cusp.
        let r = sharp_example(2, 3.0, 2.0).unwrap();
        let h = 1.0 / 32.0;
        let dt = 1e-4;
        let grid = Arc::new(make_grid(2, 0.5, h, dt, -0.01, 0.0).unwrap());
        let cfg = config_for(h, 3.0);
        let t0 = -0.01;
        let u0: Vec<f64> = (0..grid.n_space())
            .map(|s| (r.u)(grid.coord(s), t0))
            .collect();
        let g = |x: Point, t: f64| (r.u)(x, t);
        let f = |x: Point, t: f64| (r.f)(x, t);
        let (u1, _) = step(&grid, &u0, t0, dt, &g, &f, &r.coeff, &r.exps, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..grid.n_space() {
            if grid.is_update_interior(s) {
                let x = grid.coord(s);
                if (x[0] * x[0] + x[1] * x[1]).sqrt() >= 4.0 * h {
                    worst = worst.max((u1[s] - (r.u)(x, t0 + dt)).abs());
                }
            }
        }
        let bound = dt * (20.0 * (h + cfg.reg.epsilon) + 10.0 * dt);
        assert!(worst <= bound, "one-step error {worst} vs bound {bound}");
    }
}
