//! The measurement engine: oscillations over intrinsic cylinders, dyadic
//! sup sequences, parabolic Hölder seminorms, critical sets, and
//! log-log growth-exponent regression.
//!
//! All measurements are deterministic: pair subsampling for seminorms is
//! stratified by dyadic index shells, never random, so two runs (and two
//! thread counts) always agree bit for bit.

use thiserror::Error;

use crate::cylinder::{cylinder_nodes, parabolic_boundary_nodes, IntrinsicCylinder};
use crate::grid::{SpaceTimeField, SpaceTimeGrid};
use crate::operator::gradient;
use crate::types::Point;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("cylinder does not intersect the grid")]
    EmptyCylinder,
    #[error("center (x={0:?}, t={1}) is not a grid node")]
    CenterOffGrid(Point, f64),
    #[error("exponent fit needs at least 3 usable radii, got {usable} (dropped: {dropped_floor} below floor, {dropped_zero} non-positive)")]
    TooFewPoints {
        usable: usize,
        dropped_floor: usize,
        dropped_zero: usize,
    },
    #[error("radii must be strictly decreasing")]
    RadiiNotDecreasing,
    #[error("radii and oscillation lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Result of a log-log least-squares fit of oscillation against radius.
#[derive(Debug, Clone)]
pub struct ExponentFit {
    /// The reported growth exponent.
    pub slope: f64,
    /// ln of the prefactor.
    pub intercept: f64,
    pub r_squared: f64,
    pub radii_used: Vec<f64>,
    /// Resolution floor applied to the radii (radii below it alias
    /// discretization error into the slope).
    pub floor: f64,
    pub dropped_floor: usize,
    pub dropped_zero: usize,
}

/// max - min of u over the cylinder's nodes.
pub fn oscillation(u: &SpaceTimeField, cyl: &IntrinsicCylinder) -> Result<f64, AnalysisError> {
    let nodes = cylinder_nodes(&u.grid, cyl);
    if nodes.is_empty() {
        return Err(AnalysisError::EmptyCylinder);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (s, k) in nodes {
        let v = u.get(s, k);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone)]
pub struct DetrendedOsc {
    /// osc(u - l·x) for the fitted plane l.
    pub osc: f64,
    pub plane: Point,
    /// Set when the plane fit was rank-deficient and l = 0 was used.
    pub rank_deficient: bool,
}

/// Least-squares plane c + l·(x-x₀) over the cylinder's nodes; returns
/// the oscillation of u - l·x together with l. Collinear node sets fall
/// back to the raw oscillation with l = 0, flagged.
pub fn plane_detrended_osc(
    u: &SpaceTimeField,
    cyl: &IntrinsicCylinder,
) -> Result<DetrendedOsc, AnalysisError> {
    let grid = &u.grid;
    let nodes = cylinder_nodes(grid, cyl);
    if nodes.is_empty() {
        return Err(AnalysisError::EmptyCylinder);
    }
    // Normal equations for (c, l1[, l2]) in centered coordinates.
    let dim = grid.dim;
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(s, k) in &nodes {
        let x = grid.coord(s);
        let d = [1.0, x[0] - cyl.center_x[0], x[1] - cyl.center_x[1]];
        let v = u.get(s, k);
        for a in 0..=dim {
            for b in 0..=dim {
                m[a][b] += d[a] * d[b];
            }
            rhs[a] += d[a] * v;
        }
    }
    let n_unknowns = dim + 1;
    let solved = solve_small(&mut m, &mut rhs, n_unknowns);
    let (plane, rank_deficient) = match solved {
        Some(sol) => ([sol[1], if dim == 2 { sol[2] } else { 0.0 }], false),
        None => ([0.0, 0.0], true),
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(s, k) in &nodes {
        let x = grid.coord(s);
        let v = u.get(s, k) - plane[0] * x[0] - plane[1] * x[1];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(DetrendedOsc {
        osc: hi - lo,
        plane,
        rank_deficient,
    })
}

/// Gaussian elimination with partial pivoting on an n x n system; None on
/// (near-)singularity.
fn solve_small(m: &mut [[f64; 3]; 3], rhs: &mut [f64; 3], n: usize) -> Option<[f64; 3]> {
    let scale = m
        .iter()
        .take(n)
        .flat_map(|row| row.iter().take(n))
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
        if pivot <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut out = [0.0; 3];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for c in col + 1..n {
            acc -= m[col][c] * out[c];
        }
        out[col] = acc / m[col][col];
    }
    Some(out)
}

#[derive(Debug, Clone, Copy)]
pub struct DyadicEntry {
    pub j: usize,
    pub radius: f64,
    /// sup over Q_{2^{-j}, θ}(center) of u - u(center).
    pub sup: f64,
}

#[derive(Debug, Clone)]
pub struct DyadicSequence {
    pub entries: Vec<DyadicEntry>,
    /// Whether u(center) is the minimum over the largest cylinder. When
    /// it is, each entry equals sup(u - u(center)); when it is not, the
    /// entries are still the cylinder oscillations, but the sup reading
    /// no longer applies and the values are flagged as signed
    /// oscillations.
    pub center_is_min: bool,
}

/// S_j for j = 0..j_max, stopping at the 4h resolution floor: the
/// oscillation of u over Q_{2^{-j}, θ}(center), which equals
/// sup(u - u(center)) whenever the center value is the cylinder minimum
/// (verified and reported in `center_is_min`).
pub fn dyadic_osc_sequence(
    u: &SpaceTimeField,
    center_x: Point,
    center_t: f64,
    theta: f64,
    j_max: usize,
) -> Result<DyadicSequence, AnalysisError> {
    let grid = &u.grid;
    let (s0, k0) = match (grid.node_at(center_x), grid.time_index(center_t)) {
        (Some(s), Some(k)) => (s, k),
        _ => return Err(AnalysisError::CenterOffGrid(center_x, center_t)),
    };
    let base = u.get(s0, k0);
    let mut entries = Vec::new();
    let mut center_is_min = true;
    for j in 0..=j_max {
        let radius = (0.5f64).powi(j as i32);
        if radius < 4.0 * grid.h {
            break;
        }
        let cyl = IntrinsicCylinder::new(center_x, center_t, radius, theta);
        let nodes = cylinder_nodes(grid, &cyl);
        if nodes.is_empty() {
            break;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (s, k) in nodes {
            let v = u.get(s, k);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if j == 0 && base > lo + 1e-12 * (1.0 + base.abs()) {
            center_is_min = false;
        }
        entries.push(DyadicEntry {
            j,
            radius,
            sup: hi - lo,
        });
    }
    if entries.is_empty() {
        return Err(AnalysisError::EmptyCylinder);
    }
    Ok(DyadicSequence {
        entries,
        center_is_min,
    })
}

/// Least squares of ln(osc) on ln(r). Radii must be strictly decreasing;
/// radii below `floor` and non-positive oscillations are dropped (and
/// counted); at least 3 usable points are required.
pub fn fit_growth_exponent(
    radii: &[f64],
    oscs: &[f64],
    floor: f64,
) -> Result<ExponentFit, AnalysisError> {
    if radii.len() != oscs.len() {
        return Err(AnalysisError::LengthMismatch(radii.len(), oscs.len()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(AnalysisError::RadiiNotDecreasing);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = Vec::new();
    let mut dropped_floor = 0usize;
    let mut dropped_zero = 0usize;
    for (&r, &o) in radii.iter().zip(oscs) {
        if r < floor * (1.0 - 1e-12) {
            dropped_floor += 1;
            continue;
        }
        if !(o > 0.0) {
            dropped_zero += 1;
            continue;
        }
        xs.push(r.ln());
        ys.push(o.ln());
        used.push(r);
    }
    let n = xs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints {
            usable: n,
            dropped_floor,
            dropped_zero,
        });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        radii_used: used,
        floor,
        dropped_floor,
        dropped_zero,
    })
}

/// Deterministic pair enumeration: all pairs when their count fits the
/// budget, otherwise bases on a strided lattice paired across dyadic
/// index shells in space and time.
fn for_each_pair(
    grid: &SpaceTimeGrid,
    spatial_ok: &dyn Fn(usize) -> bool,
    budget: usize,
    visit: &mut dyn FnMut((usize, usize), (usize, usize)),
) {
    let ns = grid.n_space();
    let nt = grid.n_time();
    let nodes: Vec<(usize, usize)> = (0..nt)
        .flat_map(|k| (0..ns).filter(|&s| spatial_ok(s)).map(move |s| (s, k)))
        .collect();
    let n = nodes.len();
    if n < 2 {
        return;
    }
    if n * (n - 1) / 2 <= budget {
        for a in 0..n {
            for b in a + 1..n {
                visit(nodes[a], nodes[b]);
            }
        }
        return;
    }

    // Dyadic shells: offsets double along each axis and in time.
    let na = grid.nodes_per_axis();
    let rows = ns / na;
    let mut offsets: Vec<(isize, isize, isize)> = Vec::new();
    let mut ds = Vec::new();
    let mut d = 1usize;
    while d < na {
        ds.push(d as isize);
        d *= 2;
    }
    let mut es = vec![0isize];
    let mut e = 1usize;
    while e < nt {
        es.push(e as isize);
        e *= 2;
    }
    for &e in &es {
        if e > 0 {
            offsets.push((0, 0, e));
        }
        for &d in &ds {
            offsets.push((d, 0, e));
            if grid.dim == 2 {
                offsets.push((0, d, e));
                offsets.push((d, d, e));
                offsets.push((d, -d, e));
            }
        }
    }
    let work = n.saturating_mul(offsets.len());
    let stride = (work / budget.max(1)).max(1);
    let total = ns * nt;
    let mut idx = 0usize;
    while idx < total {
        let (s, k) = (idx % ns, idx / ns);
        if spatial_ok(s) {
            let (i, j) = grid.unflat(s);
            for &(di, dj, dk) in &offsets {
                let (pi, pj, pk) = (i as isize + di, j as isize + dj, k as isize + dk);
                if pi < 0 || pj < 0 || pk < 0 {
                    continue;
                }
                let (pi, pj, pk) = (pi as usize, pj as usize, pk as usize);
                if pi >= na || pj >= rows || pk >= nt {
                    continue;
                }
                let ps = grid.flat(pi, pj);
                if spatial_ok(ps) {
                    visit((s, k), (ps, pk));
                }
            }
        }
        idx += stride;
    }
}

/// Parabolic Hölder seminorm sup |u(y,s)−u(x,t)| / (|x−y|^α + |t−s|^(α/2))
/// over a deterministic subsample of node pairs (all pairs when they fit
/// the budget).
pub fn holder_seminorm(u: &SpaceTimeField, alpha: f64, budget: usize) -> f64 {
    let grid = u.grid.clone();
    let mut sup: f64 = 0.0;
    for_each_pair(
        &grid,
        &|s| grid.in_mask(s),
        budget,
        &mut |(sa, ka), (sb, kb)| {
            let xa = grid.coord(sa);
            let xb = grid.coord(sb);
            let dx = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
            let dt = (grid.t(ka) - grid.t(kb)).abs();
            let den = dx.powf(alpha) + dt.powf(0.5 * alpha);
            if den > 0.0 {
                sup = sup.max((u.get(sa, ka) - u.get(sb, kb)).abs() / den);
            }
        },
    );
    sup
}

/// Purely temporal seminorm sup |u(x,t)−u(x,s)| / |t−s|^exponent over
/// same-node pairs.
pub fn time_holder_seminorm(u: &SpaceTimeField, exponent: f64, budget: usize) -> f64 {
    let grid = &u.grid;
    let nt = grid.n_time();
    let masked: Vec<usize> = grid.masked_nodes().collect();
    if nt < 2 || masked.is_empty() {
        return 0.0;
    }
    let pairs_per_node = nt * (nt - 1) / 2;
    let stride = (masked.len().saturating_mul(pairs_per_node) / budget.max(1)).max(1);
    let mut sup: f64 = 0.0;
    let mut idx = 0usize;
    while idx < masked.len() {
        let s = masked[idx];
        for a in 0..nt {
            for b in a + 1..nt {
                let dt = (grid.t(a) - grid.t(b)).abs();
                if dt > 0.0 {
                    sup = sup.max((u.get(s, a) - u.get(s, b)).abs() / dt.powf(exponent));
                }
            }
        }
        idx += stride;
    }
    sup
}

/// The Hölder quotient applied to the finite-difference spatial gradient
/// (interior nodes only): sup |∇u(x,t)−∇u(y,s)| / (|x−y|^α + |t−s|^(α/2)).
pub fn gradient_holder_seminorm(u: &SpaceTimeField, alpha: f64, budget: usize) -> f64 {
    let grid = u.grid.clone();
    let ns = grid.n_space();
    let nt = grid.n_time();
    // Precompute the gradient field once.
    let mut grads = vec![[0.0f64; 2]; ns * nt];
    for k in 0..nt {
        let slice = u.slice(k);
        for s in 0..ns {
            if grid.is_update_interior(s) {
                grads[k * ns + s] = gradient(&grid, slice, s).expect("interior gradient");
            }
        }
    }
    let mut sup: f64 = 0.0;
    for_each_pair(
        &grid,
        &|s| grid.is_update_interior(s),
        budget,
        &mut |(sa, ka), (sb, kb)| {
            let ga = grads[ka * ns + sa];
            let gb = grads[kb * ns + sb];
            let num = ((ga[0] - gb[0]).powi(2) + (ga[1] - gb[1]).powi(2)).sqrt();
            let xa = grid.coord(sa);
            let xb = grid.coord(sb);
            let dx = ((xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2)).sqrt();
            let dt = (grid.t(ka) - grid.t(kb)).abs();
            let den = dx.powf(alpha) + dt.powf(0.5 * alpha);
            if den > 0.0 {
                sup = sup.max(num / den);
            }
        },
    );
    sup
}

/// Nodes of slice k where |∇u| <= tol: the discrete critical set.
pub fn critical_set(u: &SpaceTimeField, k: usize, tol: f64) -> Vec<usize> {
    let grid = &u.grid;
    let slice = u.slice(k);
    grid.masked_nodes()
        .filter(|&s| {
            gradient(grid, slice, s)
                .map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt() <= tol)
                .unwrap_or(false)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NondegProfile {
    /// (radius, sup over the parabolic boundary of u - u(center)).
    pub rows: Vec<(f64, f64)>,
    /// Whether the center is extremal over its immediate backward
    /// space-time neighborhood; measurement proceeds regardless.
    pub center_extremal: bool,
    pub skipped_radii: usize,
}

/// Boundary suprema of u - u(center) over ∂_par Q_{r,θ}(center) for each
/// requested radius, the raw material for the lower-growth exponent fit.
pub fn nondegeneracy_profile(
    u: &SpaceTimeField,
    center_x: Point,
    center_t: f64,
    theta: f64,
    radii: &[f64],
) -> Result<NondegProfile, AnalysisError> {
    let grid = &u.grid;
    let (s0, k0) = match (grid.node_at(center_x), grid.time_index(center_t)) {
        (Some(s), Some(k)) => (s, k),
        _ => return Err(AnalysisError::CenterOffGrid(center_x, center_t)),
    };
    let base = u.get(s0, k0);

    // Spatial extremality check against the same-slice grid neighborhood.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let (i0, j0) = grid.unflat(s0);
    for di in -1isize..=1 {
        for dj in -1isize..=1 {
            if (di == 0 && dj == 0) || (grid.dim == 1 && dj != 0) {
                continue;
            }
            let (ni, nj) = (i0 as isize + di, j0 as isize + dj);
            if ni < 0 || nj < 0 || ni >= grid.nodes_per_axis() as isize {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            if grid.flat(ni, nj) >= grid.n_space() {
                continue;
            }
            let s = grid.flat(ni, nj);
            if grid.in_mask(s) {
                let v = u.get(s, k0);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let tol = 1e-12 * (1.0 + base.abs());
    let center_extremal = base <= lo + tol || base >= hi - tol;

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for &r in radii {
        let cyl = IntrinsicCylinder::new(center_x, center_t, r, theta);
        let boundary = parabolic_boundary_nodes(grid, &cyl);
        if boundary.is_empty() {
            skipped += 1;
            continue;
        }
        let sup = boundary
            .into_iter()
            .map(|(s, k)| u.get(s, k) - base)
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push((r, sup));
    }
    if rows.is_empty() {
        return Err(AnalysisError::EmptyCylinder);
    }
    Ok(NondegProfile {
        rows,
        center_extremal,
        skipped_radii: skipped,
    })
}
