//! CSV import/export of sampled fields and measurement tables.
//!
//! Field layout: header row, spatial coordinates first, then t, then the
//! value column; rows ordered slice-major then by flat node index; only
//! domain (masked) nodes are written. Numbers carry 17 significant
//! digits so a round trip is bit-exact.

use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{GridError, SpaceTimeField, SpaceTimeGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {want} columns, found {got}")]
    ColumnCount { line: usize, want: usize, got: usize },
    #[error("line {line}: cannot parse number: {token}")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: ({x}, {y}, {t}) is not a grid node")]
    OffGrid { line: usize, x: f64, y: f64, t: f64 },
    #[error("header {got:?} does not match expected {want:?}")]
    BadHeader { got: String, want: String },
    #[error("field is missing {0} domain node values")]
    Incomplete(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_for(dim: usize) -> &'static str {
    if dim == 1 {
        "x,t,u"
    } else {
        "x,y,t,u"
    }
}

/// Write the field's domain nodes as CSV.
pub fn write_field_csv<W: Write>(w: &mut W, field: &SpaceTimeField) -> Result<(), IoError> {
    let grid = &field.grid;
    writeln!(w, "{}", header_for(grid.dim))?;
    for k in 0..grid.n_time() {
        let t = grid.t(k);
        for s in grid.masked_nodes() {
            let x = grid.coord(s);
            if grid.dim == 1 {
                writeln!(w, "{},{},{}", fmt_f64(x[0]), fmt_f64(t), fmt_f64(field.get(s, k)))?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(x[0]),
                    fmt_f64(x[1]),
                    fmt_f64(t),
                    fmt_f64(field.get(s, k))
                )?;
            }
        }
    }
    Ok(())
}

/// Read a field written by [`write_field_csv`] back onto `grid`. Every
/// domain node of every slice must be present; rows must land exactly on
/// grid nodes. Off-mask values are zero.
pub fn read_field_csv<R: BufRead>(
    r: R,
    grid: Arc<SpaceTimeGrid>,
) -> Result<SpaceTimeField, IoError> {
    let ns = grid.n_space();
    let want_cols = grid.dim + 2;
    let mut values = vec![0.0f64; ns * grid.n_time()];
    let mut seen = vec![false; ns * grid.n_time()];
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .unwrap_or_default();
    if header.trim() != header_for(grid.dim) {
        return Err(IoError::BadHeader {
            got: header,
            want: header_for(grid.dim).to_string(),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != want_cols {
            return Err(IoError::ColumnCount {
                line: line_no,
                want: want_cols,
                got: cols.len(),
            });
        }
        let mut nums = [0.0f64; 4];
        for (slot, token) in nums.iter_mut().zip(&cols) {
            *slot = token.trim().parse().map_err(|_| IoError::BadNumber {
                line: line_no,
                token: token.to_string(),
            })?;
        }
        let (x, y, t, u) = if grid.dim == 1 {
            (nums[0], 0.0, nums[1], nums[2])
        } else {
            (nums[0], nums[1], nums[2], nums[3])
        };
        let s = grid.node_at([x, y]);
        let k = grid.time_index(t);
        match (s, k) {
            (Some(s), Some(k)) => {
                values[k * ns + s] = u;
                seen[k * ns + s] = true;
            }
            _ => return Err(IoError::OffGrid { line: line_no, x, y, t }),
        }
    }
    let missing = (0..grid.n_time())
        .flat_map(|k| grid.masked_nodes().map(move |s| (s, k)))
        .filter(|&(s, k)| !seen[k * ns + s])
        .count();
    if missing > 0 {
        return Err(IoError::Incomplete(missing));
    }
    Ok(SpaceTimeField::new(grid, values)?)
}

/// Per-radius measurement table: r, osc, detrended_osc, boundary_sup.
pub fn write_radius_csv<W: Write>(
    w: &mut W,
    rows: &[(f64, f64, f64, f64)],
) -> Result<(), IoError> {
    writeln!(w, "r,osc,detrended_osc,boundary_sup")?;
    for &(r, osc, det, sup) in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r),
            fmt_f64(osc),
            fmt_f64(det),
            fmt_f64(sup)
        )?;
    }
    Ok(())
}
