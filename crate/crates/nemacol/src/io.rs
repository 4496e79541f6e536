//! Output writers: diagnostics time series and field snapshots, both CSV.

use std::io::Write;
use std::path::Path;

use crate::diagnostics::{DiagnosticsRow, CSV_HEADER};
use crate::grid::AnnulusGrid;
use crate::solver::SystemState;
use crate::{Error, Real};

/// Write the diagnostics time series as `timeseries.csv` content.
pub fn write_timeseries(path: &Path, rows: &[DiagnosticsRow]) -> Result<(), Error> {
    let mut out = String::with_capacity(64 + rows.len() * 256);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const SNAPSHOT_HEADER: &str = "r,theta,ux,uy,p,d1,d2,d3";

/// Write one field snapshot: one row per node, row-major in (i_r, j_theta).
pub fn write_snapshot<R: Real>(
    path: &Path,
    grid: &AnnulusGrid<R>,
    state: &SystemState<R>,
) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    for i in 0..=grid.n_r {
        for j in 0..grid.n_theta {
            let idx = grid.idx(i, j);
            let r = grid.r_inner + grid.dr * R::from_usize_lossy(i);
            let theta = grid.dtheta * R::from_usize_lossy(j);
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.to_f64_lossy(),
                theta.to_f64_lossy(),
                state.v.x[idx].to_f64_lossy(),
                state.v.y[idx].to_f64_lossy(),
                state.p.0[idx].to_f64_lossy(),
                state.d.c[0][idx].to_f64_lossy(),
                state.d.c[1][idx].to_f64_lossy(),
                state.d.c[2][idx].to_f64_lossy(),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parse one named column out of a diagnostics CSV written by
/// [`write_timeseries`]. Returns `(t, column)` pairs.
pub fn read_series_column(path: &Path, column: &str) -> Result<Vec<(f64, f64)>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Scenario(format!("{}: empty series file", path.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    let t_col = names.iter().position(|&n| n == "t").ok_or_else(|| {
        Error::Scenario(format!("{}: series file has no `t` column", path.display()))
    })?;
    let v_col = names.iter().position(|&n| n == column).ok_or_else(|| {
        Error::Scenario(format!(
            "{}: no column `{column}` (available: {})",
            path.display(),
            names.join(", ")
        ))
    })?;
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |c: usize| -> Result<f64, Error> {
            fields
                .get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Scenario(format!(
                        "{}: bad value in row {} column {}",
                        path.display(),
                        k + 2,
                        c + 1
                    ))
                })
        };
        out.push((parse(t_col)?, parse(v_col)?));
    }
    Ok(out)
}
