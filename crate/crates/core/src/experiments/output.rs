//! CSV and JSON writers for trajectories, limit solutions and sweep results.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::grid::eval_piecewise_linear;
use crate::limit::LimitSolution;
use crate::sgdsim::Trajectory;
use crate::{Error, Result};

/// One stored SGD coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub rep: u32,
    pub t_index: usize,
    pub s: f64,
    pub i: usize,
    pub x: f64,
    pub value: f64,
}

/// One grid value of a limit path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionRow {
    pub path_id: u32,
    pub s: f64,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseRow {
    pub rep: u32,
    pub s: f64,
    pub mse_dt: f64,
    pub mse_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeRow {
    pub rep: u32,
    pub s: f64,
    pub pe_dt: f64,
    pub pe_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationRow {
    pub rep: u32,
    pub s: f64,
    pub x: f64,
    pub u_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub rep: u32,
    pub status: &'static str,
    /// Step at which the iterate left the divergence threshold.
    pub diverged_at: Option<usize>,
}

/// Rows `i = 1..=d` for every stored state of `traj`.
pub fn trajectory_rows(rep: u32, traj: &Trajectory) -> Vec<TrajectoryRow> {
    let d = traj.d;
    traj.states()
        .iter()
        .flat_map(|(t, v)| {
            let s = *t as f64 / traj.t_param;
            (1..=d).map(move |i| TrajectoryRow {
                rep,
                t_index: *t,
                s,
                i,
                x: i as f64 / d as f64,
                value: v[i],
            })
        })
        .collect()
}

/// Rows for every stored time of `solution`; with `resolution = Some(m)` the
/// values are resampled onto an `m`-point grid.
pub fn solution_rows(path_id: u32, solution: &LimitSolution, resolution: Option<usize>) -> Vec<SolutionRow> {
    let mut rows = Vec::new();
    for (s, v) in solution.times().iter().zip(solution.values()) {
        match resolution {
            None => rows.extend((0..v.len()).map(|i| SolutionRow {
                path_id,
                s: *s,
                x: v.node(i),
                value: v.values()[i],
            })),
            Some(m) => rows.extend((1..=m).map(|i| {
                let x = i as f64 / m as f64;
                SolutionRow {
                    path_id,
                    s: *s,
                    x,
                    value: eval_piecewise_linear(v.values(), x),
                }
            })),
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| io_error(path, e.into()))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Writes a header-only file when `rows` is empty.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut f = File::create(path).map_err(|e| io_error(path, e))?;
    writeln!(f, "{}", header.join(",")).map_err(|e| io_error(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv(
            &p,
            &[MseRow {
                rep: 0,
                s: 0.5,
                mse_dt: 1.25,
                mse_limit: 1.0,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "rep,s,mse_dt,mse_limit\n0,0.5,1.25,1.0\n");
        let e = dir.path().join("e.csv");
        write_csv_with_header::<FluctuationRow>(&e, &["rep", "s", "x", "u_empirical"], &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&e).unwrap(), "rep,s,x,u_empirical\n");
    }
}
