//! CSV output: per-iteration records and convergence sweeps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::RunError;

/// One row of `records.csv`. Empty fields mean "not applicable".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub t: f64,
    pub sw2_nu: f64,
    pub sw2_mu: f64,
    pub map_rmse: Option<f64>,
    pub sinkhorn_div: f64,
    pub mmd: f64,
    pub energy_dist: f64,
    pub ess: f64,
    pub tv_to_oracle: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub delta: f64,
    pub error: f64,
    /// Error at the previous (coarser) step size divided by this one.
    pub ratio: Option<f64>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> RunError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => RunError::Io(io),
            _ => unreachable!(),
        }
    } else {
        RunError::Format(e.to_string())
    }
}
