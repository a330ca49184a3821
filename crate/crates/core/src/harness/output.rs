//! Files written by runs and sweeps.
//!
//! `diagnostics.csv` has one row per sample, with columns
//! [`DiagnosticsRecord::COLUMNS`] followed by one `vq_<q>` column per
//! sampled exponent. Empty cells mean "not available at this sample"
//! (identity residuals at `t = 0`). Snapshots use the field CSV format.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::solver::SimState;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_diagnostics(BufWriter::new(file), records)
}

pub fn write_diagnostics(w: impl Write, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    if let Some(first) = records.first() {
        csv.write_record(first.csv_header())?;
    } else {
        csv.write_record(DiagnosticsRecord::COLUMNS)?;
    }
    for r in records {
        csv.write_record(r.csv_row())?;
    }
    csv.flush().map_err(|e| Error::io("<diagnostics>", e))
}

/// `u_<tag>.csv` and `v_<tag>.csv`.
pub fn write_snapshots(dir: &Path, tag: &str, state: &SimState) -> Result<Vec<PathBuf>> {
    let u = dir.join(format!("u_{tag}.csv"));
    let v = dir.join(format!("v_{tag}.csv"));
    state.u.save_csv(&u, "u", state.t)?;
    state.v.save_csv(&v, "v", state.t)?;
    Ok(vec![u, v])
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
