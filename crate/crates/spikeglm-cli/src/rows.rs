//! Result rows: the CSV interface downstream plotting reads. The file is
//! append-only; every writer re-checks whether the header is already in
//! place so repeated runs extend one file.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spikeglm::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_digest: String,
    pub decoder: String,
    /// Number of synaptic basis functions.
    pub k: usize,
    pub t: usize,
    pub n_y: usize,
    pub accuracy: f64,
    pub mean_ops: f64,
    pub mean_decision_time: f64,
    pub fallback_fraction: f64,
    pub seed: u64,
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let need_header = std::fs::metadata(path).map_or(true, |meta| meta.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(need_header)
        .from_writer(file);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Format(format!("cannot write result row: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Format(format!("cannot flush results: {e}")))?;
    Ok(())
}

/// Strict reader: header required, every record must deserialize with the
/// full column set.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: ResultRow =
            record.map_err(|e| Error::Format(format!("malformed result row: {e}")))?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(Error::Format(format!(
                "accuracy {} outside [0, 1]",
                row.accuracy
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
