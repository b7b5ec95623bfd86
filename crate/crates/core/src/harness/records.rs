use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One trained model and everything measured about it.
///
/// Column order of `records.csv` is the field order. Empty cells mean "not
/// applicable" (for example source-side attacks on the baseline, which never
/// saw a source).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    /// `source->target`; the baseline has no source.
    pub direction: String,
    pub train_acc_target: f64,
    pub test_acc_target: f64,
    pub mia_acc_target: f64,
    pub adv_mi_target: f64,
    pub mia_acc_source: Option<f64>,
    pub adv_mi_source: Option<f64>,
    pub similarity: Option<f64>,
    pub size: Option<usize>,
    pub diversity: Option<usize>,
    pub seed: u64,
    pub wall_time: f64,
    /// Sweep point label, e.g. `k=5`, `mix=0+1`, `brightness@0.3`.
    pub sweep: String,
    pub epochs: usize,
    pub mean_gen_error: Option<f64>,
    pub mean_pred_l1: f64,
}

pub const RECORD_COLUMNS: [&str; 17] = [
    "method",
    "direction",
    "train_acc_target",
    "test_acc_target",
    "mia_acc_target",
    "adv_mi_target",
    "mia_acc_source",
    "adv_mi_source",
    "similarity",
    "size",
    "diversity",
    "seed",
    "wall_time",
    "sweep",
    "epochs",
    "mean_gen_error",
    "mean_pred_l1",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: String,
    pub sweep: String,
    pub seed: u64,
    pub error: String,
}

pub const FAILURE_COLUMNS: [&str; 4] = ["method", "sweep", "seed", "error"];

/// Writes a header (even with no rows) followed by one row per item.
fn write_rows<T: Serialize>(writer: impl Write, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(writer: impl Write, rows: &[RunRecord]) -> Result<()> {
    write_rows(writer, &RECORD_COLUMNS, rows)
}

pub fn write_failures(writer: impl Write, rows: &[FailureRecord]) -> Result<()> {
    write_rows(writer, &FAILURE_COLUMNS, rows)
}

pub fn read_records(reader: impl Read) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    read_records(std::fs::File::open(path)?)
}
