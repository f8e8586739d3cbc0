use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SweepVar;
use crate::error::Result;

pub const CSV_HEADER: [&str; 16] = [
    "config_id",
    "system",
    "M",
    "N_i",
    "T",
    "epsilon",
    "K_i",
    "alpha",
    "batch_size",
    "round",
    "seed",
    "max_error",
    "mean_error",
    "lambda_min_pooled",
    "bound_value",
    "observed_error",
];

/// One CSV row: the global model's error after `round` for one
/// (sweep point, seed) pair. Diagnostic columns repeat on every row of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Index of the sweep point in config order.
    pub config_id: usize,
    pub system: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N_i")]
    pub n_i: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub epsilon: f64,
    #[serde(rename = "K_i")]
    pub k_i: usize,
    pub alpha: f64,
    pub batch_size: Option<usize>,
    pub round: usize,
    pub seed: u64,
    pub max_error: f64,
    pub mean_error: f64,
    pub lambda_min_pooled: Option<f64>,
    pub bound_value: Option<f64>,
    pub observed_error: Option<f64>,
}

/// 17 significant digits, enough to round-trip any f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

impl ExperimentRecord {
    /// Value of the swept variable at this row's sweep point.
    pub fn swept_value(&self, var: SweepVar) -> f64 {
        match var {
            SweepVar::Clients => self.m as f64,
            SweepVar::Trajectories => self.n_i as f64,
            SweepVar::Epsilon => self.epsilon,
            SweepVar::LocalUpdates => self.k_i as f64,
        }
    }

    fn fields(&self) -> [String; 16] {
        [
            self.config_id.to_string(),
            self.system.clone(),
            self.m.to_string(),
            self.n_i.to_string(),
            self.t.to_string(),
            float(self.epsilon),
            self.k_i.to_string(),
            float(self.alpha),
            self.batch_size.map(|b| b.to_string()).unwrap_or_default(),
            self.round.to_string(),
            self.seed.to_string(),
            float(self.max_error),
            float(self.mean_error),
            opt_float(self.lambda_min_pooled),
            opt_float(self.bound_value),
            opt_float(self.observed_error),
        ]
    }
}

pub fn write_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(std::fs::File::create(path)?, records)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_csv_path(path: &Path) -> Result<Vec<ExperimentRecord>> {
    read_csv(std::fs::File::open(path)?)
}
