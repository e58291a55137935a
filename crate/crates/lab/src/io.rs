//! On-disk formats: dataset JSON, trajectory CSV and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use noisebias_core::engines::NoiseSpec;
use noisebias_core::trainer::{ScheduleSpec, TrajectoryRecord};
use noisebias_core::{Dataset, DatasetConfig, ParamVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Column order of `trajectory.csv`.
pub const CSV_HEADER: [&str; 11] = [
    "step",
    "train_loss",
    "test_error",
    "linf",
    "l1",
    "l2",
    "linf_err_S",
    "l1_Sbar",
    "potential",
    "min_entry",
    "diverged",
];

/// One CSV row; `potential` is empty when undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub step: u64,
    pub train_loss: f64,
    pub test_error: f64,
    pub linf: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(rename = "linf_err_S")]
    pub linf_err_s: f64,
    #[serde(rename = "l1_Sbar")]
    pub l1_sbar: f64,
    pub potential: Option<f64>,
    pub min_entry: f64,
    pub diverged: bool,
}

impl From<&TrajectoryRecord> for CsvRow {
    fn from(r: &TrajectoryRecord) -> Self {
        CsvRow {
            step: r.step,
            train_loss: r.train_loss,
            test_error: r.test_error,
            linf: r.linf,
            l1: r.l1,
            l2: r.l2,
            linf_err_s: r.linf_err_s,
            l1_sbar: r.l1_sbar,
            potential: r.potential,
            min_entry: r.min_entry,
            diverged: r.diverged,
        }
    }
}

pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let csv_err = |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(CsvRow::from(r)).map_err(csv_err)?;
    }
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let csv_err = |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != CSV_HEADER {
        return Err(LabError::Config(format!(
            "{}: unexpected header {}",
            path.display(),
            header.join(",")
        )));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| LabError::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| LabError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| LabError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(LabError::io(path))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_json(path)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_json(path, ds)
}

/// Where a run's data came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetRecord {
    Generated { config: DatasetConfig },
    File { path: PathBuf, dataset: Dataset },
}

/// Everything needed to replay a run, plus its final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub seed: u64,
    pub dataset: DatasetRecord,
    pub engine: NoiseSpec,
    pub schedule: ScheduleSpec,
    pub tau: f64,
    pub log_every: u64,
    pub build: String,
    pub diverged_at: Option<u64>,
    /// `‖v_T − v★‖∞`.
    pub final_linf_error: f64,
    pub final_v: ParamVector,
}

pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}
