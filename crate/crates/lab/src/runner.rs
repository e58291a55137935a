//! Executes grids of trajectories on a bounded worker pool and summarizes the
//! resulting run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use noisebias_core::engines::NoiseSpec;
use noisebias_core::model::generate_dataset;
use noisebias_core::trainer::{run_trajectory, ScheduleSpec};
use noisebias_core::{Dataset, DatasetConfig, ParamVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io::{
    build_id, read_json, read_trajectory_csv, write_json, write_trajectory_csv, DatasetRecord,
    RunManifest,
};

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "NOISEBIAS_WORKERS";

/// Data for a job: generated from a config (its seed replaced by the job
/// seed unless pinned) or loaded from a file.
#[derive(Clone, Debug)]
pub enum DatasetChoice {
    Generate {
        config: DatasetConfig,
        pin_seed: bool,
    },
    File {
        path: PathBuf,
        dataset: Dataset,
    },
}

impl DatasetChoice {
    fn materialize(&self, seed: u64) -> Result<(Dataset, DatasetRecord)> {
        match self {
            DatasetChoice::Generate { config, pin_seed } => {
                let mut config = config.clone();
                if !pin_seed {
                    config.seed = seed;
                }
                let ds = generate_dataset(&config)?;
                Ok((ds, DatasetRecord::Generated { config }))
            }
            DatasetChoice::File { path, dataset } => Ok((
                dataset.clone(),
                DatasetRecord::File {
                    path: path.clone(),
                    dataset: dataset.clone(),
                },
            )),
        }
    }
}

/// One trajectory to run and write under `<out>/<label>/<seed>/`.
#[derive(Clone, Debug)]
pub struct Job {
    pub label: String,
    pub seed: u64,
    pub dataset: DatasetChoice,
    pub engine: NoiseSpec,
    pub schedule: ScheduleSpec,
    pub tau: f64,
    pub log_every: u64,
}

pub fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join(label).join(seed.to_string())
}

/// Runs one job and writes `trajectory.csv` and `manifest.json`.
pub fn run_job(job: &Job, out: &Path) -> Result<RunManifest> {
    let (ds, record) = job.dataset.materialize(job.seed)?;
    let v0 = ParamVector::constant(ds.dim(), job.tau);
    let tr = run_trajectory(
        &ds,
        &v0,
        job.engine,
        &job.schedule,
        job.log_every,
        job.seed,
    )?;
    let final_linf_error = tr
        .final_v
        .iter()
        .zip(ds.ground_truth().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dir = run_dir(out, &job.label, job.seed);
    fs::create_dir_all(&dir).map_err(LabError::io(&dir))?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &tr.records)?;
    let manifest = RunManifest {
        label: job.label.clone(),
        seed: job.seed,
        dataset: record,
        engine: job.engine,
        schedule: job.schedule.clone(),
        tau: job.tau,
        log_every: job.log_every,
        build: build_id(),
        diverged_at: tr.diverged_at,
        final_linf_error,
        final_v: tr.final_v,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available cores.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(LabError::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got {s:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` inside a pool of `workers` threads.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every job on the worker pool, then writes `summary.json` at `out`.
pub fn run_grid(jobs: &[Job], out: &Path, workers: usize, epsilon: f64) -> Result<Summary> {
    fs::create_dir_all(out).map_err(LabError::io(out))?;
    with_pool(workers, || {
        jobs.par_iter()
            .map(|job| run_job(job, out).map(|_| ()))
            .collect::<Result<Vec<()>>>()
    })??;
    let summary = summarize_runs(out, epsilon)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Five-number summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles of the finite values, `None` if there are
/// none.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quantiles {
        min: v[0],
        q25: q(0.25),
        median: q(0.5),
        q75: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub diverged: usize,
    /// Runs ending with `‖v_T − v★‖∞ ≤ ε`.
    pub recovered: usize,
    pub success_rate: f64,
    /// Over runs that did not diverge.
    pub final_test_error: Option<Quantiles>,
    pub final_train_loss: Option<Quantiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epsilon: f64,
    pub engines: BTreeMap<String, EngineSummary>,
}

/// Scans `<run_dir>/<label>/<seed>/` for trajectories and summarizes the
/// final rows per label. Recovery uses the manifest's final error when
/// present.
pub fn summarize_runs(run_dir: &Path, epsilon: f64) -> Result<Summary> {
    let labels = fs::read_dir(run_dir).map_err(|source| LabError::MissingInput {
        path: run_dir.to_path_buf(),
        source,
    })?;
    let mut engines = BTreeMap::new();
    for label_entry in labels {
        let label_entry = label_entry.map_err(LabError::io(run_dir))?;
        if !label_entry.path().is_dir() {
            continue;
        }
        let label = label_entry.file_name().to_string_lossy().into_owned();
        let mut seed_dirs: Vec<(u64, PathBuf)> = Vec::new();
        for seed_entry in fs::read_dir(label_entry.path()).map_err(LabError::io(label_entry.path()))? {
            let seed_entry = seed_entry.map_err(LabError::io(label_entry.path()))?;
            let path = seed_entry.path();
            let Ok(seed) = seed_entry.file_name().to_string_lossy().parse::<u64>() else {
                continue;
            };
            if path.join("trajectory.csv").is_file() {
                seed_dirs.push((seed, path));
            }
        }
        if seed_dirs.is_empty() {
            continue;
        }
        seed_dirs.sort();
        let mut s = EngineSummary {
            runs: 0,
            seeds: Vec::new(),
            diverged: 0,
            recovered: 0,
            success_rate: 0.0,
            final_test_error: None,
            final_train_loss: None,
        };
        let (mut test, mut train) = (Vec::new(), Vec::new());
        for (seed, path) in seed_dirs {
            let rows = read_trajectory_csv(&path.join("trajectory.csv"))?;
            let Some(last) = rows.last() else {
                return Err(LabError::Config(format!(
                    "{} has no rows",
                    path.join("trajectory.csv").display()
                )));
            };
            s.runs += 1;
            s.seeds.push(seed);
            let manifest_path = path.join("manifest.json");
            let linf_error = if manifest_path.is_file() {
                read_json::<RunManifest>(&manifest_path)?.final_linf_error
            } else {
                // Without a manifest, bound ‖v − v★‖∞ by the logged norms.
                last.linf_err_s.max(last.l1_sbar)
            };
            if last.diverged {
                s.diverged += 1;
            } else {
                test.push(last.test_error);
                train.push(last.train_loss);
                if linf_error <= epsilon {
                    s.recovered += 1;
                }
            }
        }
        s.success_rate = s.recovered as f64 / s.runs as f64;
        s.final_test_error = quantiles(&test);
        s.final_train_loss = quantiles(&train);
        engines.insert(label, s);
    }
    if engines.is_empty() {
        return Err(LabError::NoRuns(run_dir.to_path_buf()));
    }
    Ok(Summary { epsilon, engines })
}
