//! The `noisebias` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use noisebias_core::gibbs::{
    intersection_trial, log_grid, partition_divergence_probe, statistical_dimension_mc,
    ConeProbeReport,
};
use noisebias_core::model::generate_dataset;
use noisebias_core::trainer::figure1_preset;
use noisebias_core::walks::{CheckpointStats, WalkConfig, WalkEnsemble, WalkKind};
use noisebias_core::DatasetConfig;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_seeds, read_config, resolve_train, FileConfig, TrainOverrides};
use crate::error::{LabError, Result};
use crate::io::{load_dataset, write_json};
use crate::runner::{run_grid, summarize_runs, with_pool, worker_count, DatasetChoice, Job};

#[derive(Debug, Parser)]
#[command(name = "noisebias", version, about = "Simulations of noisy gradient methods on a quadratically-parameterized model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one engine over a list of seeds.
    Train(TrainArgs),
    /// Run the 100-dimensional engine comparison preset.
    Figure1(Figure1Args),
    /// Probe the Gibbs partition function over the positive cone.
    Gibbs(GibbsArgs),
    /// Monte Carlo statistical dimension of the positive orthant.
    Statdim(StatdimArgs),
    /// How often a random subspace meets the positive orthant.
    Intersect(IntersectArgs),
    /// Ensemble statistics of the one-dimensional toy walks.
    Walk(WalkArgs),
    /// Summarize a run directory into summary.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `0..9` (inclusive), `0..=9` or `1,2,3`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub log_every: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Pin the generated data to this seed instead of each run's seed.
    #[arg(long)]
    pub dataset_seed: Option<u64>,
    /// Load the data from a JSON file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// gd, sgd, label_noise, minibatch or gaussian.
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Constant learning rate; requires --steps.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// ε used for the recovery rate in summary.json.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct Figure1Args {
    /// `all` or a comma-separated list of run labels.
    #[arg(long, default_value = "all")]
    pub engines: String,
    #[arg(long, default_value = "0..4")]
    pub seeds: String,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub log_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GibbsArgs {
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Load the data from a JSON file instead of generating it.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub z_min: f64,
    #[arg(long, default_value_t = 1e8)]
    pub z_max: f64,
    #[arg(long, default_value_t = 33)]
    pub points: usize,
    /// Use `u★ = s·μ`.
    #[arg(long, default_value_t = 1.0)]
    pub u_star_scale: f64,
    /// Directory for report.json and partial_integrals.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatdimArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IntersectArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WalkKindArg {
    Multiplicative,
    Additive,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[arg(long, value_enum)]
    pub kind: WalkKindArg,
    #[arg(long)]
    pub eta: f64,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    /// Directory for walk_stats.csv and walk.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_json<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| LabError::Json {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    writeln!(out, "{text}").map_err(LabError::io("<stdout>"))
}

pub fn dispatch(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Train(a) => train(a, out),
        Command::Figure1(a) => figure1(a, out),
        Command::Gibbs(a) => gibbs(a, out),
        Command::Statdim(a) => {
            let est = statistical_dimension_mc(a.d, a.samples, a.seed)?;
            print_json(out, &serde_json::json!({
                "d": a.d,
                "samples": est.samples,
                "estimate": est.estimate,
                "stderr": est.stderr,
                "exact": a.d as f64 / 2.0,
            }))
        }
        Command::Intersect(a) => intersect(a, out),
        Command::Walk(a) => walk(a, out),
        Command::Report(a) => {
            let summary = summarize_runs(&a.run_dir, a.epsilon)?;
            write_json(&a.run_dir.join("summary.json"), &summary)?;
            print_json(out, &summary)
        }
    }
}

fn train(a: TrainArgs, out: &mut impl Write) -> Result<()> {
    let file = match &a.config {
        Some(path) => read_config(path)?,
        None => FileConfig::default(),
    };
    let overrides = TrainOverrides {
        out: a.out,
        seeds: a.seeds.as_deref().map(parse_seeds).transpose()?,
        log_every: a.log_every,
        tau: a.tau,
        d: a.d,
        n: a.n,
        r: a.r,
        dataset_seed: a.dataset_seed,
        dataset_file: a.dataset,
        engine: a.engine,
        delta: a.delta,
        sigma: a.sigma,
        lambda: a.lambda,
        eta: a.eta,
        steps: a.steps,
    };
    let plan = resolve_train(&file, &overrides)?;
    let summary = run_grid(&plan.jobs, &plan.out, worker_count()?, a.epsilon)?;
    print_json(out, &summary)
}

/// Jobs for the engine-comparison preset. Each seed drives both the data
/// and the update noise.
pub fn figure1_jobs(engines: &str, seeds: &[u64], log_every: Option<u64>) -> Result<Vec<Job>> {
    let preset = figure1_preset();
    let runs: Vec<_> = if engines.trim() == "all" {
        preset.runs.iter().collect()
    } else {
        engines
            .split(',')
            .map(|label| {
                preset.run(label.trim()).ok_or_else(|| {
                    let known: Vec<_> = preset.runs.iter().map(|r| r.label.as_str()).collect();
                    LabError::Config(format!(
                        "unknown preset run {label:?}; known: {}",
                        known.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let log_every = log_every.unwrap_or(preset.log_every);
    if log_every == 0 {
        return Err(LabError::Config("log_every must be at least 1".into()));
    }
    let mut jobs = Vec::new();
    for run in runs {
        for &seed in seeds {
            jobs.push(Job {
                label: run.label.clone(),
                seed,
                dataset: DatasetChoice::Generate {
                    config: preset.dataset.clone(),
                    pin_seed: false,
                },
                engine: run.engine,
                schedule: run.schedule.clone(),
                tau: preset.tau,
                log_every,
            });
        }
    }
    Ok(jobs)
}

fn figure1(a: Figure1Args, out: &mut impl Write) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    let jobs = figure1_jobs(&a.engines, &seeds, a.log_every)?;
    let summary = run_grid(&jobs, &a.out, worker_count()?, 0.1)?;
    print_json(out, &summary)
}

fn write_partial_integrals(path: &Path, report: &ConeProbeReport) -> Result<()> {
    let csv_err = |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["z", "integral"]).map_err(csv_err)?;
    for (z, i) in &report.partial_integrals {
        w.write_record([z.to_string(), i.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(LabError::io(path))
}

fn gibbs(a: GibbsArgs, out: &mut impl Write) -> Result<()> {
    let ds = match &a.dataset {
        Some(path) => load_dataset(path)?,
        None => generate_dataset(&DatasetConfig::new(a.d, a.n, 0, a.seed))?,
    };
    if !(a.u_star_scale > 0.0 && a.u_star_scale.is_finite()) {
        return Err(LabError::Config("--u-star-scale must be positive".into()));
    }
    let grid = log_grid(a.z_min, a.z_max, a.points)?;
    let mut report = partition_divergence_probe(&ds, None, &grid)?;
    if a.u_star_scale != 1.0 {
        if let Some(mu) = report.mu.clone() {
            let u_star: Vec<f64> = mu.iter().map(|m| m * a.u_star_scale).collect();
            report = partition_divergence_probe(&ds, Some(&u_star), &grid)?;
        }
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        write_json(&dir.join("report.json"), &report)?;
        write_partial_integrals(&dir.join("partial_integrals.csv"), &report)?;
    }
    print_json(out, &report)
}

fn intersect(a: IntersectArgs, out: &mut impl Write) -> Result<()> {
    if a.trials < 10 {
        return Err(LabError::Config("--trials must be at least 10".into()));
    }
    if a.n >= a.d {
        return Err(LabError::Config("need n < d".into()));
    }
    let hits = with_pool(worker_count()?, || {
        (0..a.trials)
            .into_par_iter()
            .map(|t| intersection_trial(a.d, a.n, a.seed, t).map(u64::from))
            .sum::<noisebias_core::Result<u64>>()
    })??;
    print_json(out, &serde_json::json!({
        "d": a.d,
        "n": a.n,
        "trials": a.trials,
        "hits": hits,
        "fraction": hits as f64 / a.trials as f64,
    }))
}

/// Walk ensemble split into contiguous trial blocks across the pool.
pub fn walk_stats(cfg: &WalkConfig, trials: u64, threshold: f64, workers: usize) -> Result<Vec<CheckpointStats>> {
    cfg.validate()?;
    if trials < 2 {
        return Err(LabError::Config("need at least two trials".into()));
    }
    let blocks = (workers as u64 * 4).min(trials);
    let ensemble = with_pool(workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let range = (trials * b / blocks)..(trials * (b + 1) / blocks);
                let mut e = WalkEnsemble::new(cfg, threshold);
                e.run_trials(cfg, range).map(|()| e)
            })
            .try_reduce_with(|mut a, b| {
                a.merge(&b);
                Ok(a)
            })
    })?;
    let ensemble = ensemble.expect("at least one block")?;
    Ok(ensemble.stats())
}

fn walk(a: WalkArgs, out: &mut impl Write) -> Result<()> {
    let kind = match a.kind {
        WalkKindArg::Multiplicative => WalkKind::Multiplicative,
        WalkKindArg::Additive => WalkKind::Additive,
    };
    let mut cfg = WalkConfig::new(kind, a.eta, a.steps, a.seed);
    cfg.v0 = a.v0;
    let stats = walk_stats(&cfg, a.trials, a.threshold, worker_count()?)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        let path = dir.join("walk_stats.csv");
        let csv_err = |source| LabError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for s in &stats {
            w.serialize(s).map_err(csv_err)?;
        }
        w.flush().map_err(LabError::io(&path))?;
        write_json(&dir.join("walk.json"), &serde_json::json!({ "config": cfg, "trials": a.trials, "checkpoints": stats }))?;
    }
    print_json(out, &serde_json::json!({ "config": cfg, "trials": a.trials, "checkpoints": stats }))
}
