//! Experiment configuration: a TOML document whose values are overridden by
//! command-line flags.
//!
//! ```toml
//! out = "runs"
//! seeds = [0, 1, 2]
//! log_every = 1000
//! tau = 1.0
//!
//! [dataset]          # or: file = "data.json"
//! d = 100
//! n = 40
//! r = 5
//! # seed = 7         # pin the data; otherwise each run uses its own seed
//!
//! [engine]
//! kind = "label_noise"
//! delta = 100.0
//!
//! [schedule]
//! kind = "three_stage"   # or "constant" (eta, steps) or "stages"
//! c1 = 0.4
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use noisebias_core::engines::NoiseSpec;
use noisebias_core::trainer::{
    three_stage_schedule, ScheduleSpec, Stage, ThreeStageParams, CALIBRATED_DELTA,
};
use noisebias_core::DatasetConfig;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io::load_dataset;
use crate::runner::{DatasetChoice, Job};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub log_every: Option<u64>,
    pub tau: Option<f64>,
    pub dataset: Option<DatasetSection>,
    pub engine: Option<NoiseSpec>,
    pub schedule: Option<ScheduleSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub seed: Option<u64>,
    pub random_support: Option<bool>,
    pub signal: Option<f64>,
    pub file: Option<PathBuf>,
}

/// Three-stage constants; unset fields keep their calibrated values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeStageOverrides {
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub k0: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub t0: Option<u64>,
    pub t1: Option<u64>,
    pub t2: Option<u64>,
}

impl ThreeStageOverrides {
    pub fn resolve(&self) -> ThreeStageParams {
        let mut p = ThreeStageParams::calibrated();
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(x) = src {
                *dst = x;
            }
        };
        set(&mut p.delta, self.delta);
        set(&mut p.epsilon, self.epsilon);
        set(&mut p.c0, self.c0);
        set(&mut p.c1, self.c1);
        set(&mut p.c2, self.c2);
        set(&mut p.k0, self.k0);
        set(&mut p.k1, self.k1);
        set(&mut p.k2, self.k2);
        p.t0 = self.t0;
        p.t1 = self.t1;
        p.t2 = self.t2;
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    Constant { eta: f64, steps: u64 },
    Stages { stages: Vec<Stage> },
    ThreeStage(ThreeStageOverrides),
}

pub fn read_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|source| LabError::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

/// Command-line values for `train`; each set field overrides the file.
#[derive(Clone, Debug, Default)]
pub struct TrainOverrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub log_every: Option<u64>,
    pub tau: Option<f64>,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub dataset_seed: Option<u64>,
    pub dataset_file: Option<PathBuf>,
    pub engine: Option<String>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub steps: Option<u64>,
}

/// A fully resolved `train` experiment.
#[derive(Clone, Debug)]
pub struct TrainPlan {
    pub out: PathBuf,
    pub jobs: Vec<Job>,
}

/// Parses `"0..9"` (inclusive), `"0..=9"`, `"3"` or `"1,4,7"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || LabError::Config(format!("cannot parse seed list {s:?}"));
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let lo: u64 = a.trim().parse().map_err(|_| bad())?;
        let hi: u64 = b.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    check_distinct(&seeds)?;
    Ok(seeds)
}

fn check_distinct(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(LabError::Config("seed list is empty".into()));
    }
    let unique: BTreeSet<_> = seeds.iter().collect();
    if unique.len() != seeds.len() {
        return Err(LabError::Config("seeds must be distinct".into()));
    }
    Ok(())
}

fn engine_from_flags(
    kind: &str,
    base: Option<&NoiseSpec>,
    o: &TrainOverrides,
) -> Result<NoiseSpec> {
    let base_delta = match base {
        Some(NoiseSpec::LabelNoise { delta, .. } | NoiseSpec::MiniBatchSim { delta }) => Some(*delta),
        _ => None,
    };
    let delta = o.delta.or(base_delta).unwrap_or(CALIBRATED_DELTA);
    Ok(match kind {
        "gd" => NoiseSpec::Gd,
        "sgd" => NoiseSpec::PlainSgd,
        "label_noise" => NoiseSpec::LabelNoise {
            delta,
            full_batch: matches!(base, Some(NoiseSpec::LabelNoise { full_batch: true, .. })),
        },
        "minibatch" => NoiseSpec::MiniBatchSim { delta },
        "gaussian" => match (o.sigma, o.lambda, base) {
            (Some(s), _, _) => NoiseSpec::gaussian_sigma(s),
            (None, Some(l), _) => NoiseSpec::gaussian_lambda(l),
            (None, None, Some(spec @ NoiseSpec::Gaussian { .. })) => *spec,
            _ => {
                return Err(LabError::Config(
                    "gaussian engine needs --sigma or --lambda".into(),
                ))
            }
        },
        other => {
            return Err(LabError::Config(format!(
                "unknown engine {other:?} (expected gd, sgd, label_noise, minibatch or gaussian)"
            )))
        }
    })
}

/// Merges flags over the file over the defaults.
pub fn resolve_train(file: &FileConfig, o: &TrainOverrides) -> Result<TrainPlan> {
    let out = o
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let seeds = o
        .seeds
        .clone()
        .or_else(|| file.seeds.clone())
        .unwrap_or_else(|| vec![0]);
    check_distinct(&seeds)?;
    let log_every = o.log_every.or(file.log_every).unwrap_or(1000);
    if log_every == 0 {
        return Err(LabError::Config("log_every must be at least 1".into()));
    }
    let tau = o.tau.or(file.tau).unwrap_or(1.0);
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(LabError::Config(format!("tau must be finite and nonnegative, got {tau}")));
    }

    let section = file.dataset.clone().unwrap_or_default();
    let dataset = match o.dataset_file.clone().or(section.file.clone()) {
        Some(path) => {
            let dataset = load_dataset(&path)?;
            DatasetChoice::File { path, dataset }
        }
        None => {
            let seed = o.dataset_seed.or(section.seed);
            let mut config = DatasetConfig::new(
                o.d.or(section.d).unwrap_or(100),
                o.n.or(section.n).unwrap_or(40),
                o.r.or(section.r).unwrap_or(5),
                seed.unwrap_or(0),
            );
            config.random_support = section.random_support.unwrap_or(false);
            config.signal = section.signal.unwrap_or(1.0);
            DatasetChoice::Generate {
                config,
                pin_seed: seed.is_some(),
            }
        }
    };

    let schedule_section = file.schedule.clone();
    let schedule = match (o.eta, o.steps, &schedule_section) {
        (Some(eta), Some(steps), _) => ScheduleSpec::constant(eta, steps)?,
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(LabError::Config("--eta and --steps must be given together".into()))
        }
        (None, None, Some(ScheduleSection::Constant { eta, steps })) => {
            ScheduleSpec::constant(*eta, *steps)?
        }
        (None, None, Some(ScheduleSection::Stages { stages })) => ScheduleSpec::new(stages.clone())?,
        (None, None, Some(ScheduleSection::ThreeStage(t))) => three_stage_schedule(&t.resolve())?,
        (None, None, None) => three_stage_schedule(&ThreeStageParams::calibrated())?,
    };

    // The three-stage schedule pairs with label noise at its own δ.
    let schedule_delta = match &schedule_section {
        Some(ScheduleSection::ThreeStage(t)) => t.resolve().delta,
        _ => CALIBRATED_DELTA,
    };
    let engine = match (&o.engine, &file.engine) {
        (Some(kind), base) => engine_from_flags(kind, base.as_ref(), o)?,
        (None, Some(spec)) => {
            engine_from_flags(spec.name(), Some(spec), o)?
        }
        (None, None) => NoiseSpec::label_noise(o.delta.unwrap_or(schedule_delta)),
    };
    engine.validate()?;

    let label = engine.name().to_string();
    let jobs = seeds
        .iter()
        .map(|&seed| Job {
            label: label.clone(),
            seed,
            dataset: dataset.clone(),
            engine,
            schedule: schedule.clone(),
            tau,
            log_every,
        })
        .collect();
    Ok(TrainPlan { out, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("5, 1,9").unwrap(), vec![5, 1, 9]);
        assert!(parse_seeds("1,1").is_err());
        assert!(parse_seeds("4..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str(
            r#"
            seeds = [3, 4]
            log_every = 10
            [dataset]
            d = 12
            n = 6
            r = 2
            [engine]
            kind = "minibatch"
            delta = 0.5
            [schedule]
            kind = "constant"
            eta = 0.01
            steps = 100
            "#,
        )
        .unwrap();
        let plan = resolve_train(&file, &TrainOverrides::default()).unwrap();
        assert_eq!(plan.jobs.len(), 2);
        let job = &plan.jobs[0];
        assert_eq!(job.engine, NoiseSpec::MiniBatchSim { delta: 0.5 });
        assert_eq!(job.log_every, 10);
        assert_eq!(job.tau, 1.0);
        assert_eq!(plan.out, PathBuf::from("runs"));

        let flags = TrainOverrides {
            delta: Some(0.25),
            log_every: Some(5),
            seeds: Some(vec![9]),
            ..Default::default()
        };
        let plan = resolve_train(&file, &flags).unwrap();
        assert_eq!(plan.jobs.len(), 1);
        assert_eq!(plan.jobs[0].engine, NoiseSpec::MiniBatchSim { delta: 0.25 });
        assert_eq!(plan.jobs[0].log_every, 5);
    }

    #[test]
    fn defaults_are_the_calibrated_three_stage_run() {
        let plan = resolve_train(&FileConfig::default(), &TrainOverrides::default()).unwrap();
        let job = &plan.jobs[0];
        assert_eq!(job.engine, NoiseSpec::label_noise(CALIBRATED_DELTA));
        assert_eq!(
            job.schedule,
            three_stage_schedule(&ThreeStageParams::calibrated()).unwrap()
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("sedes = [1]").is_err());
        let e = resolve_train(
            &FileConfig::default(),
            &TrainOverrides {
                engine: Some("adam".into()),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }
}
