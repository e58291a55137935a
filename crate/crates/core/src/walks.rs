//! One-dimensional random walks driven purely by mean-zero noise.
//!
//! The multiplicative walk `v ← v + ηξv` (`ξ ∈ {±1}`) has noise proportional
//! to its position and collapses towards zero even though its mean stays at
//! `v₀`; the additive walk `v ← v + ηξ` (`ξ ~ N(0,1)`) spreads out forever.
//! Trial `k` of an ensemble draws from substream [`rng::WALKS`]` + k`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    Multiplicative,
    Additive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub kind: WalkKind,
    pub eta: f64,
    pub steps: u64,
    #[serde(default = "one")]
    pub v0: f64,
    #[serde(default)]
    pub seed: u64,
    /// Number of independent coordinates walked in parallel.
    #[serde(default = "one_dim")]
    pub dims: usize,
    /// Multiplicative only: give every coordinate noise of magnitude `η‖v‖₂`
    /// instead of `η|v_k|`.
    #[serde(default)]
    pub shared_variance: bool,
}

fn one() -> f64 {
    1.0
}

fn one_dim() -> usize {
    1
}

impl WalkConfig {
    pub fn new(kind: WalkKind, eta: f64, steps: u64, seed: u64) -> Self {
        WalkConfig {
            kind,
            eta,
            steps,
            v0: 1.0,
            seed,
            dims: 1,
            shared_variance: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("walk eta must be positive"));
        }
        if self.kind == WalkKind::Multiplicative && self.eta >= 1.0 {
            return Err(Error::invalid(
                "multiplicative walk needs eta < 1 to stay nonnegative",
            ));
        }
        if !self.v0.is_finite() {
            return Err(Error::invalid("v0 must be finite"));
        }
        if self.dims == 0 {
            return Err(Error::invalid("dims must be positive"));
        }
        if self.shared_variance && self.kind != WalkKind::Multiplicative {
            return Err(Error::invalid("shared_variance applies to the multiplicative walk"));
        }
        Ok(())
    }
}

/// Steps `0, 1, 2, 4, 8, …` up to `steps`, always ending at `steps`.
pub fn log_checkpoints(steps: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut t = 1;
    while t < steps {
        out.push(t);
        t *= 2;
    }
    if steps > 0 {
        out.push(steps);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkPoint {
    pub step: u64,
    pub v: Vec<f64>,
    /// `Σ_k √v_k` over the positive part of each coordinate.
    pub sqrt_potential: f64,
}

fn sqrt_pos(x: f64) -> f64 {
    libm::sqrt(x.max(0.0))
}

struct Walker {
    cfg: WalkConfig,
    v: Vec<f64>,
}

impl Walker {
    fn new(cfg: &WalkConfig) -> Self {
        Walker {
            cfg: cfg.clone(),
            v: vec![cfg.v0; cfg.dims],
        }
    }

    fn step_with<F: FnMut() -> f64>(&mut self, mut xi: F) {
        let eta = self.cfg.eta;
        match self.cfg.kind {
            WalkKind::Multiplicative if self.cfg.shared_variance => {
                let scale = libm::sqrt(self.v.iter().map(|x| x * x).sum());
                for vk in self.v.iter_mut() {
                    *vk += eta * xi() * scale;
                }
            }
            WalkKind::Multiplicative => {
                for vk in self.v.iter_mut() {
                    *vk += eta * xi() * *vk;
                }
            }
            WalkKind::Additive => {
                for vk in self.v.iter_mut() {
                    *vk += eta * xi();
                }
            }
        }
    }

    fn step(&mut self, rng: &mut Stream) {
        match self.cfg.kind {
            WalkKind::Multiplicative => {
                self.step_with(|| if rng.random::<bool>() { 1.0 } else { -1.0 })
            }
            WalkKind::Additive => self.step_with(|| rng.sample(StandardNormal)),
        }
    }

    fn point(&self, step: u64) -> WalkPoint {
        WalkPoint {
            step,
            v: self.v.clone(),
            sqrt_potential: self.v.iter().map(|&x| sqrt_pos(x)).sum(),
        }
    }
}

/// Runs a single walk, recording every `record_every` steps and the last
/// step. Uses trial 0 of the configured seed.
pub fn run_walk(cfg: &WalkConfig, record_every: u64) -> Result<Vec<WalkPoint>> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::WALKS);
    let mut w = Walker::new(cfg);
    let every = record_every.max(1);
    let mut out = vec![w.point(0)];
    for t in 1..=cfg.steps {
        w.step(&mut rng);
        if t % every == 0 || t == cfg.steps {
            out.push(w.point(t));
        }
    }
    Ok(out)
}

/// Runs a walk with a prescribed noise sequence `ξ₁, ξ₂, …` (one value per
/// coordinate per step), recording every step.
pub fn run_walk_forced(cfg: &WalkConfig, noise: &[f64]) -> Result<Vec<WalkPoint>> {
    cfg.validate()?;
    let per_step = cfg.dims;
    if noise.len() < per_step * cfg.steps as usize {
        return Err(Error::InsufficientData {
            need: per_step * cfg.steps as usize,
            have: noise.len(),
        });
    }
    let mut w = Walker::new(cfg);
    let mut out = vec![w.point(0)];
    let mut it = noise.iter().copied();
    for t in 1..=cfg.steps {
        w.step_with(|| it.next().unwrap_or(0.0));
        out.push(w.point(t));
    }
    Ok(out)
}

/// Running sums for ensemble statistics at one checkpoint. Values are the
/// first coordinate of each trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSums {
    pub count: u64,
    pub sum_v: f64,
    pub sum_v2: f64,
    pub sum_sqrt: f64,
    /// Σ max(v, 0), the second moment of the square-root potential.
    pub sum_pos: f64,
    pub below: u64,
}

impl CheckpointSums {
    fn add(&mut self, v: f64, threshold: f64) {
        self.count += 1;
        self.sum_v += v;
        self.sum_v2 += v * v;
        self.sum_sqrt += sqrt_pos(v);
        self.sum_pos += v.max(0.0);
        if v.abs() < threshold {
            self.below += 1;
        }
    }

    pub fn merge(&mut self, other: &CheckpointSums) {
        self.count += other.count;
        self.sum_v += other.sum_v;
        self.sum_v2 += other.sum_v2;
        self.sum_sqrt += other.sum_sqrt;
        self.sum_pos += other.sum_pos;
        self.below += other.below;
    }
}

/// Ensemble statistics at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub step: u64,
    pub trials: u64,
    pub mean_v: f64,
    /// Sample standard error of `mean_v`.
    pub stderr_v: f64,
    /// Sample variance of `v`.
    pub var_v: f64,
    /// Mean of `√v` (positive part).
    pub mean_sqrt_v: f64,
    pub stderr_sqrt_v: f64,
    /// Fraction of trials with `|v| < threshold`.
    pub frac_below: f64,
}

impl CheckpointStats {
    fn from_sums(step: u64, s: &CheckpointSums) -> Self {
        let n = s.count as f64;
        let mean_v = s.sum_v / n;
        let var_v = if s.count > 1 {
            ((s.sum_v2 - n * mean_v * mean_v) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let mean_sqrt_v = s.sum_sqrt / n;
        let var_sqrt = if s.count > 1 {
            ((s.sum_pos - n * mean_sqrt_v * mean_sqrt_v) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        CheckpointStats {
            step,
            trials: s.count,
            mean_v,
            stderr_v: libm::sqrt(var_v / n),
            var_v,
            mean_sqrt_v,
            stderr_sqrt_v: libm::sqrt(var_sqrt / n),
            frac_below: s.below as f64 / n,
        }
    }
}

/// Mergeable per-checkpoint sums for a block of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkEnsemble {
    pub checkpoints: Vec<u64>,
    pub threshold: f64,
    pub sums: Vec<CheckpointSums>,
}

impl WalkEnsemble {
    pub fn new(cfg: &WalkConfig, threshold: f64) -> Self {
        let checkpoints = log_checkpoints(cfg.steps);
        let sums = vec![CheckpointSums::default(); checkpoints.len()];
        WalkEnsemble {
            checkpoints,
            threshold,
            sums,
        }
    }

    /// Simulates trials `range` and folds them into the sums.
    pub fn run_trials(&mut self, cfg: &WalkConfig, range: core::ops::Range<u64>) -> Result<()> {
        cfg.validate()?;
        for trial in range {
            let mut rng = rng::stream(cfg.seed, rng::WALKS + trial);
            let mut w = Walker::new(cfg);
            let mut next = 0;
            for t in 0..=cfg.steps {
                if t > 0 {
                    w.step(&mut rng);
                }
                if next < self.checkpoints.len() && self.checkpoints[next] == t {
                    self.sums[next].add(w.v[0], self.threshold);
                    next += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &WalkEnsemble) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
    }

    pub fn stats(&self) -> Vec<CheckpointStats> {
        self.checkpoints
            .iter()
            .zip(&self.sums)
            .map(|(&t, s)| CheckpointStats::from_sums(t, s))
            .collect()
    }
}

/// Mean, `√v` mean and small-value fraction over `trials` independent walks at
/// log-spaced checkpoints.
pub fn walk_ensemble_stats(cfg: &WalkConfig, trials: u64, threshold: f64) -> Result<Vec<CheckpointStats>> {
    if trials < 100 {
        return Err(Error::InsufficientData {
            need: 100,
            have: trials as usize,
        });
    }
    let mut ens = WalkEnsemble::new(cfg, threshold);
    ens.run_trials(cfg, 0..trials)?;
    Ok(ens.stats())
}

/// `E[√(1 + ηξ)]` for `ξ` uniform on `{±1}`: the exact per-step factor of the
/// mean square-root potential of the multiplicative walk.
pub fn sqrt_contraction_factor(eta: f64) -> f64 {
    0.5 * (libm::sqrt(1.0 + eta) + libm::sqrt(1.0 - eta))
}

/// Exact variance of the multiplicative walk at step `t` from `v₀ = 1`:
/// `(1 + η²)ᵗ − 1`.
pub fn multiplicative_variance(eta: f64, t: u64) -> f64 {
    libm::pow(1.0 + eta * eta, t as f64) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_multiplicative_sequence() {
        let cfg = WalkConfig::new(WalkKind::Multiplicative, 0.5, 2, 0);
        let pts = run_walk_forced(&cfg, &[1.0, -1.0]).unwrap();
        let vs: Vec<f64> = pts.iter().map(|p| p.v[0]).collect();
        assert_eq!(vs, vec![1.0, 1.5, 0.75]);
    }

    #[test]
    fn zero_is_absorbing() {
        let mut cfg = WalkConfig::new(WalkKind::Multiplicative, 0.5, 500, 3);
        cfg.v0 = 0.0;
        assert!(run_walk(&cfg, 1).unwrap().iter().all(|p| p.v[0] == 0.0));
    }

    #[test]
    fn multiplicative_stays_positive() {
        let cfg = WalkConfig::new(WalkKind::Multiplicative, 0.9, 200, 8);
        assert!(run_walk(&cfg, 1).unwrap().iter().all(|p| p.v[0] > 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(WalkConfig::new(WalkKind::Multiplicative, 1.0, 10, 0).validate().is_err());
        assert!(WalkConfig::new(WalkKind::Additive, 1.0, 10, 0).validate().is_ok());
        assert!(WalkConfig::new(WalkKind::Additive, 0.0, 10, 0).validate().is_err());
        let mut cfg = WalkConfig::new(WalkKind::Additive, 1.0, 10, 0);
        cfg.shared_variance = true;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoints_are_log_spaced() {
        assert_eq!(log_checkpoints(200), vec![0, 1, 2, 4, 8, 16, 32, 64, 128, 200]);
        assert_eq!(log_checkpoints(8), vec![0, 1, 2, 4, 8]);
    }

    #[test]
    fn split_ensembles_merge_to_the_whole() {
        let cfg = WalkConfig::new(WalkKind::Multiplicative, 0.5, 64, 4);
        let mut whole = WalkEnsemble::new(&cfg, 1e-3);
        whole.run_trials(&cfg, 0..300).unwrap();
        let mut a = WalkEnsemble::new(&cfg, 1e-3);
        a.run_trials(&cfg, 0..120).unwrap();
        let mut b = WalkEnsemble::new(&cfg, 1e-3);
        b.run_trials(&cfg, 120..300).unwrap();
        a.merge(&b);
        for (x, y) in whole.sums.iter().zip(&a.sums) {
            assert_eq!(x.count, y.count);
            assert_eq!(x.below, y.below);
            assert!((x.sum_v - y.sum_v).abs() <= 1e-9 * x.sum_v.abs());
        }
    }

    #[test]
    fn parallel_dims_and_shared_variance_run() {
        let mut cfg = WalkConfig::new(WalkKind::Multiplicative, 0.3, 50, 1);
        cfg.dims = 4;
        let pts = run_walk(&cfg, 10).unwrap();
        assert_eq!(pts.last().unwrap().v.len(), 4);
        cfg.shared_variance = true;
        assert_eq!(run_walk(&cfg, 10).unwrap().len(), 6);
    }

    #[test]
    fn closed_forms() {
        assert!((sqrt_contraction_factor(0.5) - 0.9659258262890683).abs() < 1e-15);
        assert!((multiplicative_variance(0.5, 2) - 0.5625).abs() < 1e-15);
    }
}
