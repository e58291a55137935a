//! Potential functions and stage-conclusion predicates evaluated on iterates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::linf;
use crate::trainer::TrajectoryRecord;
use crate::{Error, Result};

/// Which concave potential to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `Σ_k √v_k`.
    SqrtSum,
    /// `Σ_k √v_k` while `‖v‖₁ ≤ b`, else 0.
    BoundedSqrtSum { b: f64 },
    /// `Σ_{k∉S} √v_k` while `‖v_S̄‖₁ ≤ ε` and `‖v_S‖∞ ≤ b`, else 0.
    SupportBoundedSqrtSum {
        b: f64,
        epsilon: f64,
        support: Vec<usize>,
    },
}

fn check_nonnegative(v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| x.is_nan() || x < 0.0) {
        Some(index) => Err(Error::NegativeEntry {
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}

/// `Σ_k √v_k`; errors on a negative (or NaN) entry.
pub fn sqrt_potential(v: &[f64]) -> Result<f64> {
    check_nonnegative(v)?;
    Ok(v.iter().map(|&x| libm::sqrt(x)).sum())
}

pub fn potential(v: &[f64], spec: &PotentialSpec) -> Result<f64> {
    check_nonnegative(v)?;
    match spec {
        PotentialSpec::SqrtSum => sqrt_potential(v),
        PotentialSpec::BoundedSqrtSum { b } => {
            if b.is_nan() || *b <= 0.0 {
                return Err(Error::invalid("bound b must be positive"));
            }
            let l1: f64 = v.iter().sum();
            if l1 <= *b {
                sqrt_potential(v)
            } else {
                Ok(0.0)
            }
        }
        PotentialSpec::SupportBoundedSqrtSum {
            b,
            epsilon,
            support,
        } => {
            if !(*b > 0.0 && *epsilon > 0.0) {
                return Err(Error::invalid("b and epsilon must be positive"));
            }
            let mut on_s = alloc::vec![false; v.len()];
            for &k in support {
                if k >= v.len() {
                    return Err(Error::invalid("support index out of range"));
                }
                on_s[k] = true;
            }
            let mut l1_off = 0.0;
            let mut linf_on: f64 = 0.0;
            let mut phi = 0.0;
            for (&x, &s) in v.iter().zip(&on_s) {
                if s {
                    linf_on = linf_on.max(x);
                } else {
                    l1_off += x;
                    phi += libm::sqrt(x);
                }
            }
            if l1_off <= *epsilon && linf_on <= *b {
                Ok(phi)
            } else {
                Ok(0.0)
            }
        }
    }
}

/// End-of-stage-0 check: `‖v‖∞ ≤ 1/d` and `min_k v_k ≥ exp(−C/(ηδ))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage0Verdict {
    pub passed: bool,
    pub linf: f64,
    pub min_entry: f64,
}

/// Default `C` in the stage-0 lower bound `exp(−C/(ηδ))`. Calibrated so that
/// runs which go on to recover `v★` pass.
pub const STAGE0_FLOOR_CONSTANT: f64 = 15.0;

pub fn stage0_verdict(v: &[f64], d: usize, eta_delta: f64, floor_constant: f64) -> Result<Stage0Verdict> {
    check_nonnegative(v)?;
    let linf = linf(v);
    let min_entry = v.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = libm::exp(-floor_constant / eta_delta);
    Ok(Stage0Verdict {
        passed: linf <= 1.0 / d as f64 && min_entry >= floor,
        linf,
        min_entry,
    })
}

/// End-of-stage-1 check: `‖v_S − v★_S‖∞ ≤ 0.1` and `‖v_S̄‖₁ ≤ ε₁`, with `S`
/// the support of `vstar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Verdict {
    pub passed: bool,
    pub linf_on_s: f64,
    pub l1_on_sbar: f64,
}

pub fn stage1_verdict(v: &[f64], vstar: &[f64], eps1: f64) -> Result<Stage1Verdict> {
    if v.len() != vstar.len() {
        return Err(Error::DimensionMismatch {
            expected: vstar.len(),
            got: v.len(),
        });
    }
    let mut linf_on_s: f64 = 0.0;
    let mut l1_on_sbar = 0.0;
    for (&a, &b) in v.iter().zip(vstar) {
        if b != 0.0 {
            linf_on_s = linf_on_s.max((a - b).abs());
        } else {
            l1_on_sbar += a.abs();
        }
    }
    Ok(Stage1Verdict {
        passed: linf_on_s <= 0.1 + 1e-12 && l1_on_sbar <= eps1,
        linf_on_s,
        l1_on_sbar,
    })
}

/// Mean of `Φ(v_{t+1}) / Φ(v_t)` over consecutive entries of a potential
/// series, skipping pairs where `Φ(v_t)` is not positive.
pub fn contraction_estimate(potentials: &[f64]) -> Result<f64> {
    let ratios: Vec<f64> = potentials
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[0].is_finite() && w[1].is_finite())
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.len() < 10 {
        return Err(Error::InsufficientData {
            need: 10,
            have: ratios.len(),
        });
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// [`contraction_estimate`] over logged records; records without a defined
/// potential break the series.
pub fn contraction_estimate_records(records: &[TrajectoryRecord]) -> Result<f64> {
    let series: Vec<f64> = records
        .iter()
        .map(|r| r.potential.unwrap_or(f64::NAN))
        .collect();
    contraction_estimate(&series)
}

/// The ℓ₂ radius `b₀ = 6τd/ρ` that a stage-0 trajectory stays within with
/// probability `1 − ρ/3`.
pub fn norm_bound(tau: f64, d: usize, rho: f64) -> f64 {
    6.0 * tau * d as f64 / rho
}

/// True when every logged iterate has `‖v_t‖₂ ≤ b₀` and none diverged.
pub fn norm_bound_check(records: &[TrajectoryRecord], tau: f64, d: usize, rho: f64) -> bool {
    let b0 = norm_bound(tau, d, rho);
    records.iter().all(|r| !r.diverged && r.l2 <= b0)
}
