//! The quadratically-parameterized regression model.
//!
//! Predictions are `f_v(x) = Σ_k v_k² x_k`, the per-example loss is
//! `ℓ_i(v) = ¼ (f_v(x_i) − y_i)²` and the empirical loss averages it over the
//! dataset. Labels are generated noiselessly from a sparse ground truth `v★`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// An iterate `v ∈ ℝᵈ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Self {
        ParamVector(entries)
    }

    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    /// The initialization `τ·𝟙`.
    pub fn constant(d: usize, tau: f64) -> Self {
        ParamVector(vec![tau; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn linf(&self) -> f64 {
        linf(&self.0)
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn l2(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|x| x * x).sum())
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

pub(crate) fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| {
        if x.is_nan() {
            f64::NAN
        } else {
            m.max(x.abs())
        }
    })
}

/// Parameters for [`generate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    /// Draw the support uniformly at random instead of taking the first `r`
    /// coordinates.
    #[serde(default)]
    pub random_support: bool,
    /// Value of `v★` on its support.
    #[serde(default = "unit")]
    pub signal: f64,
}

fn unit() -> f64 {
    1.0
}

impl DatasetConfig {
    pub fn new(d: usize, n: usize, r: usize, seed: u64) -> Self {
        DatasetConfig {
            d,
            n,
            r,
            seed,
            random_support: false,
            signal: 1.0,
        }
    }
}

/// A realizable regression dataset: rows `x_i`, labels `y_i = <v★⊙², x_i>`
/// and the `r`-sparse ground truth `v★`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    d: usize,
    n: usize,
    seed: u64,
    support: Vec<usize>,
    signal: f64,
    /// Row-major `n × d`.
    x: Vec<f64>,
    y: Vec<f64>,
    ground_truth: ParamVector,
    in_support: Vec<bool>,
}

/// On-disk layout: `{d, n, r, seed, support, x, y}` with `x` row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct DatasetRepr {
    d: usize,
    n: usize,
    r: usize,
    seed: u64,
    support: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(default = "unit")]
    signal: f64,
}

impl From<Dataset> for DatasetRepr {
    fn from(ds: Dataset) -> Self {
        DatasetRepr {
            d: ds.d,
            n: ds.n,
            r: ds.support.len(),
            seed: ds.seed,
            support: ds.support,
            x: ds.x,
            y: ds.y,
            signal: ds.signal,
        }
    }
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;

    fn try_from(repr: DatasetRepr) -> Result<Self> {
        if repr.support.len() != repr.r {
            return Err(Error::invalid(format!(
                "support has {} entries but r = {}",
                repr.support.len(),
                repr.r
            )));
        }
        if repr.x.len() != repr.n * repr.d {
            return Err(Error::DimensionMismatch {
                expected: repr.n * repr.d,
                got: repr.x.len(),
            });
        }
        let ds = Dataset::from_rows(repr.d, repr.x, &repr.support, repr.signal, repr.seed)?;
        if repr.y.len() != ds.n {
            return Err(Error::DimensionMismatch {
                expected: ds.n,
                got: repr.y.len(),
            });
        }
        for (i, (&stored, &computed)) in repr.y.iter().zip(&ds.y).enumerate() {
            if (stored - computed).abs() > 1e-12 * (1.0 + computed.abs()) {
                return Err(Error::invalid(format!(
                    "label {i} is {stored} but the ground truth gives {computed}"
                )));
            }
        }
        Ok(ds)
    }
}

impl Dataset {
    /// Builds a dataset from explicit row-major data, deriving the labels
    /// from `v★ = signal · 𝟙_S`.
    pub fn from_rows(
        d: usize,
        x: Vec<f64>,
        support: &[usize],
        signal: f64,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension d must be positive"));
        }
        if x.len() % d != 0 {
            return Err(Error::invalid("row-major data length is not a multiple of d"));
        }
        if !signal.is_finite() || signal == 0.0 {
            return Err(Error::invalid("signal must be finite and nonzero"));
        }
        let n = x.len() / d;
        let mut in_support = vec![false; d];
        for &k in support {
            if k >= d {
                return Err(Error::invalid(format!("support index {k} out of range")));
            }
            if in_support[k] {
                return Err(Error::invalid(format!("support index {k} repeated")));
            }
            in_support[k] = true;
        }
        let mut support = support.to_vec();
        support.sort_unstable();
        let ground_truth = ParamVector(
            in_support
                .iter()
                .map(|&s| if s { signal } else { 0.0 })
                .collect(),
        );
        // Same summation as `predict`, so `v★` interpolates exactly.
        let y = x.chunks_exact(d).map(|row| quad_dot(&ground_truth, row)).collect();
        Ok(Dataset {
            d,
            n,
            seed,
            support,
            signal,
            x,
            y,
            ground_truth,
            in_support,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signal(&self) -> f64 {
        self.signal
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn in_support(&self, k: usize) -> bool {
        self.in_support[k]
    }

    pub fn support_mask(&self) -> &[bool] {
        &self.in_support
    }

    pub fn ground_truth(&self) -> &ParamVector {
        &self.ground_truth
    }

    /// Row-major `n × d` design matrix.
    pub fn rows(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn example(&self, i: usize) -> Result<&[f64]> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n,
            });
        }
        Ok(self.row(i))
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Draws `n` standard Gaussian rows and labels them with an `r`-sparse `v★`.
///
/// The rows are drawn first (row by row, coordinate by coordinate) from the
/// [`rng::DATA`] substream; when `random_support` is set, a partial
/// Fisher–Yates shuffle on the same stream then picks the support.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.d == 0 || cfg.n == 0 {
        return Err(Error::invalid("d and n must be positive"));
    }
    if cfg.r > cfg.d {
        return Err(Error::invalid(format!(
            "sparsity r = {} exceeds dimension d = {}",
            cfg.r, cfg.d
        )));
    }
    let mut stream = rng::stream(cfg.seed, rng::DATA);
    let x: Vec<f64> = (0..cfg.n * cfg.d)
        .map(|_| stream.sample(StandardNormal))
        .collect();
    let support: Vec<usize> = if cfg.random_support {
        let mut idx: Vec<usize> = (0..cfg.d).collect();
        for k in 0..cfg.r {
            let j = stream.random_range(k..cfg.d);
            idx.swap(k, j);
        }
        idx.truncate(cfg.r);
        idx
    } else {
        (0..cfg.r).collect()
    };
    Dataset::from_rows(cfg.d, x, &support, cfg.signal, cfg.seed)
}

/// `Σ v_k² x_k`, accumulated in four lanes so the loop vectorizes.
#[inline]
fn quad_dot(v: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (vc, xc) = (v.chunks_exact(4), x.chunks_exact(4));
    let tail: f64 = vc
        .remainder()
        .iter()
        .zip(xc.remainder())
        .map(|(p, q)| p * p * q)
        .sum();
    for (a, b) in vc.zip(xc) {
        for l in 0..4 {
            acc[l] += a[l] * a[l] * b[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `f_v(x) = Σ_k v_k² x_k`.
pub fn predict(v: &[f64], x: &[f64]) -> Result<f64> {
    if v.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: x.len(),
        });
    }
    Ok(quad_dot(v, x))
}

/// `f_v(x_i) − y_i` without bounds or dimension checks.
#[inline]
pub(crate) fn residual_unchecked(v: &[f64], ds: &Dataset, i: usize) -> f64 {
    quad_dot(v, ds.row(i)) - ds.y[i]
}

pub fn residual(v: &[f64], ds: &Dataset, i: usize) -> Result<f64> {
    ds.check_dim(v)?;
    ds.example(i)?;
    Ok(residual_unchecked(v, ds, i))
}

/// `ℓ_i(v) = ¼ (f_v(x_i) − y_i)²`.
pub fn example_loss(v: &[f64], ds: &Dataset, i: usize) -> Result<f64> {
    let r = residual(v, ds, i)?;
    Ok(0.25 * r * r)
}

/// `∇ℓ_i(v) = (f_v(x_i) − y_i) · x_i ⊙ v`.
pub fn example_grad(v: &[f64], ds: &Dataset, i: usize) -> Result<Vec<f64>> {
    let r = residual(v, ds, i)?;
    Ok(ds.row(i).iter().zip(v).map(|(x, vk)| r * x * vk).collect())
}

/// `L(v) = (1/n) Σ_i ℓ_i(v)`.
pub fn full_loss(v: &[f64], ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ds.check_dim(v)?;
    let total: f64 = (0..ds.n)
        .map(|i| {
            let r = residual_unchecked(v, ds, i);
            r * r
        })
        .sum();
    Ok(0.25 * total / ds.n as f64)
}

pub fn full_grad(v: &[f64], ds: &Dataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ds.check_dim(v)?;
    let mut scratch = GradScratch::new(ds);
    let mut out = vec![0.0; ds.d];
    scratch.full_grad(v, ds, &mut out);
    Ok(out)
}

/// Reusable buffers for the full gradient, which runs once per step in the
/// full-batch engines.
#[derive(Clone, Debug)]
pub struct GradScratch {
    residuals: Vec<f64>,
}

impl GradScratch {
    pub fn new(ds: &Dataset) -> Self {
        GradScratch {
            residuals: vec![0.0; ds.n],
        }
    }

    /// Writes `∇L(v) = v ⊙ (Xᵀ r) / n` into `out`, returning the loss.
    pub fn full_grad(&mut self, v: &[f64], ds: &Dataset, out: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for i in 0..ds.n {
            let r = residual_unchecked(v, ds, i);
            self.residuals[i] = r;
            loss += r * r;
        }
        out.iter_mut().for_each(|g| *g = 0.0);
        for (i, &r) in self.residuals.iter().enumerate() {
            for (g, x) in out.iter_mut().zip(ds.row(i)) {
                *g += r * x;
            }
        }
        let inv_n = 1.0 / ds.n as f64;
        for (g, vk) in out.iter_mut().zip(v) {
            *g *= vk * inv_n;
        }
        0.25 * loss * inv_n
    }

    /// Residuals left behind by the last [`GradScratch::full_grad`] call.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

/// `‖v⊙² − v★⊙²‖₂²`, which equals the expected loss on a fresh Gaussian
/// example up to the factor ¼.
pub fn test_error(v: &[f64], vstar: &[f64]) -> Result<f64> {
    if v.len() != vstar.len() {
        return Err(Error::DimensionMismatch {
            expected: vstar.len(),
            got: v.len(),
        });
    }
    Ok(v.iter()
        .zip(vstar)
        .map(|(a, b)| {
            let e = a * a - b * b;
            e * e
        })
        .sum())
}

/// Empirical data-niceness quantities used by the stage bounds. Generated
/// rows have population second moments `E[x_k²] = 1` and no correlation;
/// these are the sample values, which is what the dynamics actually see.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// `max_i ‖x_i‖∞`.
    pub bx: f64,
    /// `min_k (1/n) Σ_i x_ik²`.
    pub min_second_moment: f64,
    /// `max_{j≠k} |(1/n) Σ_i x_ij x_ik|`; zero when `d = 1`.
    pub cross_corr: f64,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let d = ds.d;
    let inv_n = 1.0 / ds.n.max(1) as f64;
    let bx = linf(&ds.x);
    // Upper triangle (including the diagonal) of the empirical second-moment matrix.
    let mut gram = vec![0.0; d * d];
    for i in 0..ds.n {
        let row = ds.row(i);
        for j in 0..d {
            let xj = row[j];
            let g = &mut gram[j * d..(j + 1) * d];
            for k in j..d {
                g[k] += xj * row[k];
            }
        }
    }
    let mut min_second_moment = f64::INFINITY;
    let mut cross_corr: f64 = 0.0;
    for j in 0..d {
        min_second_moment = min_second_moment.min(gram[j * d + j] * inv_n);
        for k in j + 1..d {
            cross_corr = cross_corr.max((gram[j * d + k] * inv_n).abs());
        }
    }
    DatasetStats {
        bx,
        min_second_moment,
        cross_corr,
    }
}
