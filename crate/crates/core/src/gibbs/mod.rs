//! Geometry of the positive orthant against the data's orthocomplement, and
//! a numerical probe of the Gibbs partition function under Gaussian noise.
//!
//! In the coordinates `u = v ⊙ v` the loss depends on `u` only through `Xu`,
//! so it is constant on `u★ + X⊥`. When `X⊥` contains a strictly positive
//! direction `μ`, a cone of positive points around the ray `u★ + zμ` has
//! constant loss, and integrating the Gibbs density over that cone gives
//! partial integrals
//!
//! ```text
//! I(Z) = ∫₀^Z (2cz)^{d−n−1} ∏ᵢ (u★ᵢ + 2μᵢz)^{−1/2} dz,
//! ```
//!
//! which grow like `Z^{d/2−n}`.

mod quadrature;
pub mod simplex;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{complement_basis, row_space_basis};
use crate::model::Dataset;
use crate::rng::{self, Stream};
use crate::{Error, Result};

pub use quadrature::integrate;
use simplex::LpOutcome;

/// Smallest accepted `min_i μ_i / ‖μ‖₂` for a positive direction.
pub const MIN_MARGIN: f64 = 1e-10;
/// Per-panel relative tolerance of the partition-integral quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;

/// The data matrix `X` (`n × d`).
pub fn data_matrix(ds: &Dataset) -> DMatrix<f64> {
    DMatrix::from_row_slice(ds.len(), ds.dim(), ds.rows())
}

/// Orthonormal basis `A⊥` (`d × (d−n)`) of the subspace orthogonal to every
/// training input.
pub fn orthocomplement_basis(ds: &Dataset) -> Result<DMatrix<f64>> {
    complement_basis(&data_matrix(ds).transpose())
}

/// A strictly positive unit vector in a given subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveDirection {
    /// Unit ℓ₂ norm, every entry positive.
    pub mu: Vec<f64>,
    /// `min_i μ_i`.
    pub margin: f64,
}

/// Searches `span(A)` for a strictly positive vector. Returns `Ok(None)` when
/// the span meets the closed orthant only at the origin (or only with margin
/// below [`MIN_MARGIN`]).
pub fn find_positive_direction(a: &DMatrix<f64>) -> Result<Option<PositiveDirection>> {
    let normal = complement_basis(a)?;
    let Some(dir) = positive_direction_orthogonal_to(&normal)? else {
        return Ok(None);
    };
    // Project onto span(A) so that membership holds to rounding.
    let coeffs = a.transpose() * DMatrix::from_column_slice(a.nrows(), 1, &dir.mu);
    let projected = a * coeffs;
    Ok(normalize_positive(projected.as_slice()))
}

/// Searches the orthogonal complement of the columns of `normal` (an
/// orthonormal `d × n` matrix) for a strictly positive vector.
///
/// Solves `max t` over `μ = t𝟙 + s` with `s ≥ 0`, `t ≥ 0`, `Σ μ = 1` and
/// `normalᵀ μ = 0`; a positive optimum `t` is the margin of the ℓ₁-normalized
/// direction.
pub fn positive_direction_orthogonal_to(normal: &DMatrix<f64>) -> Result<Option<PositiveDirection>> {
    let (d, n) = normal.shape();
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rows = Vec::with_capacity(n + 1);
    for col in normal.column_iter() {
        let mut r = Vec::with_capacity(d + 1);
        r.push(col.sum());
        r.extend(col.iter());
        rows.push(r);
    }
    let mut norm_row = vec![1.0; d + 1];
    norm_row[0] = d as f64;
    rows.push(norm_row);
    let mut b = vec![0.0; n + 1];
    b[n] = 1.0;
    let mut c = vec![0.0; d + 1];
    c[0] = 1.0;
    let x = match simplex::solve(&rows, &b, &c)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Unbounded => return Err(Error::Solver("positive-direction program unbounded")),
    };
    if x[0].is_nan() || x[0] <= 0.0 {
        return Ok(None);
    }
    let mu: Vec<f64> = x[1..].iter().map(|s| x[0] + s).collect();
    let Some(dir) = normalize_positive(&mu) else {
        return Ok(None);
    };
    let m = DMatrix::from_column_slice(d, 1, &dir.mu);
    let residual = (normal.transpose() * m).amax();
    if residual > 1e-8 {
        return Err(Error::Solver("positive direction failed the orthogonality check"));
    }
    Ok(Some(dir))
}

fn normalize_positive(mu: &[f64]) -> Option<PositiveDirection> {
    let norm = libm::sqrt(mu.iter().map(|x| x * x).sum());
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    let mu: Vec<f64> = mu.iter().map(|x| x / norm).collect();
    let margin = mu.iter().copied().fold(f64::INFINITY, f64::min);
    (margin >= MIN_MARGIN).then_some(PositiveDirection { mu, margin })
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Statistical dimension of the positive orthant in `ℝᵈ`: `E‖Π₊(g)‖²` for
/// standard Gaussian `g`, whose exact value is `d/2`.
pub fn statistical_dimension_mc(d: usize, samples: u64, seed: u64) -> Result<McEstimate> {
    let mut rng = rng::stream(seed, rng::PROBE);
    statistical_dimension_with(d, samples, |g| {
        for x in g.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    })
}

/// [`statistical_dimension_mc`] with the Gaussian vectors supplied by `fill`.
pub fn statistical_dimension_with(
    d: usize,
    samples: u64,
    mut fill: impl FnMut(&mut [f64]),
) -> Result<McEstimate> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if samples < 100 {
        return Err(Error::InsufficientData {
            need: 100,
            have: samples as usize,
        });
    }
    let mut g = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        fill(&mut g);
        let p: f64 = g.iter().map(|&x| if x > 0.0 { x * x } else { 0.0 }).sum();
        sum += p;
        sum_sq += p * p;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        stderr: libm::sqrt(var / k),
        samples,
    })
}

/// Draws `n` Gaussian data rows in `ℝᵈ` from `rng` and reports whether
/// their orthocomplement, a uniformly random `(d−n)`-dimensional subspace,
/// contains a strictly positive vector.
pub fn random_subspace_hits_orthant(d: usize, n: usize, rng: &mut Stream) -> Result<bool> {
    if n >= d {
        return Err(Error::invalid("need n < d"));
    }
    let rows = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let normal = row_space_basis(&rows)?;
    Ok(positive_direction_orthogonal_to(&normal)?.is_some())
}

/// One trial of [`intersection_probability_mc`], on its own substream.
pub fn intersection_trial(d: usize, n: usize, seed: u64, trial: u64) -> Result<bool> {
    let mut rng = rng::stream(seed, rng::SUBSPACES + trial);
    random_subspace_hits_orthant(d, n, &mut rng)
}

/// Fraction of `trials` random `(d−n)`-dimensional subspaces that admit a
/// strictly positive vector.
pub fn intersection_probability_mc(d: usize, n: usize, trials: u64, seed: u64) -> Result<f64> {
    if trials < 10 {
        return Err(Error::InsufficientData {
            need: 10,
            have: trials as usize,
        });
    }
    let mut hits = 0u64;
    for trial in 0..trials {
        hits += u64::from(intersection_trial(d, n, seed, trial)?);
    }
    Ok(hits as f64 / trials as f64)
}

/// `c = min_i μ_i / ((d−n−1) · max_j |a_i^j|)`, with `rest` holding the
/// completion columns `a^{n+2}, …, a^d`. Every point `u★ + zμ + Σ_j e_j a^j`
/// with `z ≥ 0` and `|e_j| ≤ cz` then satisfies
/// `u★ ≤ u ≤ u★ + 2zμ` componentwise. `None` when there are no completion
/// columns (the cone degenerates to the ray).
pub fn cone_constant(mu: &[f64], rest: &DMatrix<f64>) -> Result<Option<f64>> {
    if rest.nrows() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            got: rest.nrows(),
        });
    }
    if let Some(index) = mu.iter().position(|&m| m.is_nan() || m <= 0.0) {
        return Err(Error::NegativeEntry {
            index,
            value: mu[index],
        });
    }
    let m = rest.ncols();
    if m == 0 {
        return Ok(None);
    }
    let c = mu
        .iter()
        .enumerate()
        .map(|(i, &mi)| {
            let worst = rest.row(i).amax();
            mi / (m as f64 * worst)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(Some(c))
}

/// The orthonormal frame `[data basis | μ | rest]` and the cone built on it.
#[derive(Clone, Debug)]
pub struct ConeGeometry {
    pub data_basis: DMatrix<f64>,
    pub direction: PositiveDirection,
    pub rest: DMatrix<f64>,
    pub cone_constant: Option<f64>,
}

/// Builds [`ConeGeometry`] for a dataset, or `None` when `X⊥` has no strictly
/// positive direction.
pub fn cone_geometry(ds: &Dataset) -> Result<Option<ConeGeometry>> {
    let data_basis = row_space_basis(&data_matrix(ds))?;
    let perp = complement_basis(&data_basis)?;
    let Some(direction) = find_positive_direction(&perp)? else {
        return Ok(None);
    };
    let (d, n) = data_basis.shape();
    let mut frame = DMatrix::zeros(d, n + 1);
    frame.view_mut((0, 0), (d, n)).copy_from(&data_basis);
    frame.set_column(n, &nalgebra::DVector::from_column_slice(&direction.mu));
    let rest = complement_basis(&frame)?;
    let cone_constant = cone_constant(&direction.mu, &rest)?;
    Ok(Some(ConeGeometry {
        data_basis,
        direction,
        rest,
        cone_constant,
    }))
}

/// Result of [`partition_divergence_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeProbeReport {
    pub d: usize,
    pub n: usize,
    /// Unit positive direction in `X⊥`, absent when none exists.
    pub mu: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub cone_constant: Option<f64>,
    /// `(Z, I(Z))` on the requested grid.
    pub partial_integrals: Vec<(f64, f64)>,
    /// Least-squares slope of `log I` against `log Z` over the top decade.
    pub fitted_slope: Option<f64>,
    /// `d/2 − n`.
    pub theoretical_slope: f64,
}

impl ConeProbeReport {
    /// Partial integrals keep growing polynomially. Divergent cases have
    /// slope at least 1/2, convergent ones tend to 0.
    pub fn diverges(&self) -> bool {
        self.fitted_slope.is_some_and(|s| s > 0.25)
    }
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
        return Err(Error::invalid("log grid needs 0 < lo < hi and at least two points"));
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    Ok((0..points)
        .map(|k| {
            if k + 1 == points {
                hi
            } else {
                libm::exp(a + (b - a) * k as f64 / (points - 1) as f64)
            }
        })
        .collect())
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `log I(Z)` for each `Z` in the increasing grid `z_grid`. `cone_dim` is
/// `d−n−1` and `c` the cone constant (ignored when `cone_dim` is 0).
pub fn log_partial_integrals(
    u_star: &[f64],
    mu: &[f64],
    cone_dim: usize,
    c: f64,
    z_grid: &[f64],
) -> Result<Vec<f64>> {
    let log_f = |z: f64| -> f64 {
        let cone = if cone_dim == 0 {
            0.0
        } else {
            cone_dim as f64 * libm::log(2.0 * c * z)
        };
        let tail: f64 = u_star
            .iter()
            .zip(mu)
            .map(|(&u, &m)| libm::log(u + 2.0 * m * z))
            .sum();
        cone - 0.5 * tail
    };
    // Log-spaced panels of ratio at most 2 keep the integrand's dynamic
    // range per panel bounded; the first panel starts far below the grid.
    let mut edges = vec![0.0];
    let mut z = z_grid[0] * libm::exp2(-40.0);
    while z < z_grid[0] {
        edges.push(z);
        z *= 2.0;
    }
    let mut marks = Vec::with_capacity(z_grid.len());
    for (k, &zk) in z_grid.iter().enumerate() {
        if k > 0 {
            let mut z = z_grid[k - 1] * 2.0;
            while z < zk {
                edges.push(z);
                z *= 2.0;
            }
        }
        edges.push(zk);
        marks.push(edges.len() - 1);
    }
    let mut out = Vec::with_capacity(z_grid.len());
    let mut total = f64::NEG_INFINITY;
    let mut next_mark = 0;
    for i in 1..edges.len() {
        let (lo, hi) = (edges[i - 1], edges[i]);
        let shift = log_f(hi).max(log_f(0.5 * (lo + hi))).max(if lo > 0.0 {
            log_f(lo)
        } else {
            f64::NEG_INFINITY
        });
        let piece = integrate(|z| libm::exp(log_f(z) - shift), lo, hi, QUAD_REL_TOL)?;
        if piece > 0.0 {
            total = log_add(total, shift + libm::log(piece));
        }
        if marks[next_mark] == i {
            out.push(total);
            next_mark += 1;
        }
    }
    Ok(out)
}

/// Least-squares slope of `log I` on `log Z` over points with
/// `Z ≥ Z_max / 10`.
pub fn top_decade_slope(z_grid: &[f64], log_i: &[f64]) -> Result<f64> {
    let z_max = z_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<(f64, f64)> = z_grid
        .iter()
        .zip(log_i)
        .filter(|(&z, _)| z >= z_max / 10.0 * (1.0 - 1e-12))
        .map(|(&z, &l)| (libm::log(z), l))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData {
            need: 2,
            have: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Builds the cone on `u★ + X⊥` and integrates the Gibbs density over it up
/// to each `Z` in `z_grid`. `u_star` defaults to `μ` itself.
pub fn partition_divergence_probe(
    ds: &Dataset,
    u_star: Option<&[f64]>,
    z_grid: &[f64],
) -> Result<ConeProbeReport> {
    let (d, n) = (ds.dim(), ds.len());
    if z_grid.is_empty()
        || z_grid[0] <= 0.0
        || z_grid.windows(2).any(|w| w[0].is_nan() || w[1].is_nan() || w[1] <= w[0])
        || !z_grid[z_grid.len() - 1].is_finite()
    {
        return Err(Error::invalid("Z grid must be positive and strictly increasing"));
    }
    if let Some(u) = u_star {
        if u.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: u.len(),
            });
        }
        if let Some(index) = u.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::NegativeEntry {
                index,
                value: u[index],
            });
        }
    }
    let mut report = ConeProbeReport {
        d,
        n,
        mu: None,
        margin: None,
        cone_constant: None,
        partial_integrals: Vec::new(),
        fitted_slope: None,
        theoretical_slope: d as f64 / 2.0 - n as f64,
    };
    let Some(geom) = cone_geometry(ds)? else {
        return Ok(report);
    };
    let mu = &geom.direction.mu;
    let u_star = u_star.unwrap_or(mu.as_slice());
    let cone_dim = geom.rest.ncols();
    let log_i = log_partial_integrals(
        u_star,
        mu,
        cone_dim,
        geom.cone_constant.unwrap_or(1.0),
        z_grid,
    )?;
    report.fitted_slope = top_decade_slope(z_grid, &log_i).ok();
    report.partial_integrals = z_grid
        .iter()
        .zip(&log_i)
        .map(|(&z, &l)| (z, libm::exp(l)))
        .collect();
    report.margin = Some(geom.direction.margin);
    report.cone_constant = geom.cone_constant;
    report.mu = Some(geom.direction.mu);
    Ok(report)
}
