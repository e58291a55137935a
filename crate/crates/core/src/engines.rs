//! One optimization step for each update rule.
//!
//! Every engine maps `(v, dataset, η, stream)` to the next iterate. Draw
//! order within a step is fixed: example indices first (`i`, then `j` for the
//! mini-batch simulation), then the label-noise sign, then Gaussian variates
//! in coordinate order. Plain SGD draws and discards a sign so that its
//! stream stays aligned with label noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{residual_unchecked, Dataset, GradScratch, ParamVector};
use crate::rng::Stream;
use crate::{Error, Result};

/// An iterate with an entry above this magnitude is treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Scale of the spherical Gaussian noise: either the per-coordinate standard
/// deviation `σ` of the noise added to the gradient, or the Langevin inverse
/// temperature `λ`, related by `σ = √(2/(λη))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianScale {
    Sigma(f64),
    Lambda(f64),
}

impl GaussianScale {
    /// Canonical `σ` at learning rate `eta`.
    pub fn sigma(&self, eta: f64) -> f64 {
        match *self {
            GaussianScale::Sigma(s) => s,
            GaussianScale::Lambda(lambda) => libm::sqrt(2.0 / (lambda * eta)),
        }
    }
}

/// Which update rule to run, with its noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Full-batch gradient descent.
    Gd,
    /// Single uniformly sampled example, no label noise.
    #[serde(rename = "sgd")]
    PlainSgd,
    /// Label perturbation `s ∈ {±δ}` on a sampled example. With
    /// `full_batch` the perturbation is added to the full gradient instead
    /// of replacing it with the single-example gradient.
    LabelNoise {
        delta: f64,
        #[serde(default)]
        full_batch: bool,
    },
    /// Full gradient plus `δ(∇ℓ_i − ∇ℓ_j)` for independent uniform `i, j`.
    #[serde(rename = "minibatch")]
    MiniBatchSim { delta: f64 },
    /// Full gradient step plus spherical Gaussian noise.
    Gaussian {
        #[serde(flatten)]
        scale: GaussianScale,
    },
}

impl NoiseSpec {
    pub fn label_noise(delta: f64) -> Self {
        NoiseSpec::LabelNoise {
            delta,
            full_batch: false,
        }
    }

    pub fn gaussian_sigma(sigma: f64) -> Self {
        NoiseSpec::Gaussian {
            scale: GaussianScale::Sigma(sigma),
        }
    }

    pub fn gaussian_lambda(lambda: f64) -> Self {
        NoiseSpec::Gaussian {
            scale: GaussianScale::Lambda(lambda),
        }
    }

    /// Short name used for directory layout and reports.
    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::Gd => "gd",
            NoiseSpec::PlainSgd => "sgd",
            NoiseSpec::LabelNoise { .. } => "label_noise",
            NoiseSpec::MiniBatchSim { .. } => "minibatch",
            NoiseSpec::Gaussian { .. } => "gaussian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, x: f64, strict: bool| {
            if !x.is_finite() || x < 0.0 || (strict && x == 0.0) {
                Err(Error::invalid(alloc::format!(
                    "{name} must be finite and {}, got {x}",
                    if strict { "positive" } else { "nonnegative" }
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            NoiseSpec::Gd | NoiseSpec::PlainSgd => Ok(()),
            NoiseSpec::LabelNoise { delta, .. } | NoiseSpec::MiniBatchSim { delta } => {
                check("delta", delta, false)
            }
            NoiseSpec::Gaussian {
                scale: GaussianScale::Sigma(s),
            } => check("sigma", s, false),
            NoiseSpec::Gaussian {
                scale: GaussianScale::Lambda(l),
            } => check("lambda", l, true),
        }
    }

    fn uses_full_gradient(&self) -> bool {
        match self {
            NoiseSpec::Gd | NoiseSpec::MiniBatchSim { .. } | NoiseSpec::Gaussian { .. } => true,
            NoiseSpec::LabelNoise { full_batch, .. } => *full_batch,
            NoiseSpec::PlainSgd => false,
        }
    }
}

/// Learning rate and random stream for one step.
pub struct StepContext<'a> {
    pub eta: f64,
    pub rng: &'a mut Stream,
}

/// Random choices made by the most recent step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Draws {
    pub example: Option<usize>,
    pub partner: Option<usize>,
    pub sign: Option<f64>,
}

/// A stateful stepper holding scratch buffers for one trajectory.
#[derive(Clone, Debug)]
pub struct Engine {
    spec: NoiseSpec,
    scratch: GradScratch,
    grad: Vec<f64>,
    last_loss: Option<f64>,
    draws: Draws,
}

impl Engine {
    pub fn new(spec: NoiseSpec, ds: &Dataset) -> Result<Self> {
        spec.validate()?;
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Engine {
            spec,
            scratch: GradScratch::new(ds),
            grad: vec![0.0; ds.dim()],
            last_loss: None,
            draws: Draws::default(),
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn draws(&self) -> Draws {
        self.draws
    }

    /// Training loss at the iterate before the last step, when the engine
    /// computed the full gradient.
    pub fn loss_before_last_step(&self) -> Option<f64> {
        self.last_loss
    }

    /// Updates `v` in place. Returns `false` when the new iterate is
    /// non-finite or exceeds [`DIVERGENCE_LIMIT`].
    pub fn step(&mut self, v: &mut [f64], ds: &Dataset, eta: f64, rng: &mut Stream) -> bool {
        debug_assert_eq!(v.len(), ds.dim());
        let n = ds.len();
        self.draws = Draws::default();
        self.last_loss = None;
        if self.spec.uses_full_gradient() {
            self.last_loss = Some(self.scratch.full_grad(v, ds, &mut self.grad));
        }
        match self.spec {
            NoiseSpec::Gd => {
                for (vk, g) in v.iter_mut().zip(&self.grad) {
                    *vk -= eta * g;
                }
            }
            NoiseSpec::PlainSgd | NoiseSpec::LabelNoise { .. } => {
                let delta = match self.spec {
                    NoiseSpec::LabelNoise { delta, .. } => delta,
                    _ => 0.0,
                };
                let i = rng.random_range(0..n);
                let s = if rng.random::<bool>() { delta } else { -delta };
                self.draws.example = Some(i);
                if matches!(self.spec, NoiseSpec::LabelNoise { .. }) {
                    self.draws.sign = Some(s);
                }
                let x = ds.row(i);
                if self.spec.uses_full_gradient() {
                    // ∇L plus the label-noise perturbation −s·x_i⊙v.
                    for ((vk, g), xk) in v.iter_mut().zip(&self.grad).zip(x) {
                        *vk = *vk - eta * g + eta * s * xk * *vk;
                    }
                } else {
                    let r = residual_unchecked(v, ds, i);
                    for (vk, xk) in v.iter_mut().zip(x) {
                        *vk = *vk - eta * r * xk * *vk + eta * s * xk * *vk;
                    }
                }
            }
            NoiseSpec::MiniBatchSim { delta } => {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                self.draws.example = Some(i);
                self.draws.partner = Some(j);
                let res = self.scratch.residuals();
                let (ri, rj) = (res[i], res[j]);
                let (xi, xj) = (ds.row(i), ds.row(j));
                for (k, vk) in v.iter_mut().enumerate() {
                    let noise = delta * (ri * xi[k] * *vk - rj * xj[k] * *vk);
                    *vk -= eta * (self.grad[k] + noise);
                }
            }
            NoiseSpec::Gaussian { scale } => {
                let sigma = scale.sigma(eta);
                for (vk, g) in v.iter_mut().zip(&self.grad) {
                    let xi: f64 = rng.sample(StandardNormal);
                    *vk = *vk - eta * g + eta * sigma * xi;
                }
            }
        }
        !diverged(v)
    }
}

pub fn diverged(v: &[f64]) -> bool {
    v.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)
}

fn one_step(spec: NoiseSpec, v: &ParamVector, ds: &Dataset, ctx: StepContext<'_>) -> Result<ParamVector> {
    if v.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: v.dim(),
        });
    }
    if !ctx.eta.is_finite() || ctx.eta < 0.0 {
        return Err(Error::invalid("learning rate must be finite and nonnegative"));
    }
    let mut engine = Engine::new(spec, ds)?;
    let mut next = v.clone();
    if engine.step(&mut next, ds, ctx.eta, ctx.rng) {
        Ok(next)
    } else {
        Err(Error::Diverged)
    }
}

/// `v − η∇L(v)`.
pub fn step_gd(v: &ParamVector, ds: &Dataset, ctx: StepContext<'_>) -> Result<ParamVector> {
    one_step(NoiseSpec::Gd, v, ds, ctx)
}

/// Single-example SGD step on a uniformly sampled example.
pub fn step_plain_sgd(v: &ParamVector, ds: &Dataset, ctx: StepContext<'_>) -> Result<ParamVector> {
    one_step(NoiseSpec::PlainSgd, v, ds, ctx)
}

/// `v − η(r_i − s) x_i ⊙ v` with `i` uniform and `s` uniform on `{±δ}`.
pub fn step_label_noise(
    v: &ParamVector,
    ds: &Dataset,
    ctx: StepContext<'_>,
    delta: f64,
) -> Result<ParamVector> {
    one_step(NoiseSpec::label_noise(delta), v, ds, ctx)
}

/// `v − η[∇L(v) + δ(∇ℓ_i(v) − ∇ℓ_j(v))]`.
pub fn step_minibatch_sim(
    v: &ParamVector,
    ds: &Dataset,
    ctx: StepContext<'_>,
    delta: f64,
) -> Result<ParamVector> {
    one_step(NoiseSpec::MiniBatchSim { delta }, v, ds, ctx)
}

/// `v − η∇L(v) + ησξ` with `ξ ~ N(0, I)`.
pub fn step_gaussian(
    v: &ParamVector,
    ds: &Dataset,
    ctx: StepContext<'_>,
    sigma: f64,
) -> Result<ParamVector> {
    one_step(NoiseSpec::gaussian_sigma(sigma), v, ds, ctx)
}

/// Label-noise update with the example and sign fixed, for enumerating the
/// noise distribution.
pub fn label_noise_update(v: &[f64], ds: &Dataset, eta: f64, i: usize, s: f64) -> Result<Vec<f64>> {
    let x = ds.example(i)?;
    let r = residual_unchecked(v, ds, i);
    Ok(v.iter()
        .zip(x)
        .map(|(vk, xk)| vk - eta * r * xk * vk + eta * s * xk * vk)
        .collect())
}

/// The injected mini-batch noise `δ(∇ℓ_i(v) − ∇ℓ_j(v))` for a fixed pair.
pub fn minibatch_noise(v: &[f64], ds: &Dataset, delta: f64, i: usize, j: usize) -> Result<Vec<f64>> {
    let (xi, xj) = (ds.example(i)?, ds.example(j)?);
    let ri = residual_unchecked(v, ds, i);
    let rj = residual_unchecked(v, ds, j);
    Ok((0..v.len())
        .map(|k| delta * (ri * xi[k] * v[k] - rj * xj[k] * v[k]))
        .collect())
}
