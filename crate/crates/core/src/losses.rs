//! Training objectives.
//!
//! The critic minimizes `-(E[D(real)] - E[D(fake)]) + gp_weight * GP`. The
//! generator minimizes `l_rmse * L_rmse + l_sgw * L_sgw + l_adv * L_adv` with
//!
//! * `L_rmse = E ||G(x) - x||^2` (a mean squared norm; no root is taken),
//! * `L_sgw = SGW^2(G(X), Y)` over a freshly sampled projection basis,
//! * `L_adv = -E[D(G(x))]`.
//!
//! Each term is available on raw generator outputs (`*_term`, returning the
//! value and its gradient with respect to the outputs) and on a generator
//! network (returning parameter gradients).

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gw_sliced::{sample_basis, sgw_with_gradient, ProjectionBasis};
use crate::nn::{grad_penalty, DenseNet, ParamGrads};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_rmse: f64,
    pub lambda_sgw: f64,
    pub lambda_adv: f64,
    pub gp_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rmse: 100.0,
            lambda_sgw: 1000.0,
            lambda_adv: 1.0,
            gp_weight: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rmse", self.lambda_rmse),
            ("lambda_sgw", self.lambda_sgw),
            ("lambda_adv", self.lambda_adv),
            ("gp_weight", self.gp_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-term values for one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub critic_loss: f64,
    pub gp_term: f64,
    pub rmse_term: f64,
    pub sgw_term: f64,
    pub adv_term: f64,
    pub total_generator: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.critic_loss,
            self.gp_term,
            self.rmse_term,
            self.sgw_term,
            self.adv_term,
            self.total_generator,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "critic={} gp={} rmse={} sgw={} adv={} total={}",
            self.critic_loss, self.gp_term, self.rmse_term, self.sgw_term, self.adv_term, self.total_generator
        )
    }
}

pub fn total_generator_loss(w: &LossWeights, rmse: f64, sgw: f64, adv: f64) -> f64 {
    w.lambda_rmse * rmse + w.lambda_sgw * sgw + w.lambda_adv * adv
}

/// A loss value together with its gradient with respect to some matrix
/// (generator outputs or critic inputs, depending on context).
#[derive(Debug, Clone)]
pub struct TermGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    /// `base + gp_weight * penalty`.
    pub value: f64,
    pub base: f64,
    pub penalty: f64,
    pub grads: ParamGrads,
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Critic objective in minimization form. `fake` is treated as a constant.
pub fn critic_loss(critic: &DenseNet, real: &Array2<f64>, fake: &Array2<f64>, gp_weight: f64, rng: &mut SeededRng) -> Result<CriticLoss> {
    check_same_shape(real, fake)?;
    let n = real.nrows() as f64;
    let mut tape_r = critic.forward(real)?;
    let mut tape_f = critic.forward(fake)?;
    let base = -(tape_r.output().mean().unwrap_or(0.0) - tape_f.output().mean().unwrap_or(0.0));
    let g_r = critic.backward(&mut tape_r, &Array2::from_elem((real.nrows(), 1), -1.0 / n))?;
    let g_f = critic.backward(&mut tape_f, &Array2::from_elem((fake.nrows(), 1), 1.0 / n))?;
    let gp = grad_penalty(critic, real, fake, rng)?;
    let mut grads = g_r.params;
    grads.add_scaled(1.0, &g_f.params);
    grads.add_scaled(gp_weight, &gp.grads);
    Ok(CriticLoss {
        value: base + gp_weight * gp.penalty,
        base,
        penalty: gp.penalty,
        grads,
    })
}

/// `mean_b ||out_b - input_b||^2` and its gradient in `out`.
pub fn rmse_term(output: &Array2<f64>, input: &Array2<f64>) -> Result<TermGrad> {
    if output.dim() != input.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generator output {:?} vs input {:?}",
            output.dim(),
            input.dim()
        )));
    }
    let n = output.nrows() as f64;
    let diff = output - input;
    let value = diff.iter().map(|v| v * v).sum::<f64>() / n;
    Ok(TermGrad {
        value,
        grad: diff * (2.0 / n),
    })
}

/// `SGW^2(output, real)` over `basis` and its frozen-matching gradient.
pub fn sgw_term(output: &Array2<f64>, real: &Array2<f64>, basis: &ProjectionBasis) -> Result<TermGrad> {
    let (res, grad) = sgw_with_gradient(output, real, basis)?;
    Ok(TermGrad { value: res.value, grad })
}

/// `-mean D(output)` and its gradient in `output`; critic parameters fixed.
pub fn adv_term(critic: &DenseNet, output: &Array2<f64>) -> Result<TermGrad> {
    if critic.output_dim() != 1 {
        return Err(Error::ShapeMismatch("critic must have a scalar output".into()));
    }
    let n = output.nrows() as f64;
    let mut tape = critic.forward(output)?;
    let value = -tape.output().mean().unwrap_or(0.0);
    let g = critic.backward(&mut tape, &Array2::from_elem((output.nrows(), 1), -1.0 / n))?;
    Ok(TermGrad { value, grad: g.input })
}

/// Value of a generator loss and its parameter gradient.
#[derive(Debug, Clone)]
pub struct GeneratorTerm {
    pub value: f64,
    pub grads: ParamGrads,
}

fn through_generator(gen: &DenseNet, input: &Array2<f64>, term: impl FnOnce(&Array2<f64>) -> Result<TermGrad>) -> Result<GeneratorTerm> {
    let mut tape = gen.forward(input)?;
    let t = term(tape.output())?;
    let g = gen.backward(&mut tape, &t.grad)?;
    Ok(GeneratorTerm {
        value: t.value,
        grads: g.params,
    })
}

pub fn rmse_loss(gen: &DenseNet, input: &Array2<f64>) -> Result<GeneratorTerm> {
    if gen.input_dim() != gen.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "generator maps {} -> {}",
            gen.input_dim(),
            gen.output_dim()
        )));
    }
    through_generator(gen, input, |out| rmse_term(out, input))
}

/// Samples a fresh basis of `l` directions from `rng`.
pub fn sgw_loss(gen: &DenseNet, input: &Array2<f64>, real: &Array2<f64>, rng: &mut SeededRng, l: usize) -> Result<GeneratorTerm> {
    if input.nrows() != real.nrows() {
        return Err(Error::SizeMismatch(format!("{} inputs vs {} real samples", input.nrows(), real.nrows())));
    }
    let basis = sample_basis(rng, l, real.ncols())?;
    through_generator(gen, input, |out| sgw_term(out, real, &basis))
}

pub fn adv_loss(critic: &DenseNet, gen: &DenseNet, input: &Array2<f64>) -> Result<GeneratorTerm> {
    if gen.output_dim() != critic.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "generator output dim {} vs critic input dim {}",
            gen.output_dim(),
            critic.input_dim()
        )));
    }
    through_generator(gen, input, |out| adv_term(critic, out))
}

/// All three generator terms from one forward/backward pass.
#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub rmse: f64,
    pub sgw: f64,
    pub adv: f64,
    pub total: f64,
    pub grads: ParamGrads,
}

pub fn generator_loss(
    gen: &DenseNet,
    critic: &DenseNet,
    input: &Array2<f64>,
    real: &Array2<f64>,
    basis: &ProjectionBasis,
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    let mut tape = gen.forward(input)?;
    let out = tape.output().clone();
    let rmse = rmse_term(&out, input)?;
    let sgw = sgw_term(&out, real, basis)?;
    let adv = adv_term(critic, &out)?;
    let mut grad = rmse.grad * weights.lambda_rmse;
    grad.scaled_add(weights.lambda_adv, &adv.grad);
    if weights.lambda_sgw != 0.0 {
        grad.scaled_add(weights.lambda_sgw, &sgw.grad);
    }
    let g = gen.backward(&mut tape, &grad)?;
    Ok(GeneratorLoss {
        rmse: rmse.value,
        sgw: sgw.value,
        adv: adv.value,
        total: total_generator_loss(weights, rmse.value, sgw.value, adv.value),
        grads: g.params,
    })
}
