//! Alternating adversarial training at desk scale.
//!
//! Each generator step is preceded by `critic_steps` critic updates. Every
//! minibatch is drawn independently (with replacement across steps) from the
//! low-quality inputs and the high-quality targets, so the SGW term always
//! compares one generated batch with one unrelated real batch of equal size.
//! A fresh projection basis is drawn for every generator step.

mod config;
mod data;
mod eval;
mod report;

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use config::{Preset, TrainConfig};
pub use data::{class_label, class_separation, make_synthetic, DatasetSpec, SyntheticDataset};
pub use eval::{eval_options, evaluate_relational, relational_gw, ClassGw, EpsilonRule, RelationalEval, DEFAULT_EVAL_CAP};
pub use report::{parse_report, write_report, HISTORY_COLUMNS};

use crate::error::{Error, Result};
use crate::gw_sliced::{sample_basis, sgw, ProjectionBasis};
use crate::losses::{critic_loss, generator_loss, LossBreakdown};
use crate::nn::{adam_step_net, Activation, AdamState, DenseNet};
use crate::rng::SeededRng;

// Sub-stream tags of the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_PENALTY: u64 = 2;
const STREAM_PROJECTION: u64 = 3;
const STREAM_EVAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub sgw_to_target: f64,
    pub relational_gw: f64,
    pub class_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub history: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// SGW(low, high) before any training, on the evaluation basis.
    pub initial_sgw: f64,
    /// SGW(G(low), high) for the freshly initialized generator.
    pub initial_generator_sgw: f64,
    pub final_sgw: f64,
    pub final_relational: Option<RelationalEval>,
    pub eval_basis_seed: u64,
    pub eval_subsample_seed: u64,
    pub checkpoint: Option<PathBuf>,
}

/// Trained networks alongside the report.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub generator: DenseNet,
    pub critic: DenseNet,
}

pub fn init_generator(cfg: &TrainConfig, rng: &mut SeededRng) -> Result<DenseNet> {
    let d = cfg.dataset.dim;
    let mut dims = vec![d];
    dims.extend(std::iter::repeat_n(cfg.gen_hidden, cfg.gen_layers));
    dims.push(d);
    DenseNet::init(&dims, Activation::LeakyRelu, Activation::Identity, rng)
}

pub fn init_critic(cfg: &TrainConfig, rng: &mut SeededRng) -> Result<DenseNet> {
    let d = cfg.dataset.dim;
    let mut dims = vec![d];
    dims.extend(std::iter::repeat_n(cfg.critic_hidden, cfg.critic_layers));
    dims.push(1);
    DenseNet::init(&dims, Activation::LeakyRelu, Activation::Identity, rng)
}

fn draw_batch(set: &Array2<f64>, size: usize, rng: &mut SeededRng) -> Array2<f64> {
    let idx: Vec<usize> = (0..size).map(|_| rng.index(set.nrows())).collect();
    set.select(Axis(0), &idx)
}

fn eval_basis(cfg: &TrainConfig) -> Result<ProjectionBasis> {
    let seed = SeededRng::new(cfg.seed).child(STREAM_EVAL).child_seed(0);
    ProjectionBasis::from_seed(seed, cfg.eval_projections, cfg.dataset.dim)
}

fn eval_subsample_seed(cfg: &TrainConfig) -> u64 {
    SeededRng::new(cfg.seed).child(STREAM_EVAL).child_seed(1)
}

/// SGW between the restored low-quality set and the high-quality set. Both
/// sets have the same size by construction.
pub fn sgw_to_target(gen: &DenseNet, ds: &SyntheticDataset, basis: &ProjectionBasis) -> Result<f64> {
    let restored = ds.low.with_points(gen.predict(ds.low.points())?)?;
    Ok(sgw(&restored, &ds.high, basis)?.value)
}

fn snapshot(
    step: usize,
    gen: &DenseNet,
    ds: &SyntheticDataset,
    cfg: &TrainConfig,
    basis: &ProjectionBasis,
) -> Result<(Snapshot, RelationalEval)> {
    let restored = ds.low.with_points(gen.predict(ds.low.points())?)?;
    let rel = evaluate_relational(
        gen,
        &ds.low,
        &ds.high,
        EpsilonRule::ReferenceMedian(cfg.eval_epsilon_scale),
        cfg.eval_cap,
        eval_subsample_seed(cfg),
    )?;
    let snap = Snapshot {
        step,
        sgw_to_target: sgw(&restored, &ds.high, basis)?.value,
        relational_gw: rel.overall,
        class_separation: class_separation(&restored)?,
    };
    Ok((snap, rel))
}

/// Runs the alternating loop and evaluates the result. When
/// `checkpoint_dir` is given, the final generator and critic are written
/// there as `generator.ckpt` and `critic.ckpt`.
pub fn train(cfg: &TrainConfig, ds: &SyntheticDataset, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.low.dim() != cfg.dataset.dim || ds.high.dim() != cfg.dataset.dim {
        return Err(Error::InvalidConfig(format!(
            "dataset dimension {} does not match config dim {}",
            ds.low.dim(),
            cfg.dataset.dim
        )));
    }
    if ds.low.len() < cfg.batch_size || ds.high.len() < cfg.batch_size {
        return Err(Error::InvalidConfig("dataset smaller than one batch".into()));
    }
    let root = SeededRng::new(cfg.seed);
    let mut init_rng = root.child(STREAM_INIT);
    let mut batch_rng = root.child(STREAM_BATCH);
    let mut gp_rng = root.child(STREAM_PENALTY);
    let mut proj_rng = root.child(STREAM_PROJECTION);

    let mut gen = init_generator(cfg, &mut init_rng)?;
    let mut critic = init_critic(cfg, &mut init_rng)?;
    let mut gen_opt = AdamState::new(gen.num_params(), cfg.lr_gen, cfg.beta1, cfg.beta2, 1e-8);
    let mut critic_opt = AdamState::new(critic.num_params(), cfg.lr_critic, cfg.beta1, cfg.beta2, 1e-8);

    let basis = eval_basis(cfg)?;
    let initial_sgw = sgw(&ds.low, &ds.high, &basis)?.value;
    let initial_generator_sgw = sgw_to_target(&gen, ds, &basis)?;

    let low = ds.low.points();
    let high = ds.high.points();
    let total_steps = cfg.total_gen_steps(ds.low.len());
    let steps_per_epoch = cfg.steps_per_epoch(ds.low.len());
    let mut history = Vec::with_capacity(total_steps);
    let mut snapshots = Vec::new();

    for step in 0..total_steps {
        let mut breakdown = LossBreakdown::default();
        for _ in 0..cfg.critic_steps {
            let real = draw_batch(high, cfg.batch_size, &mut batch_rng);
            let input = draw_batch(low, cfg.batch_size, &mut batch_rng);
            let fake = gen.predict(&input)?;
            let c = critic_loss(&critic, &real, &fake, cfg.weights.gp_weight, &mut gp_rng)?;
            breakdown.critic_loss = c.base;
            breakdown.gp_term = c.penalty;
            if !c.value.is_finite() || !c.grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    breakdown: breakdown.to_string(),
                });
            }
            adam_step_net(&mut critic, &c.grads, &mut critic_opt)?;
        }

        let input = draw_batch(low, cfg.batch_size, &mut batch_rng);
        let real = draw_batch(high, cfg.batch_size, &mut batch_rng);
        let step_basis = sample_basis(&mut proj_rng, cfg.projections, cfg.dataset.dim)?;
        let g = generator_loss(&gen, &critic, &input, &real, &step_basis, &cfg.weights)?;
        breakdown.rmse_term = g.rmse;
        breakdown.sgw_term = g.sgw;
        breakdown.adv_term = g.adv;
        breakdown.total_generator = g.total;
        if !breakdown.is_finite() || !g.grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                breakdown: breakdown.to_string(),
            });
        }
        adam_step_net(&mut gen, &g.grads, &mut gen_opt)?;
        history.push(StepRecord { step, losses: breakdown });

        let done = step + 1;
        if cfg.snapshot_every > 0 && done % (cfg.snapshot_every * steps_per_epoch) == 0 && done < total_steps {
            snapshots.push(snapshot(done, &gen, ds, cfg, &basis)?.0);
        }
    }

    let (final_snapshot, final_relational) = snapshot(total_steps, &gen, ds, cfg, &basis)?;
    let final_sgw = final_snapshot.sgw_to_target;
    snapshots.push(final_snapshot);

    let checkpoint = match checkpoint_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let gpath = dir.join("generator.ckpt");
            gen.save(&gpath)?;
            critic.save(&dir.join("critic.ckpt"))?;
            Some(gpath)
        }
        None => None,
    };

    Ok(TrainOutcome {
        report: TrainReport {
            config: cfg.clone(),
            history,
            snapshots,
            initial_sgw,
            initial_generator_sgw,
            final_sgw,
            final_relational: Some(final_relational),
            eval_basis_seed: basis.seed(),
            eval_subsample_seed: eval_subsample_seed(cfg),
            checkpoint,
        },
        generator: gen,
        critic,
    })
}
