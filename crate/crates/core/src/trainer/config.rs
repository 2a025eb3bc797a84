//! Training configuration and its flat `key = value` file format.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Keys not
//! present keep the value of the chosen preset. Recognized keys, in the
//! order [`TrainConfig::to_kv`] writes them:
//!
//! ```text
//! epochs steps_per_epoch batch_size critic_steps lr_gen lr_critic beta1 beta2
//! lambda_rmse lambda_sgw lambda_adv gp_weight projections seed
//! gen_hidden gen_layers critic_hidden critic_layers snapshot_every
//! eval_projections eval_cap eval_epsilon_scale
//! dataset.classes dataset.dim dataset.per_class dataset.separation
//! dataset.cluster_std dataset.shrink_min dataset.shrink_max dataset.rotate
//! dataset.noise_std dataset.seed
//! ```
//!
//! `steps_per_epoch = 0` means one pass over the low-quality set
//! (`ceil(n / batch_size)` generator steps). `snapshot_every` counts epochs;
//! 0 evaluates only at the end.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::losses::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Minutes on one CPU: 2000 generator steps, `L = 32`.
    Desk,
    /// Published hyperparameters: 200 epochs, `L = 256`, learning rate 1e-5.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub critic_steps: usize,
    pub lr_gen: f64,
    pub lr_critic: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weights: LossWeights,
    pub projections: usize,
    pub seed: u64,
    pub gen_hidden: usize,
    pub gen_layers: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
    pub snapshot_every: usize,
    pub eval_projections: usize,
    pub eval_cap: usize,
    pub eval_epsilon_scale: f64,
    pub dataset: DatasetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            epochs: 40,
            steps_per_epoch: 50,
            batch_size: 16,
            critic_steps: 5,
            lr_gen: 1e-3,
            lr_critic: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            weights: LossWeights::default(),
            projections: 32,
            seed: 0,
            gen_hidden: 32,
            gen_layers: 1,
            critic_hidden: 32,
            critic_layers: 2,
            snapshot_every: 10,
            eval_projections: 256,
            eval_cap: 64,
            eval_epsilon_scale: 1e-2,
            dataset: DatasetSpec::default(),
        };
        match preset {
            Preset::Desk => desk,
            Preset::Paper => Self {
                epochs: 200,
                steps_per_epoch: 0,
                lr_gen: 1e-5,
                lr_critic: 1e-5,
                projections: 256,
                snapshot_every: 50,
                ..desk
            },
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        if self.steps_per_epoch > 0 {
            self.steps_per_epoch
        } else {
            n.div_ceil(self.batch_size.max(1))
        }
    }

    pub fn total_gen_steps(&self, n: usize) -> usize {
        self.epochs * self.steps_per_epoch(n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.critic_steps < 1 {
            return bad("critic_steps must be >= 1".into());
        }
        for (name, v) in [("lr_gen", self.lr_gen), ("lr_critic", self.lr_critic)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.projections < 1 || self.eval_projections < 1 {
            return bad("projections must be >= 1".into());
        }
        if self.gen_hidden < 1 || self.critic_hidden < 1 || self.critic_layers < 1 {
            return bad("hidden widths must be >= 1 and the critic needs a hidden layer".into());
        }
        if self.eval_cap < 2 || !(self.eval_epsilon_scale > 0.0) {
            return bad("eval_cap must be >= 2 and eval_epsilon_scale > 0".into());
        }
        self.weights.validate()?;
        self.dataset.validate()?;
        if self.dataset.per_class < self.batch_size {
            return bad(format!(
                "dataset.per_class ({}) must be >= batch_size ({})",
                self.dataset.per_class, self.batch_size
            ));
        }
        Ok(())
    }

    /// Every field as `key = value`, one per line, in documented order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.dataset;
        let w = &self.weights;
        vec![
            ("epochs", self.epochs.to_string()),
            ("steps_per_epoch", self.steps_per_epoch.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("critic_steps", self.critic_steps.to_string()),
            ("lr_gen", self.lr_gen.to_string()),
            ("lr_critic", self.lr_critic.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("lambda_rmse", w.lambda_rmse.to_string()),
            ("lambda_sgw", w.lambda_sgw.to_string()),
            ("lambda_adv", w.lambda_adv.to_string()),
            ("gp_weight", w.gp_weight.to_string()),
            ("projections", self.projections.to_string()),
            ("seed", self.seed.to_string()),
            ("gen_hidden", self.gen_hidden.to_string()),
            ("gen_layers", self.gen_layers.to_string()),
            ("critic_hidden", self.critic_hidden.to_string()),
            ("critic_layers", self.critic_layers.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("eval_projections", self.eval_projections.to_string()),
            ("eval_cap", self.eval_cap.to_string()),
            ("eval_epsilon_scale", self.eval_epsilon_scale.to_string()),
            ("dataset.classes", d.classes.to_string()),
            ("dataset.dim", d.dim.to_string()),
            ("dataset.per_class", d.per_class.to_string()),
            ("dataset.separation", d.separation.to_string()),
            ("dataset.cluster_std", d.cluster_std.to_string()),
            ("dataset.shrink_min", d.shrink_min.to_string()),
            ("dataset.shrink_max", d.shrink_max.to_string()),
            ("dataset.rotate", d.rotate.to_string()),
            ("dataset.noise_std", d.noise_std.to_string()),
            ("dataset.seed", d.seed.to_string()),
        ]
    }

    /// Applies one `key`/`value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
        }
        let d = &mut self.dataset;
        let w = &mut self.weights;
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "steps_per_epoch" => self.steps_per_epoch = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "critic_steps" => self.critic_steps = parse(key, value)?,
            "lr_gen" => self.lr_gen = parse(key, value)?,
            "lr_critic" => self.lr_critic = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "lambda_rmse" => w.lambda_rmse = parse(key, value)?,
            "lambda_sgw" => w.lambda_sgw = parse(key, value)?,
            "lambda_adv" => w.lambda_adv = parse(key, value)?,
            "gp_weight" => w.gp_weight = parse(key, value)?,
            "projections" => self.projections = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "gen_hidden" => self.gen_hidden = parse(key, value)?,
            "gen_layers" => self.gen_layers = parse(key, value)?,
            "critic_hidden" => self.critic_hidden = parse(key, value)?,
            "critic_layers" => self.critic_layers = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            "eval_projections" => self.eval_projections = parse(key, value)?,
            "eval_cap" => self.eval_cap = parse(key, value)?,
            "eval_epsilon_scale" => self.eval_epsilon_scale = parse(key, value)?,
            "dataset.classes" => d.classes = parse(key, value)?,
            "dataset.dim" => d.dim = parse(key, value)?,
            "dataset.per_class" => d.per_class = parse(key, value)?,
            "dataset.separation" => d.separation = parse(key, value)?,
            "dataset.cluster_std" => d.cluster_std = parse(key, value)?,
            "dataset.shrink_min" => d.shrink_min = parse(key, value)?,
            "dataset.shrink_max" => d.shrink_max = parse(key, value)?,
            "dataset.rotate" => d.rotate = parse(key, value)?,
            "dataset.noise_std" => d.noise_std = parse(key, value)?,
            "dataset.seed" => d.seed = parse(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Overlays the `key = value` lines of `text` on `self`.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str, preset: Preset) -> Result<Self> {
        let mut cfg = Self::preset(preset);
        cfg.apply_kv(text)?;
        Ok(cfg)
    }
}
