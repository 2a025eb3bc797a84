//! Per-class relational evaluation: entropic GW between the restored
//! low-quality points and the high-quality points of each class.


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, split_by_label, EmbeddingSet};
use crate::gw_exact::{gw_entropic_matrices, EntropicOptions};
use crate::nn::DenseNet;
use crate::rng::SeededRng;

pub const DEFAULT_EVAL_CAP: usize = 64;

/// How the entropic regularization is chosen for each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonRule {
    Fixed(f64),
    /// `scale * median(d^2)` of the reference (second) set of each pair.
    ReferenceMedian(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGw {
    pub label: String,
    pub value: f64,
    pub epsilon: f64,
    pub points: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalEval {
    pub per_class: Vec<ClassGw>,
    /// Mean of the per-class values weighted by class size.
    pub overall: f64,
    pub subsample_seed: u64,
    /// Labels present on only one side; they get no value.
    pub unmatched: Vec<String>,
}

impl RelationalEval {
    pub fn value(&self, label: &str) -> Option<f64> {
        self.per_class.iter().find(|c| c.label == label).map(|c| c.value)
    }
}

fn subsample(set: &EmbeddingSet, cap: usize, rng: &mut SeededRng) -> Result<EmbeddingSet> {
    if set.len() <= cap {
        return Ok(set.clone());
    }
    let mut idx = rng.sample_indices(set.len(), cap);
    idx.sort_unstable();
    set.select(&idx)
}

/// Entropic GW per shared label between two labeled sets. Each side of each
/// class is subsampled to at most `cap` points with streams derived from
/// `seed`.
pub fn relational_gw(
    source: &EmbeddingSet,
    reference: &EmbeddingSet,
    epsilon: EpsilonRule,
    cap: usize,
    seed: u64,
    opts: &EntropicOptions,
) -> Result<RelationalEval> {
    let src = split_by_label(source)?;
    let refs = split_by_label(reference)?;
    let root = SeededRng::new(seed);
    let mut per_class = Vec::new();
    let mut unmatched = Vec::new();
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    let labels: std::collections::BTreeSet<&String> = src.keys().chain(refs.keys()).collect();
    for (k, label) in labels.into_iter().enumerate() {
        let (Some(a), Some(b)) = (src.get(label), refs.get(label)) else {
            unmatched.push(label.clone());
            continue;
        };
        let mut rng = root.child(k as u64);
        let a_sub = subsample(a, cap, &mut rng)?;
        let b_sub = subsample(b, cap, &mut rng)?;
        let da = pairwise_distances(&a_sub);
        let db = pairwise_distances(&b_sub);
        let eps = match epsilon {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::ReferenceMedian(s) => s * db.median_squared(),
        };
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "class {label}: epsilon {eps} is not positive (degenerate reference set?)"
            )));
        }
        let res = gw_entropic_matrices(&da, &db, &EntropicOptions { epsilon: eps, ..*opts })?;
        let w = a.len() as f64;
        weighted += w * res.value;
        total_weight += w;
        per_class.push(ClassGw {
            label: label.clone(),
            value: res.value,
            epsilon: eps,
            points: a_sub.len(),
            converged: res.converged,
        });
    }
    let overall = if total_weight > 0.0 { weighted / total_weight } else { 0.0 };
    Ok(RelationalEval {
        per_class,
        overall,
        subsample_seed: seed,
        unmatched,
    })
}

/// Relational GW between `G(low)` and `high`, class by class.
pub fn evaluate_relational(
    gen: &DenseNet,
    low: &EmbeddingSet,
    high: &EmbeddingSet,
    epsilon: EpsilonRule,
    cap: usize,
    seed: u64,
) -> Result<RelationalEval> {
    let restored = low.with_points(gen.predict(low.points())?)?;
    relational_gw(&restored, high, epsilon, cap, seed, &eval_options())
}

/// Solver budget for training-time evaluation. The epsilon is overridden
/// per class.
pub fn eval_options() -> EntropicOptions {
    EntropicOptions {
        max_inner: 300,
        tol: 1e-7,
        ..EntropicOptions::new(1.0)
    }
}
