//! Synthetic low/high-quality domains.
//!
//! The high-quality domain is a mixture of `K` isotropic Gaussian clusters
//! in `R^d`. Each high-quality point is degraded into a low-quality point by
//! a fixed invertible linear map `A = R diag(s)` (random rotation `R`,
//! per-axis shrink factors `s`) plus isotropic Gaussian noise, which pulls
//! the clusters together and blurs their boundaries.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Standard deviation of the cluster centers around the origin.
    pub separation: f64,
    pub cluster_std: f64,
    pub shrink_min: f64,
    pub shrink_max: f64,
    pub rotate: bool,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            dim: 8,
            per_class: 300,
            separation: 3.0,
            cluster_std: 1.0,
            shrink_min: 0.35,
            shrink_max: 0.7,
            rotate: true,
            noise_std: 0.3,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidSpec(format!("need >= 2 classes, got {}", self.classes)));
        }
        if self.dim < 2 {
            return Err(Error::InvalidSpec(format!("need dim >= 2, got {}", self.dim)));
        }
        if self.per_class < 2 {
            return Err(Error::InvalidSpec(format!("need >= 2 points per class, got {}", self.per_class)));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.separation) || !finite_nonneg(self.cluster_std) || !finite_nonneg(self.noise_std) {
            return Err(Error::InvalidSpec("scales must be finite and >= 0".into()));
        }
        if !(self.shrink_min > 0.0 && self.shrink_min <= self.shrink_max && self.shrink_max.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "need 0 < shrink_min <= shrink_max, got {}..{}",
                self.shrink_min, self.shrink_max
            )));
        }
        Ok(())
    }

    /// A spec whose degradation is the identity with no noise.
    pub fn clean(mut self) -> Self {
        self.shrink_min = 1.0;
        self.shrink_max = 1.0;
        self.rotate = false;
        self.noise_std = 0.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub low: EmbeddingSet,
    pub high: EmbeddingSet,
    pub means: Array2<f64>,
    /// `A` in `low = high A^T + noise` (row-vector convention: `x A^T`).
    pub degradation: Array2<f64>,
}

impl SyntheticDataset {
    /// `A^{-1}` for the stored degradation.
    pub fn restoration(&self) -> Result<Array2<f64>> {
        invert(&self.degradation)
    }
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(d: usize, rng: &mut SeededRng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, d));
    let mut j = 0;
    while j < d {
        let mut v: Array1<f64> = Array1::from_shape_fn(d, |_| rng.normal());
        for k in 0..j {
            let col = q.column(k).to_owned();
            let proj = v.dot(&col);
            v.scaled_add(-proj, &col);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            q.column_mut(j).assign(&(v / norm));
            j += 1;
        }
    }
    q
}

/// Gauss-Jordan inverse with partial pivoting.
pub(crate) fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch("cannot invert a non-square matrix".into()));
    }
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
            .unwrap_or(c);
        if m[[pivot, c]].abs() < 1e-12 {
            return Err(Error::InvalidParameter("singular matrix".into()));
        }
        for k in 0..n {
            m.swap([c, k], [pivot, k]);
            inv.swap([c, k], [pivot, k]);
        }
        let p = m[[c, c]];
        for k in 0..n {
            m[[c, k]] /= p;
            inv[[c, k]] /= p;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[c, k]];
                        inv[[r, k]] -= f * inv[[c, k]];
                    }
                }
            }
        }
    }
    Ok(inv)
}

pub fn class_label(k: usize) -> String {
    format!("c{k}")
}

pub fn make_synthetic(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);
    let mut rng_means = root.child(0);
    let mut rng_points = root.child(1);
    let mut rng_map = root.child(2);
    let mut rng_noise = root.child(3);
    let (k, d) = (spec.classes, spec.dim);

    let means = Array2::from_shape_fn((k, d), |_| spec.separation * rng_means.normal());
    let n = k * spec.per_class;
    let mut high = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for i in 0..spec.per_class {
            let row = c * spec.per_class + i;
            for j in 0..d {
                high[[row, j]] = means[[c, j]] + spec.cluster_std * rng_points.normal();
            }
            labels.push(class_label(c));
        }
    }

    let scales: Vec<f64> = (0..d)
        .map(|_| rng_map.uniform_range(spec.shrink_min, spec.shrink_max))
        .collect();
    let rotation = if spec.rotate {
        random_rotation(d, &mut rng_map)
    } else {
        Array2::eye(d)
    };
    let mut degradation = rotation.clone();
    for (mut col, s) in degradation.columns_mut().into_iter().zip(&scales) {
        col *= *s;
    }
    let mut low = high.dot(&degradation.t());
    if spec.noise_std > 0.0 {
        low.mapv_inplace(|v| v + spec.noise_std * rng_noise.normal());
    }

    Ok(SyntheticDataset {
        spec: spec.clone(),
        low: EmbeddingSet::new(low, Some(labels.clone()))?,
        high: EmbeddingSet::new(high, Some(labels))?,
        means,
        degradation,
    })
}

/// Mean silhouette coefficient under Euclidean distance; 0 when fewer than
/// two classes are present.
pub fn class_separation(set: &EmbeddingSet) -> Result<f64> {
    let labels = set.labels().ok_or(Error::MissingLabels)?;
    let mut classes: Vec<&str> = labels.iter().map(String::as_str).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Ok(0.0);
    }
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(&l.as_str()).unwrap_or(0))
        .collect();
    let counts: Vec<usize> = (0..classes.len())
        .map(|c| class_of.iter().filter(|&&k| k == c).count())
        .collect();
    let pts = set.points();
    let n = set.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; classes.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                let d = pts
                    .row(i)
                    .iter()
                    .zip(pts.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[class_of[j]] += d;
            }
        }
        let own = class_of[i];
        if counts[own] < 2 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..classes.len())
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
