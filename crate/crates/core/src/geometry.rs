//! Finite metric-measure spaces: point sets with uniform weights, their
//! Euclidean distance matrices, and couplings between two of them.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// `n` points in `R^d` with uniform weights `1/n` and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    points: Array2<f64>,
    labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(points: Array2<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidSet(format!("empty set ({n}x{d})")));
        }
        if let Some((idx, _)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSet(format!(
                "non-finite coordinate at row {}, column {}",
                idx / d,
                idx % d
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidSet(format!(
                    "{} labels for {} points",
                    l.len(),
                    n
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn unlabeled(points: Array2<f64>) -> Result<Self> {
        Self::new(points, None)
    }

    /// Build from row vectors; convenient in tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidSet("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::InvalidSet(e.to_string()))?;
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn weights(&self) -> Array1<f64> {
        Array1::from_elem(self.len(), self.weight())
    }

    /// Rows `idx` (labels follow).
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let points = self.points.select(Axis(0), idx);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i].clone()).collect());
        Self::new(points, labels)
    }

    /// Same labels, new coordinates.
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self> {
        Self::new(points, self.labels.clone())
    }

    /// Every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "offset of length {} for d = {}",
                offset.len(),
                self.dim()
            )));
        }
        let off = ArrayView1::from(offset);
        let points = &self.points + &off;
        self.with_points(points)
    }
}

/// Symmetric, nonnegative, zero-diagonal matrix of intra-set distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    /// Validates the distance-matrix invariants.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix must be square, got {n}x{m}"
            )));
        }
        for i in 0..n {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 || v != values[[j, i]] {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i},{j}) = {v} breaks symmetry/nonnegativity"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Median of the squared off-diagonal entries (0 for a single point).
    pub fn median_squared(&self) -> f64 {
        let n = self.len();
        let mut sq: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.values[[i, j]].powi(2))
            .collect();
        if sq.is_empty() {
            return 0.0;
        }
        sq.sort_by(f64::total_cmp);
        let mid = sq.len() / 2;
        if sq.len() % 2 == 1 {
            sq[mid]
        } else {
            0.5 * (sq[mid - 1] + sq[mid])
        }
    }
}

/// Euclidean distance matrix of `set`.
pub fn pairwise_distances(set: &EmbeddingSet) -> DistanceMatrix {
    let n = set.len();
    let pts = set.points();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pts
                .row(i)
                .iter()
                .zip(pts.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    DistanceMatrix { values }
}

/// Nonnegative `n x m` transport plan together with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

pub const MARGINAL_TOL: f64 = 1e-9;

impl Coupling {
    /// Checks nonnegativity and that the plan's sums match the marginals
    /// within [`MARGINAL_TOL`].
    pub fn new(plan: Array2<f64>, row_marginal: Array1<f64>, col_marginal: Array1<f64>) -> Result<Self> {
        let (n, m) = plan.dim();
        if row_marginal.len() != n || col_marginal.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "plan {n}x{m} with marginals of length {} and {}",
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if plan.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParameter("negative or non-finite plan entry".into()));
        }
        let rows = plan.sum_axis(Axis(1));
        let cols = plan.sum_axis(Axis(0));
        let bad_rows = rows
            .iter()
            .zip(row_marginal.iter())
            .any(|(a, b)| (a - b).abs() > MARGINAL_TOL);
        let bad_cols = cols
            .iter()
            .zip(col_marginal.iter())
            .any(|(a, b)| (a - b).abs() > MARGINAL_TOL);
        if bad_rows || bad_cols || (plan.sum() - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::InvalidParameter("plan does not match its marginals".into()));
        }
        Ok(Self {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    /// Plan without marginal validation; marginals are read off the plan.
    pub(crate) fn from_plan_unchecked(plan: Array2<f64>) -> Self {
        let row_marginal = plan.sum_axis(Axis(1));
        let col_marginal = plan.sum_axis(Axis(0));
        Self {
            plan,
            row_marginal,
            col_marginal,
        }
    }

    /// Uniform product coupling `1/(n m)`.
    pub fn independent(n: usize, m: usize) -> Self {
        let plan = Array2::from_elem((n, m), 1.0 / (n * m) as f64);
        Self {
            plan,
            row_marginal: Array1::from_elem(n, 1.0 / n as f64),
            col_marginal: Array1::from_elem(m, 1.0 / m as f64),
        }
    }

    /// `plan[i][perm[i]] = 1/n`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let w = 1.0 / n as f64;
        let mut plan = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            plan[[i, j]] = w;
        }
        Self {
            plan,
            row_marginal: Array1::from_elem(n, w),
            col_marginal: Array1::from_elem(n, w),
        }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn row_marginal(&self) -> &Array1<f64> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Array1<f64> {
        &self.col_marginal
    }

    pub fn dim(&self) -> (usize, usize) {
        self.plan.dim()
    }

    /// Largest deviation of the plan's row/column sums from its marginals.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.plan.sum_axis(Axis(1));
        let cols = self.plan.sum_axis(Axis(0));
        let r = rows
            .iter()
            .zip(self.row_marginal.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = cols
            .iter()
            .zip(self.col_marginal.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// Partition a labeled set by label. Labels are ordered lexicographically.
pub fn split_by_label(set: &EmbeddingSet) -> Result<BTreeMap<String, EmbeddingSet>> {
    let labels = set.labels().ok_or(Error::MissingLabels)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(label, idx)| set.select(&idx).map(|s| (label, s)))
        .collect()
}
