//! Sliced Gromov-Wasserstein.
//!
//! Both sets are projected onto random unit directions. Along a direction
//! the intra-set distances are `|<x - x', theta>|`, and for two uniform sets
//! of equal size the 1D problem is solved by comparing the two monotone
//! rearrangements (sorted-to-sorted and sorted-to-reversed). The sliced
//! discrepancy is the mean of the per-direction values.
//!
//! The monotone-rearrangement solution is exact for almost all inputs but
//! not all of them: rare configurations exist where a non-monotone
//! permutation scores lower (see `tests::known_non_monotone_instance`).

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::geometry::EmbeddingSet;
use crate::gw_exact::bruteforce_permutations;
use crate::rng::SeededRng;

/// `L` unit directions in `R^d` plus the seed that regenerates them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    directions: Array2<f64>,
    seed: u64,
}

impl ProjectionBasis {
    /// Draws `l` i.i.d. directions uniform on the sphere: standard Gaussian
    /// vectors, normalized. Exact-zero draws are redrawn.
    pub fn from_seed(seed: u64, l: usize, d: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter("number of projections must be >= 1".into()));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut directions = Array2::zeros((l, d));
        for mut row in directions.rows_mut() {
            loop {
                row.mapv_inplace(|_| rng.normal());
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                    break;
                }
            }
        }
        Ok(Self { directions, seed })
    }

    pub fn directions(&self) -> &Array2<f64> {
        &self.directions
    }

    pub fn direction(&self, l: usize) -> ArrayView1<'_, f64> {
        self.directions.row(l)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.directions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }
}

/// Draws a basis seeded from the next value of `rng`.
pub fn sample_basis(rng: &mut SeededRng, l: usize, d: usize) -> Result<ProjectionBasis> {
    ProjectionBasis::from_seed(rng.next_seed(), l, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gw1d {
    pub value: f64,
    pub matching: Matching,
}

#[derive(Debug, Clone)]
pub struct SgwResult {
    pub value: f64,
    pub per_slice: Vec<f64>,
    pub basis: ProjectionBasis,
}

impl SgwResult {
    /// Sample standard deviation of the per-slice values.
    pub fn slice_sd(&self) -> f64 {
        sample_sd(&self.per_slice)
    }
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn projections(points: &Array2<f64>, theta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if points.ncols() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "points have d = {} but direction has length {}",
            points.ncols(),
            theta.len()
        )));
    }
    Ok(points.dot(&theta))
}

/// Stable ascending argsort.
fn argsort(v: &Array1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    idx
}

/// Projections `<x_i, theta>` sorted ascending.
pub fn project(set: &EmbeddingSet, theta: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let p = projections(set.points(), theta)?;
    let mut v = p.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn check_slice(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(Error::SizeMismatch("empty slice".into()));
    }
    let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(xs) || !sorted(ys) {
        return Err(Error::Unsorted);
    }
    Ok(())
}

fn pick(asc: f64, desc: f64) -> Gw1d {
    if desc < asc {
        Gw1d { value: desc, matching: Matching::Descending }
    } else {
        Gw1d { value: asc, matching: Matching::Ascending }
    }
}

/// 1D GW between two sorted samples of equal size, by direct `O(n^2)`
/// evaluation of both monotone matchings. Ties go to `Ascending`.
pub fn gw_1d(xs: &[f64], ys: &[f64]) -> Result<Gw1d> {
    check_slice(xs, ys)?;
    let n = xs.len();
    let eval = |desc: bool| {
        let y = |i: usize| if desc { ys[n - 1 - i] } else { ys[i] };
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                let t = (xs[i] - xs[k]).abs() - (y(i) - y(k)).abs();
                s += t * t;
            }
        }
        s / (n * n) as f64
    };
    Ok(pick(eval(false), eval(true)))
}

/// Exact 1D GW over all permutations for `n <= cap`, for callers that
/// cannot accept the rare instances where no monotone matching is optimal.
pub fn gw_1d_exact(xs: &[f64], ys: &[f64], cap: usize) -> Result<f64> {
    check_slice(xs, ys)?;
    if xs.len() > cap {
        return Err(Error::TooLarge { n: xs.len(), cap });
    }
    let dist = |v: &[f64]| Array2::from_shape_fn((v.len(), v.len()), |(i, k)| (v[i] - v[k]).abs());
    Ok(bruteforce_permutations(&dist(xs), &dist(ys)).0)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Linear-time evaluation of a sorted slice. Expanding the square, with
/// both sides sorted the cross term `|dx||dy|` equals `dx dy`, and after
/// centering the value collapses to `(2/n) sum_i (x_i - y_s(i))^2` where
/// `y_s` is `y` for the ascending matching and `-reverse(y)` for the
/// descending one.
fn fast_slice(xs: &[f64], ys: &[f64]) -> (Gw1d, Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let xc = centered(xs);
    let yc = centered(ys);
    let scale = 2.0 / n as f64;
    let asc = scale * xc.iter().zip(&yc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let desc = scale * xc.iter().zip(yc.iter().rev()).map(|(a, b)| (a + b) * (a + b)).sum::<f64>();
    (pick(asc, desc), xc, yc)
}

/// Same contract as [`gw_1d`]'s value, in `O(n)` for sorted input.
pub fn sgw_fast_slice(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_slice(xs, ys)?;
    Ok(fast_slice(xs, ys).0.value)
}

/// Same as [`sgw_fast_slice`] but also reports the matching.
pub fn gw_1d_fast(xs: &[f64], ys: &[f64]) -> Result<Gw1d> {
    check_slice(xs, ys)?;
    Ok(fast_slice(xs, ys).0)
}

fn check_pair(x: &Array2<f64>, y: &Array2<f64>, basis: &ProjectionBasis) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(format!("|X| = {} but |Y| = {}", x.nrows(), y.nrows())));
    }
    if x.nrows() == 0 {
        return Err(Error::SizeMismatch("empty point sets".into()));
    }
    if x.ncols() != basis.dim() || y.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "X has d = {}, Y has d = {}, basis has d = {}",
            x.ncols(),
            y.ncols(),
            basis.dim()
        )));
    }
    Ok(())
}

fn sorted(v: &Array1<f64>) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Sliced GW between equal-size sets over the directions of `basis`.
pub fn sgw(x: &EmbeddingSet, y: &EmbeddingSet, basis: &ProjectionBasis) -> Result<SgwResult> {
    sgw_points(x.points(), y.points(), basis)
}

pub fn sgw_points(x: &Array2<f64>, y: &Array2<f64>, basis: &ProjectionBasis) -> Result<SgwResult> {
    check_pair(x, y, basis)?;
    let px = x.dot(&basis.directions().t());
    let py = y.dot(&basis.directions().t());
    let per_slice: Vec<f64> = (0..basis.len())
        .map(|l| {
            let xs = sorted(&px.column(l).to_owned());
            let ys = sorted(&py.column(l).to_owned());
            fast_slice(&xs, &ys).0.value
        })
        .collect();
    let value = per_slice.iter().sum::<f64>() / per_slice.len() as f64;
    Ok(SgwResult {
        value,
        per_slice,
        basis: basis.clone(),
    })
}

/// Sliced GW and its gradient with respect to the points of `x`, with each
/// slice's sort order and matching held fixed at their forward values.
pub fn sgw_with_gradient(x: &Array2<f64>, y: &Array2<f64>, basis: &ProjectionBasis) -> Result<(SgwResult, Array2<f64>)> {
    check_pair(x, y, basis)?;
    let n = x.nrows();
    let l_count = basis.len();
    let px = x.dot(&basis.directions().t());
    let py = y.dot(&basis.directions().t());
    let mut grad = Array2::<f64>::zeros(x.dim());
    let mut per_slice = Vec::with_capacity(l_count);
    let gscale = 4.0 / n as f64 / l_count as f64;
    for l in 0..l_count {
        let col = px.column(l).to_owned();
        let order = argsort(&col);
        let xs: Vec<f64> = order.iter().map(|&i| col[i]).collect();
        let ys = sorted(&py.column(l).to_owned());
        let (res, xc, yc) = fast_slice(&xs, &ys);
        per_slice.push(res.value);
        let theta = basis.direction(l);
        for (rank, &i) in order.iter().enumerate() {
            let partner = match res.matching {
                Matching::Ascending => yc[rank],
                Matching::Descending => -yc[n - 1 - rank],
            };
            let g = gscale * (xc[rank] - partner);
            grad.row_mut(i).scaled_add(g, &theta);
        }
    }
    let value = per_slice.iter().sum::<f64>() / per_slice.len() as f64;
    Ok((
        SgwResult {
            value,
            per_slice,
            basis: basis.clone(),
        },
        grad,
    ))
}
