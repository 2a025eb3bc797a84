//! Full quadratic Gromov-Wasserstein discrepancy.
//!
//! For distance matrices `dX` (n x n), `dY` (m x m) and a coupling `P`,
//!
//! ```text
//! E(P) = sum_{i,k,j,l} (dX[i][k] - dY[j][l])^2 P[i][j] P[k][l]
//! ```
//!
//! and `GW^2 = min_P E(P)`. Two solvers are provided: an exhaustive search
//! over permutation couplings (exact for equal-size uniform sets at tiny `n`,
//! used as a test oracle) and an entropic solver that alternates a
//! linearization of `E` with a log-domain Sinkhorn projection.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, Coupling, DistanceMatrix, EmbeddingSet};

/// Above this many plan entries the objective switches from the quadruple
/// sum to the factorized form.
pub const QUADRUPLE_SUM_LIMIT: usize = 4_000_000;

/// Default largest `n` accepted by [`gw_bruteforce`] (9! = 362880 permutations).
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 9;

#[derive(Debug, Clone)]
pub struct GwResult {
    /// Squared GW discrepancy `E(P)` at the returned coupling.
    pub value: f64,
    pub coupling: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each outer iteration (entropic solver only).
    pub history: Vec<f64>,
}

fn check_dims(dx: &DistanceMatrix, dy: &DistanceMatrix, plan: &Coupling) -> Result<()> {
    let (n, m) = plan.dim();
    if dx.len() != n || dy.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "plan is {n}x{m} but distance matrices are {}x{0} and {}x{1}",
            dx.len(),
            dy.len()
        )));
    }
    Ok(())
}

/// `E(P)`, choosing the evaluation route by problem size.
pub fn gw_objective(dx: &DistanceMatrix, dy: &DistanceMatrix, plan: &Coupling) -> Result<f64> {
    check_dims(dx, dy, plan)?;
    let (n, m) = plan.dim();
    if n * m <= QUADRUPLE_SUM_LIMIT {
        Ok(quadruple_sum(dx.values(), dy.values(), plan.plan()))
    } else {
        Ok(factorized(dx.values(), dy.values(), plan.plan()))
    }
}

/// `E(P)` by the direct `O(n^2 m^2)` sum.
pub fn gw_objective_quadruple(dx: &DistanceMatrix, dy: &DistanceMatrix, plan: &Coupling) -> Result<f64> {
    check_dims(dx, dy, plan)?;
    Ok(quadruple_sum(dx.values(), dy.values(), plan.plan()))
}

/// `E(P)` via `sum dX^2 r r + sum dY^2 c c - 2 <P, dX P dY>`, with `r`, `c`
/// the row and column sums of `P`.
pub fn gw_objective_factorized(dx: &DistanceMatrix, dy: &DistanceMatrix, plan: &Coupling) -> Result<f64> {
    check_dims(dx, dy, plan)?;
    Ok(factorized(dx.values(), dy.values(), plan.plan()))
}

fn quadruple_sum(dx: &Array2<f64>, dy: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let (n, m) = p.dim();
    let mut total = 0.0;
    for i in 0..n {
        let mut lane = 0.0;
        for j in 0..m {
            let pij = p[[i, j]];
            if pij == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for k in 0..n {
                let dik = dx[[i, k]];
                for l in 0..m {
                    let pkl = p[[k, l]];
                    if pkl != 0.0 {
                        let t = dik - dy[[j, l]];
                        inner += t * t * pkl;
                    }
                }
            }
            lane += pij * inner;
        }
        total += lane;
    }
    total
}

fn squared(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v * v)
}

fn factorized(dx: &Array2<f64>, dy: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let r = p.sum_axis(Axis(1));
    let c = p.sum_axis(Axis(0));
    let tx = r.dot(&squared(dx).dot(&r));
    let ty = c.dot(&squared(dy).dot(&c));
    let cross = (dx.dot(p).dot(dy) * p).sum();
    (tx + ty - 2.0 * cross).max(0.0)
}

/// Permutation objective `(1/n^2) sum_{i,k} (dX[i][k] - dY[s(i)][s(k)])^2`.
pub fn permutation_objective(dx: &Array2<f64>, dy: &Array2<f64>, perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut total = 0.0;
    for i in 0..n {
        let si = perm[i];
        for k in 0..n {
            let t = dx[[i, k]] - dy[[si, perm[k]]];
            total += t * t;
        }
    }
    total / (n * n) as f64
}

/// Minimum of [`permutation_objective`] over all `n!` permutations and the
/// first permutation (in Heap's order, starting from the identity) that
/// attains it.
pub fn bruteforce_permutations(dx: &Array2<f64>, dy: &Array2<f64>) -> (f64, Vec<usize>) {
    let n = dx.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = permutation_objective(dx, dy, &perm);
    let mut best_perm = perm.clone();
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = permutation_objective(dx, dy, &perm);
            if v < best {
                best = v;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best, best_perm)
}

/// Permutation-restricted GW between two equal-size sets, `n <= cap`.
pub fn gw_bruteforce_with_cap(x: &EmbeddingSet, y: &EmbeddingSet, cap: usize) -> Result<GwResult> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(format!("|X| = {} but |Y| = {}", x.len(), y.len())));
    }
    if x.len() > cap {
        return Err(Error::TooLarge { n: x.len(), cap });
    }
    let dx = pairwise_distances(x);
    let dy = pairwise_distances(y);
    let (value, perm) = bruteforce_permutations(dx.values(), dy.values());
    Ok(GwResult {
        value,
        coupling: Coupling::from_permutation(&perm),
        iterations: 0,
        converged: true,
        history: Vec::new(),
    })
}

pub fn gw_bruteforce(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<GwResult> {
    gw_bruteforce_with_cap(x, y, DEFAULT_BRUTE_FORCE_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicOptions {
    pub epsilon: f64,
    pub max_outer: usize,
    /// Outer stopping threshold on the L1 change of the plan.
    pub tol: f64,
    pub max_inner: usize,
    /// Sinkhorn stopping threshold on the row-marginal L1 error. Inexact
    /// inner solves are safe: the plan is rounded onto the marginals and the
    /// line search never accepts an increase.
    pub inner_tol: f64,
    /// Start the linearizations at a coarse epsilon (the largest squared
    /// distance) and halve it every outer iteration down to `epsilon`.
    /// Smoothing early steers the plan away from poor local minima.
    pub anneal: bool,
}

impl EntropicOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_outer: 200,
            tol: 1e-9,
            max_inner: 1_000,
            inner_tol: 1e-9,
            anneal: true,
        }
    }
}

/// Weight of the eccentricity matching in the default starting plan.
pub const START_TILT: f64 = 0.1;

/// Mean squared distance from each point to the others.
fn eccentricities(d: &DistanceMatrix) -> Vec<f64> {
    let n = d.len() as f64;
    d.values().rows().into_iter().map(|r| r.dot(&r) / n).collect()
}

/// Default starting plan: the independent coupling tilted by `tilt` toward
/// the monotone coupling of the two sorted eccentricity profiles (the
/// optimal plan of the eccentricity lower bound). The independent coupling
/// alone is a stationary point whenever every point of each space has the
/// same eccentricity, e.g. for two-point spaces, so the solver would never
/// leave it.
pub fn eccentricity_start(dx: &DistanceMatrix, dy: &DistanceMatrix, tilt: f64) -> Coupling {
    let (n, m) = (dx.len(), dy.len());
    let order = |e: Vec<f64>| {
        let mut idx: Vec<usize> = (0..e.len()).collect();
        idx.sort_by(|&i, &j| e[i].total_cmp(&e[j]));
        idx
    };
    let (ox, oy) = (order(eccentricities(dx)), order(eccentricities(dy)));
    let mut plan = Array2::from_elem((n, m), (1.0 - tilt) / (n * m) as f64);
    // North-west corner rule in units of 1/(nm): rows carry m units, columns n.
    let (mut i, mut j, mut row_left, mut col_left) = (0, 0, m, n);
    while i < n && j < m {
        let t = row_left.min(col_left);
        plan[[ox[i], oy[j]]] += tilt * t as f64 / (n * m) as f64;
        row_left -= t;
        col_left -= t;
        if row_left == 0 {
            i += 1;
            row_left = m;
        }
        if col_left == 0 {
            j += 1;
            col_left = n;
        }
    }
    Coupling::from_plan_unchecked(plan)
}

/// Default CLI regularization: `0.01 * median(dX^2)`.
pub fn default_epsilon(dx: &DistanceMatrix) -> f64 {
    1e-2 * dx.median_squared()
}

/// Upper bound on the excess objective that entropic smoothing can add on
/// top of the unregularized optimum, `epsilon * ln(min(n, m))` (the largest
/// possible KL divergence from the product coupling). Identical inputs
/// should score below it.
pub fn entropic_bias_bound(epsilon: f64, n: usize, m: usize) -> f64 {
    epsilon * (n.min(m) as f64).ln()
}

fn log_sum_exp(values: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(values);
    let mx = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + buf.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn for `min <P, C> - eps H(P)` with marginals `a`, `b`,
/// followed by a rounding step that makes the marginals exact.
pub fn sinkhorn_log(
    cost: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Array2<f64>> {
    let (n, m) = cost.dim();
    let mut duals = (Array1::zeros(n), Array1::zeros(m));
    sinkhorn_warm(cost, a, b, epsilon, max_iter, tol, &mut duals)
}

/// Sinkhorn starting from (and updating) the scaled duals `f / eps`, `g / eps`.
fn sinkhorn_warm(
    cost: &Array2<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
    duals: &mut (Array1<f64>, Array1<f64>),
) -> Result<Array2<f64>> {
    let (n, m) = cost.dim();
    // Row-major kernels in both orientations so every sweep is contiguous.
    let k = cost.mapv(|c| -c / epsilon);
    let kt = k.t().as_standard_layout().into_owned();
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let (f, g) = duals;
    let mut buf = Vec::with_capacity(n.max(m));
    let plan_of = |f: &Array1<f64>, g: &Array1<f64>| {
        Array2::from_shape_fn((n, m), |(i, j)| (f[i] + g[j] + k[[i, j]] + log_a[i] + log_b[j]).exp())
    };
    let mut shifted = vec![0.0; n.max(m)];
    for it in 0..max_iter {
        for (s, (gj, lb)) in shifted.iter_mut().zip(g.iter().zip(log_b.iter())) {
            *s = gj + lb;
        }
        for (fi, row) in f.iter_mut().zip(k.rows()) {
            *fi = -log_sum_exp(row.iter().zip(&shifted).map(|(kij, s)| kij + s), &mut buf);
        }
        for (s, (fi, la)) in shifted.iter_mut().zip(f.iter().zip(log_a.iter())) {
            *s = fi + la;
        }
        for (gj, col) in g.iter_mut().zip(kt.rows()) {
            *gj = -log_sum_exp(col.iter().zip(&shifted).map(|(kij, s)| kij + s), &mut buf);
        }
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow { epsilon });
        }
        if it % 10 == 9 || it + 1 == max_iter {
            // Columns are exact after the g sweep; measure the row error.
            let err: f64 = (0..n)
                .map(|i| {
                    let r: f64 = (0..m).map(|j| (f[i] + g[j] + k[[i, j]] + log_a[i] + log_b[j]).exp()).sum();
                    (r - a[i]).abs()
                })
                .sum();
            if err < tol {
                break;
            }
        }
    }
    let p = plan_of(f, g);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow { epsilon });
    }
    Ok(round_to_marginals(p, a, b))
}

/// Projects a positive matrix onto the transport polytope (Altschuler et
/// al. rounding): scale rows and columns down, then add the rank-one
/// correction for the missing mass.
pub fn round_to_marginals(mut p: Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let rows = p.sum_axis(Axis(1));
    for (mut row, (&r, &ai)) in p.axis_iter_mut(Axis(0)).zip(rows.iter().zip(a.iter())) {
        if r > ai {
            row.mapv_inplace(|v| v * ai / r);
        }
    }
    let cols = p.sum_axis(Axis(0));
    for (mut col, (&c, &bj)) in p.axis_iter_mut(Axis(1)).zip(cols.iter().zip(b.iter())) {
        if c > bj {
            col.mapv_inplace(|v| v * bj / c);
        }
    }
    // Both residuals are nonnegative up to rounding; clamp so the rank-one
    // correction cannot push an entry below zero.
    let err_r = (a - &p.sum_axis(Axis(1))).mapv(|v| v.max(0.0));
    let err_c = (b - &p.sum_axis(Axis(0))).mapv(|v| v.max(0.0));
    let mass = err_r.sum();
    if mass > 0.0 {
        Zip::indexed(&mut p).for_each(|(i, j), v| *v += err_r[i] * err_c[j] / mass);
    }
    p
}

/// Entropic GW between two sets with uniform weights.
///
/// Each outer iteration linearizes `E` at the current plan `P`, giving the
/// cost `C = dX^2 r 1^T + 1 (dY^2 c)^T - 2 dX P dY`, solves the entropic
/// transport problem for `C` with Sinkhorn, and moves from `P` toward the
/// Sinkhorn plan with an exact line search on `E` (a quadratic along the
/// segment). The line search makes the objective non-increasing. Stops when
/// the plan moves less than `tol` in L1 at the target epsilon; otherwise
/// `converged` is false.
///
/// The problem is non-convex, so the result is a local solution. The start
/// ([`eccentricity_start`]) and the epsilon annealing make poor basins less
/// likely but do not rule them out.
pub fn gw_entropic(x: &EmbeddingSet, y: &EmbeddingSet, opts: &EntropicOptions) -> Result<GwResult> {
    gw_entropic_matrices(&pairwise_distances(x), &pairwise_distances(y), opts)
}

pub fn gw_entropic_matrices(dx: &DistanceMatrix, dy: &DistanceMatrix, opts: &EntropicOptions) -> Result<GwResult> {
    gw_entropic_from(dx, dy, &eccentricity_start(dx, dy, START_TILT), opts)
}

/// The entropic solver started from `init` instead of the default plan.
pub fn gw_entropic_from(dx: &DistanceMatrix, dy: &DistanceMatrix, init: &Coupling, opts: &EntropicOptions) -> Result<GwResult> {
    if !(opts.epsilon > 0.0) || !opts.epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {}",
            opts.epsilon
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    let n = dx.len();
    let m = dy.len();
    if n == 0 || m == 0 {
        return Err(Error::SizeMismatch("empty distance matrix".into()));
    }
    let a = Array1::from_elem(n, 1.0 / n as f64);
    let b = Array1::from_elem(m, 1.0 / m as f64);
    let dxv = dx.values();
    let dyv = dy.values();
    // With fixed marginals the two quadratic-in-distance terms are constant.
    let const_x = squared(dxv).dot(&a);
    let const_y = squared(dyv).dot(&b);
    let constant = a.dot(&const_x) + b.dot(&const_y);

    if init.dim() != (n, m) {
        return Err(Error::DimensionMismatch(format!(
            "initial plan is {:?} but the problem is {n}x{m}",
            init.dim()
        )));
    }
    let mut plan = init.plan().clone();
    let mut coupled = dxv.dot(&plan).dot(dyv);
    let mut value = (constant - 2.0 * (&coupled * &plan).sum()).max(0.0);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut duals = (Array1::zeros(n), Array1::zeros(m));
    let mut eps = if opts.anneal {
        let top = dx.max().max(dy.max());
        (top * top).max(opts.epsilon)
    } else {
        opts.epsilon
    };

    while iterations < opts.max_outer {
        iterations += 1;
        let cost = Array2::from_shape_fn((n, m), |(i, j)| const_x[i] + const_y[j] - 2.0 * coupled[[i, j]]);
        let target = sinkhorn_warm(&cost, &a, &b, eps, opts.max_inner, opts.inner_tol, &mut duals)?;
        let dir = &target - &plan;
        let dir_coupled = dxv.dot(&dir).dot(dyv);
        // E(P + t D) = constant - 2 (<P,dXPdY> + 2 t <D,dXPdY> + t^2 <D,dXDdY>)
        let lin = (&dir * &coupled).sum();
        let quad = (&dir * &dir_coupled).sum();
        let along = |t: f64| -2.0 * (2.0 * t * lin + t * t * quad);
        let step = if quad < 0.0 {
            (-lin / quad).clamp(0.0, 1.0)
        } else if along(1.0) < 0.0 {
            1.0
        } else {
            0.0
        };
        let change = step * dir.iter().map(|v| v.abs()).sum::<f64>();
        if step > 0.0 {
            plan.scaled_add(step, &dir);
            plan.mapv_inplace(|v| v.max(0.0));
            coupled = dxv.dot(&plan).dot(dyv);
            value = (constant - 2.0 * (&coupled * &plan).sum()).max(0.0);
        }
        history.push(value);
        if eps > opts.epsilon {
            let next = (0.5 * eps).max(opts.epsilon);
            // The stored duals are scaled by 1 / eps.
            let scale = eps / next;
            duals.0 *= scale;
            duals.1 *= scale;
            eps = next;
        } else if change < opts.tol {
            converged = true;
            break;
        }
    }

    let coupling = Coupling::from_plan_unchecked(plan);
    let value = gw_objective(dx, dy, &coupling)?;
    Ok(GwResult {
        value,
        coupling,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use ndarray::array;

    fn set1d(v: &[f64]) -> EmbeddingSet {
        EmbeddingSet::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn random_set(rng: &mut SeededRng, n: usize, d: usize) -> EmbeddingSet {
        EmbeddingSet::unlabeled(Array2::from_shape_fn((n, d), |_| rng.normal())).unwrap()
    }

    /// Independent quadruple loop over explicit index tuples.
    fn oracle_objective(dx: &Array2<f64>, dy: &Array2<f64>, p: &Array2<f64>) -> f64 {
        let (n, m) = p.dim();
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                for j in 0..m {
                    for l in 0..m {
                        s += (dx[[i, k]] - dy[[j, l]]).powi(2) * p[[i, j]] * p[[k, l]];
                    }
                }
            }
        }
        s
    }

    #[test]
    fn isometric_identity_is_zero() {
        let mut rng = SeededRng::new(1);
        let x = random_set(&mut rng, 6, 3);
        let d = pairwise_distances(&x);
        let p = Coupling::from_permutation(&[0, 1, 2, 3, 4, 5]);
        assert_eq!(gw_objective(&d, &d, &p).unwrap(), 0.0);
    }

    #[test]
    fn two_point_hand_value() {
        let dx = pairwise_distances(&set1d(&[0.0, 1.0]));
        let dy = pairwise_distances(&set1d(&[0.0, 2.0]));
        for perm in [[0, 1], [1, 0]] {
            let v = gw_objective(&dx, &dy, &Coupling::from_permutation(&perm)).unwrap();
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn objective_matches_oracle_and_both_routes_agree() {
        let mut rng = SeededRng::new(9);
        for _ in 0..10 {
            let n = 2 + rng.index(6);
            let m = 2 + rng.index(6);
            let dx = pairwise_distances(&random_set(&mut rng, n, 3));
            let dy = pairwise_distances(&random_set(&mut rng, m, 2));
            let raw = Array2::from_shape_fn((n, m), |_| rng.uniform() + 0.01);
            let p = Coupling::from_plan_unchecked(&raw / raw.sum());
            let want = oracle_objective(dx.values(), dy.values(), p.plan());
            let quad = gw_objective_quadruple(&dx, &dy, &p).unwrap();
            let fact = gw_objective_factorized(&dx, &dy, &p).unwrap();
            assert!((quad - want).abs() <= 1e-12, "{quad} vs {want}");
            assert!((fact - quad).abs() <= 1e-9);
        }
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = SeededRng::new(4);
        let x = random_set(&mut rng, 5, 2);
        let y = random_set(&mut rng, 4, 2);
        let raw = Array2::from_shape_fn((5, 4), |_| rng.uniform());
        let p = Coupling::from_plan_unchecked(&raw / raw.sum());
        let base = gw_objective(&pairwise_distances(&x), &pairwise_distances(&y), &p).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let xp = x.select(&perm).unwrap();
        let pp = Coupling::from_plan_unchecked(p.plan().select(Axis(0), &perm));
        let moved = gw_objective(&pairwise_distances(&xp), &pairwise_distances(&y), &pp).unwrap();
        assert!((base - moved).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let dx = pairwise_distances(&set1d(&[0.0, 1.0]));
        let p = Coupling::independent(3, 2);
        assert!(matches!(gw_objective(&dx, &dx, &p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn bruteforce_self_is_zero_with_identity() {
        let mut rng = SeededRng::new(2);
        let x = random_set(&mut rng, 6, 2);
        let r = gw_bruteforce(&x, &x).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.coupling, Coupling::from_permutation(&[0, 1, 2, 3, 4, 5]));
    }

    #[test]
    fn bruteforce_two_points() {
        let r = gw_bruteforce(&set1d(&[0.0, 1.0]), &set1d(&[0.0, 2.0])).unwrap();
        assert!((r.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_scaled_triple() {
        // Explicit enumeration of the six permutations of Y = 2X, X = {0,1,3}:
        // dX off-diagonal = (1,3,2), dY = (2,6,4); identity and reversal map
        // distances to their doubles, giving (2/9)(1+9+4) = 28/9. Every other
        // permutation is worse.
        let x = set1d(&[0.0, 1.0, 3.0]);
        let y = set1d(&[0.0, 2.0, 6.0]);
        let dx = pairwise_distances(&x);
        let dy = pairwise_distances(&y);
        let mut expected = f64::INFINITY;
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let p = Coupling::from_permutation(&perm);
            expected = expected.min(oracle_objective(dx.values(), dy.values(), p.plan()));
        }
        assert!((expected - 28.0 / 9.0).abs() < 1e-12);
        let r = gw_bruteforce(&x, &y).unwrap();
        assert!((r.value - 28.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn bruteforce_errors() {
        let a = set1d(&[0.0, 1.0]);
        let b = set1d(&[0.0, 1.0, 2.0]);
        assert!(matches!(gw_bruteforce(&a, &b), Err(Error::SizeMismatch(_))));
        let big: Vec<f64> = (0..12).map(f64::from).collect();
        assert!(matches!(
            gw_bruteforce(&set1d(&big), &set1d(&big)),
            Err(Error::TooLarge { n: 12, cap: 9 })
        ));
    }

    #[test]
    fn bruteforce_symmetric_and_isometry_invariant() {
        let mut rng = SeededRng::new(12);
        for _ in 0..5 {
            let x = random_set(&mut rng, 6, 2);
            let y = random_set(&mut rng, 6, 2);
            let xy = gw_bruteforce(&x, &y).unwrap().value;
            let yx = gw_bruteforce(&y, &x).unwrap().value;
            assert!((xy - yx).abs() <= 1e-12);
            // rotation + translation of X
            let t: f64 = rng.uniform_range(0.0, 6.28);
            let (s, c) = t.sin_cos();
            let rot = array![[c, -s], [s, c]];
            let moved = x.points().dot(&rot) + &array![3.0, -1.5];
            let xr = EmbeddingSet::unlabeled(moved).unwrap();
            let v = gw_bruteforce(&xr, &y).unwrap().value;
            assert!((v - xy).abs() <= 1e-9);
        }
    }

    #[test]
    fn entropic_rejects_zero_epsilon() {
        let x = set1d(&[0.0, 1.0]);
        assert!(matches!(
            gw_entropic(&x, &x, &EntropicOptions::new(0.0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn entropic_self_comparison() {
        let mut rng = SeededRng::new(21);
        let x = random_set(&mut rng, 12, 3);
        let dx = pairwise_distances(&x);
        let eps = 0.05 * dx.median_squared();
        let r = gw_entropic(&x, &x, &EntropicOptions::new(eps)).unwrap();
        let indep = gw_objective(&dx, &dx, &Coupling::independent(12, 12)).unwrap();
        assert!(r.value < indep);
        assert!(r.value <= entropic_bias_bound(eps, 12, 12), "{} > bound", r.value);
        assert!(r.coupling.marginal_error() < 1e-9);
    }

    #[test]
    fn entropic_monotone_and_valid() {
        let mut rng = SeededRng::new(8);
        for _ in 0..5 {
            let x = random_set(&mut rng, 9, 2);
            let y = random_set(&mut rng, 7, 3);
            let dx = pairwise_distances(&x);
            let r = gw_entropic(&x, &y, &EntropicOptions::new(0.05 * dx.median_squared())).unwrap();
            assert!(r.value >= 0.0);
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.history);
            }
            assert!(r.coupling.marginal_error() < 1e-9);
            assert!(Coupling::new(
                r.coupling.plan().clone(),
                Array1::from_elem(9, 1.0 / 9.0),
                Array1::from_elem(7, 1.0 / 7.0)
            )
            .is_ok());
        }
    }

    #[test]
    fn sinkhorn_marginals() {
        let cost = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0]];
        let a = array![0.5, 0.5];
        let b = array![0.2, 0.3, 0.5];
        let p = sinkhorn_log(&cost, &a, &b, 0.1, 1000, 1e-12).unwrap();
        let c = Coupling::new(p, a, b).unwrap();
        assert!(c.marginal_error() < 1e-12);
    }

    #[test]
    fn eccentricity_start_is_a_coupling() {
        let mut rng = SeededRng::new(31);
        for (n, m) in [(5, 5), (4, 7), (9, 2), (1, 3)] {
            let dx = pairwise_distances(&random_set(&mut rng, n, 2));
            let dy = pairwise_distances(&random_set(&mut rng, m, 2));
            let c = eccentricity_start(&dx, &dy, START_TILT);
            let checked = Coupling::new(
                c.plan().clone(),
                Array1::from_elem(n, 1.0 / n as f64),
                Array1::from_elem(m, 1.0 / m as f64),
            );
            assert!(checked.is_ok(), "{n}x{m}");
        }
    }

    #[test]
    fn eccentricity_start_follows_sorted_profiles() {
        // Eccentricity order: x = {0, 1, 3} ranks points 1, 0, 2; y = 2x
        // ranks the same way, so the tilt lands on the diagonal.
        let dx = pairwise_distances(&set1d(&[0.0, 1.0, 3.0]));
        let dy = pairwise_distances(&set1d(&[0.0, 2.0, 6.0]));
        let c = eccentricity_start(&dx, &dy, 1.0);
        let want = Array2::<f64>::eye(3) / 3.0;
        assert!(c.plan().iter().zip(want.iter()).all(|(p, q)| (p - q).abs() < 1e-15));
    }

    #[test]
    fn two_point_spaces_leave_the_independent_coupling() {
        // Every point of a two-point space has the same eccentricity, so the
        // independent coupling is stationary; the tilted start must escape.
        let x = set1d(&[0.0, 1.0]);
        let y = set1d(&[0.0, 2.0]);
        let r = gw_entropic(&x, &y, &EntropicOptions::new(1e-3 * 4.0)).unwrap();
        assert!(r.converged);
        assert!((r.value - 0.5).abs() < 1e-6, "{}", r.value);
        let flat = gw_entropic_from(
            &pairwise_distances(&x),
            &pairwise_distances(&y),
            &Coupling::independent(2, 2),
            &EntropicOptions::new(1e-3 * 4.0),
        )
        .unwrap();
        assert!(flat.value > 1.0, "{}", flat.value);
    }

    #[test]
    fn annealing_reaches_target_epsilon() {
        let mut rng = SeededRng::new(32);
        let x = random_set(&mut rng, 6, 2);
        let y = random_set(&mut rng, 6, 2);
        let plain = EntropicOptions {
            anneal: false,
            ..EntropicOptions::new(0.05)
        };
        let a = gw_entropic(&x, &y, &EntropicOptions::new(0.05)).unwrap();
        let b = gw_entropic(&x, &y, &plain).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.iterations > 1 && a.history.len() == a.iterations);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(gw_entropic_from(
            &pairwise_distances(&x),
            &pairwise_distances(&y),
            &Coupling::independent(5, 6),
            &plain
        )
        .is_err());
    }
}
