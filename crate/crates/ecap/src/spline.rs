//! Natural-cubic-spline estimation of the scaled score function g of the
//! estimate marginal, by minimizing a penalized empirical risk with
//! closed-form coefficients, plus K-fold cross-validation of the smoothing
//! parameter.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{EcapError, Result};
use crate::rng::stream_rng;

/// Where the fitted score is pinned to zero. All spline work happens on the
/// flipped scale, so the constraint point is the reflection center.
pub const CENTER: f64 = 0.5;

/// Natural-cubic-spline basis on `[0, 0.5]`, with every basis function
/// recentered to vanish at the constraint point. The spline's knot sequence
/// is the stored data knots plus the center, so the basis dimension equals
/// the number of data knots: one affine function `x - 0.5` plus
/// `knots.len() - 1` centered cubic functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
    center: f64,
}

impl SplineBasis {
    /// Builds a basis directly from data knots (strictly increasing, each in
    /// `[0, 0.5)`).
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(EcapError::InsufficientData(
                "spline basis needs at least one knot".into(),
            ));
        }
        if !knots.windows(2).all(|w| w[0] < w[1]) {
            return Err(EcapError::Domain(
                "spline knots must be strictly increasing".into(),
            ));
        }
        if knots[0] < 0.0 || *knots.last().unwrap() >= CENTER {
            return Err(EcapError::Domain(
                "spline knots must lie in [0, 0.5)".into(),
            ));
        }
        Ok(Self {
            knots,
            center: CENTER,
        })
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn validate(&self) -> Result<()> {
        Self::from_knots(self.knots.clone()).map(|_| ())
    }

    // Truncated-cube divided difference toward the center knot:
    // d_i(x) = ((x - k_i)_+^3 - (x - c)_+^3) / (c - k_i).
    fn d(&self, i: usize, x: f64) -> f64 {
        let k = self.knots[i];
        let a = (x - k).max(0.0);
        let b = (x - self.center).max(0.0);
        (a * a * a - b * b * b) / (self.center - k)
    }

    fn d_prime(&self, i: usize, x: f64) -> f64 {
        let k = self.knots[i];
        let a = (x - k).max(0.0);
        let b = (x - self.center).max(0.0);
        3.0 * (a * a - b * b) / (self.center - k)
    }

    fn d_second(&self, i: usize, x: f64) -> f64 {
        let k = self.knots[i];
        let a = (x - k).max(0.0);
        let b = (x - self.center).max(0.0);
        6.0 * (a - b) / (self.center - k)
    }

    /// Evaluates all basis functions at `x` into `out` (length `dim`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out[0] = x - self.center;
        let m = self.dim();
        if m == 1 {
            return;
        }
        let last = self.d(m - 1, x);
        let last_c = self.d_at_center(m - 1);
        for i in 0..m - 1 {
            out[i + 1] = (self.d(i, x) - last) - (self.d_at_center(i) - last_c);
        }
    }

    /// Evaluates all basis functions and their first derivatives at `x`.
    pub fn eval_with_deriv_into(&self, x: f64, out: &mut [f64], out_d: &mut [f64]) {
        self.eval_into(x, out);
        out_d[0] = 1.0;
        let m = self.dim();
        if m == 1 {
            return;
        }
        let last = self.d_prime(m - 1, x);
        for i in 0..m - 1 {
            out_d[i + 1] = self.d_prime(i, x) - last;
        }
    }

    /// Evaluates all basis second derivatives at `x`.
    pub fn second_deriv_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out[0] = 0.0;
        let m = self.dim();
        if m == 1 {
            return;
        }
        let last = self.d_second(m - 1, x);
        for i in 0..m - 1 {
            out[i + 1] = self.d_second(i, x) - last;
        }
    }

    // d_i evaluated at the center, where the truncated cube above the center
    // vanishes: d_i(c) = (c - k_i)^2.
    fn d_at_center(&self, i: usize) -> f64 {
        let t = self.center - self.knots[i];
        t * t
    }

    /// The spline's full knot sequence (data knots followed by the center).
    fn segments(&self) -> Vec<f64> {
        let mut s = self.knots.clone();
        s.push(self.center);
        s
    }
}

/// Knots from the distinct flipped values, thinned to `max_knots` empirical
/// quantiles (always keeping min and max) when there are too many. A value
/// exactly at the center carries no knot; the center is always part of the
/// spline's knot sequence.
pub fn build_basis(flipped_values: &[f64], max_knots: usize) -> Result<SplineBasis> {
    if max_knots < 4 {
        return Err(EcapError::Config("max_knots must be at least 4".into()));
    }
    let mut distinct: Vec<f64> = Vec::with_capacity(flipped_values.len());
    for &v in flipped_values {
        if !v.is_finite() || !(0.0..=CENTER).contains(&v) {
            return Err(EcapError::Domain(format!(
                "flipped values must lie in [0, 0.5], got {v}"
            )));
        }
        distinct.push(v);
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(EcapError::InsufficientData(format!(
            "need at least 4 distinct values to place spline knots, got {}",
            distinct.len()
        )));
    }
    // the center itself never becomes a data knot
    if *distinct.last().unwrap() >= CENTER {
        distinct.pop();
    }
    let d = distinct.len();
    let knots = if d > max_knots {
        let m = max_knots;
        (0..m).map(|j| distinct[j * (d - 1) / (m - 1)]).collect()
    } else {
        distinct
    };
    SplineBasis::from_knots(knots)
}

/// The curvature penalty `Omega[j][k] = integral of b_j'' b_k''` over the
/// unit interval. Second derivatives are piecewise linear with breaks at the
/// knot sequence and vanish outside it, so a per-segment Simpson rule is
/// exact.
pub fn penalty_matrix(basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.dim();
    let mut omega = DMatrix::zeros(k, k);
    let seg = basis.segments();
    let mut va = vec![0.0; k];
    let mut vm = vec![0.0; k];
    let mut vb = vec![0.0; k];
    for w in seg.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        basis.second_deriv_into(a, &mut va);
        basis.second_deriv_into(0.5 * (a + b), &mut vm);
        basis.second_deriv_into(b, &mut vb);
        let (wa, wm, wb) = (h / 6.0, 4.0 * h / 6.0, h / 6.0);
        let data = omega.as_mut_slice();
        for col in 0..k {
            let (ca, cm, cb) = (va[col] * wa, vm[col] * wm, vb[col] * wb);
            if ca == 0.0 && cm == 0.0 && cb == 0.0 {
                continue;
            }
            let col_slice = &mut data[col * k..col * k + col + 1];
            for (row, slot) in col_slice.iter_mut().enumerate() {
                *slot += va[row] * ca + vm[row] * cm + vb[row] * cb;
            }
        }
    }
    // mirror the upper triangle
    for col in 0..k {
        for row in col + 1..k {
            omega[(row, col)] = omega[(col, row)];
        }
    }
    omega
}

/// Fitted score spline: basis, coefficients and the smoothing parameter that
/// produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSplineFit {
    basis: SplineBasis,
    eta: Vec<f64>,
    lambda: f64,
}

impl ScoreSplineFit {
    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if self.eta.len() != self.basis.dim() {
            return Err(EcapError::Config(
                "spline coefficient length does not match basis dimension".into(),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(EcapError::Config("lambda must be positive".into()));
        }
        Ok(())
    }

    /// Evaluates `(g, g')` at any estimate in `[0, 1]`. Values above the
    /// center use the odd reflection `g(x) = -g(1 - x)`, whose derivative is
    /// `+g'(1 - x)`; values below the smallest knot fall on the natural
    /// spline's linear extrapolation.
    pub fn evaluate(&self, p_tilde: f64) -> (f64, f64) {
        if p_tilde <= self.basis.center {
            self.eval_flipped(p_tilde)
        } else {
            let (g, gp) = self.eval_flipped(1.0 - p_tilde);
            (-g, gp)
        }
    }

    fn eval_flipped(&self, x: f64) -> (f64, f64) {
        let k = self.basis.dim();
        let mut b = vec![0.0; k];
        let mut db = vec![0.0; k];
        self.basis.eval_with_deriv_into(x, &mut b, &mut db);
        let mut g = 0.0;
        let mut gp = 0.0;
        for j in 0..k {
            g += b[j] * self.eta[j];
            gp += db[j] * self.eta[j];
        }
        (g, gp)
    }
}

/// Accumulates the Gram matrix `sum b b^T` and the risk linear term
/// `sum [(1 - 2x) b + x (1 - x) b']` over the sample.
fn assemble_system(values: &[f64], basis: &SplineBasis) -> (DMatrix<f64>, DVector<f64>) {
    let k = basis.dim();
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    let mut b = vec![0.0; k];
    let mut db = vec![0.0; k];
    for &x in values {
        basis.eval_with_deriv_into(x, &mut b, &mut db);
        let (c1, c2) = (1.0 - 2.0 * x, x * (1.0 - x));
        let data = gram.as_mut_slice();
        for col in 0..k {
            let bc = b[col];
            let col_slice = &mut data[col * k..col * k + col + 1];
            for (row, slot) in col_slice.iter_mut().enumerate() {
                *slot += b[row] * bc;
            }
            rhs[col] += c1 * bc + c2 * db[col];
        }
    }
    for col in 0..k {
        for row in col + 1..k {
            gram[(row, col)] = gram[(col, row)];
        }
    }
    (gram, rhs)
}

/// Solves `(gram + n lambda Omega) eta = -rhs` by Cholesky, adding a ridge
/// jitter of `1e-10 trace/dim` only if the factorization fails, then applying
/// one step of iterative refinement.
fn solve_coefficients(
    gram: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    n_lambda: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut system = gram.clone();
    system.axpy_from_matrix(n_lambda, omega);
    let neg_rhs = -rhs;
    let chol = match Cholesky::new(system.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-10 * system.trace() / system.nrows() as f64;
            for i in 0..system.nrows() {
                system[(i, i)] += jitter;
            }
            Cholesky::new(system.clone()).ok_or_else(|| {
                EcapError::Numeric("penalized Gram matrix is singular even after jitter".into())
            })?
        }
    };
    let mut eta = chol.solve(&neg_rhs);
    // one refinement step keeps the first-order conditions tight even when
    // the truncated-cube basis is badly conditioned
    let residual = &neg_rhs - &system * &eta;
    eta += chol.solve(&residual);
    Ok(eta)
}

trait AxpyMatrix {
    fn axpy_from_matrix(&mut self, alpha: f64, other: &DMatrix<f64>);
}

impl AxpyMatrix for DMatrix<f64> {
    fn axpy_from_matrix(&mut self, alpha: f64, other: &DMatrix<f64>) {
        self.zip_apply(other, |a, b| *a += alpha * b);
    }
}

/// Minimizes the penalized empirical risk over the basis span for a fixed
/// smoothing parameter.
pub fn fit_g(flipped_values: &[f64], basis: &SplineBasis, lambda: f64) -> Result<ScoreSplineFit> {
    if !(lambda > 0.0) {
        return Err(EcapError::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (gram, rhs) = assemble_system(flipped_values, basis);
    let omega = penalty_matrix(basis);
    let n_lambda = flipped_values.len() as f64 * lambda;
    let eta = solve_coefficients(&gram, &omega, n_lambda, &rhs)?;
    Ok(ScoreSplineFit {
        basis: basis.clone(),
        eta: eta.iter().copied().collect(),
        lambda,
    })
}

/// Empirical risk (up to the constant that does not depend on g) of an
/// arbitrary `(g, g')` evaluator over a sample.
pub fn empirical_risk_fn<F: Fn(f64) -> (f64, f64)>(g: F, values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mut acc = 0.0;
    for &x in values {
        let (gv, gp) = g(x);
        acc += gv * gv + 2.0 * (gv * (1.0 - 2.0 * x) + x * (1.0 - x) * gp);
    }
    acc / n
}

/// Empirical risk of a fitted spline over a sample.
pub fn empirical_risk(fit: &ScoreSplineFit, values: &[f64]) -> f64 {
    empirical_risk_fn(|x| fit.evaluate(x), values)
}

/// Cross-validation settings for the smoothing parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub num_folds: usize,
    pub lambda_grid: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            num_folds: 10,
            lambda_grid: crate::numeric::log_space(1e-6, 1e2, 40),
            rng_seed: 0,
        }
    }
}

/// Selects the smoothing parameter by K-fold cross-validation of the
/// out-of-fold empirical risk. Each training fold rebuilds its own basis, so
/// held-out points are scored strictly out of sample. Ties break toward the
/// larger (smoother) lambda. Returns the winner and the full risk curve.
pub fn cross_validate_lambda(
    values: &[f64],
    config: &CvConfig,
    max_knots: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let n = values.len();
    if config.lambda_grid.is_empty() {
        return Err(EcapError::Config("lambda grid must be nonempty".into()));
    }
    if config.num_folds < 2 || config.num_folds > n {
        return Err(EcapError::Config(format!(
            "need 2 <= folds <= n, got {} folds for n = {n}",
            config.num_folds
        )));
    }
    let mut grid: Vec<f64> = config.lambda_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if grid[0] <= 0.0 {
        return Err(EcapError::Config("lambda grid must be positive".into()));
    }

    // seeded uniform shuffle, then contiguous blocks whose sizes differ by at
    // most one
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(config.rng_seed, 0);
    order.shuffle(&mut rng);
    let base = n / config.num_folds;
    let rem = n % config.num_folds;

    let mut risk_sums = vec![0.0; grid.len()];
    let mut start = 0usize;
    for k in 0..config.num_folds {
        let size = base + usize::from(k < rem);
        let test_idx = &order[start..start + size];
        start += size;
        let mut train: Vec<f64> = Vec::with_capacity(n - size);
        let mut in_test = vec![false; n];
        for &i in test_idx {
            in_test[i] = true;
        }
        for (i, &v) in values.iter().enumerate() {
            if !in_test[i] {
                train.push(v);
            }
        }
        let basis = build_basis(&train, max_knots)?;
        let (gram, rhs) = assemble_system(&train, &basis);
        let omega = penalty_matrix(&basis);

        // evaluate the held-out basis rows once; each lambda is then a pair
        // of matrix-vector products
        let dim = basis.dim();
        let mut b_test = DMatrix::zeros(size, dim);
        let mut db_test = DMatrix::zeros(size, dim);
        let mut b = vec![0.0; dim];
        let mut db = vec![0.0; dim];
        for (r, &i) in test_idx.iter().enumerate() {
            basis.eval_with_deriv_into(values[i], &mut b, &mut db);
            for c in 0..dim {
                b_test[(r, c)] = b[c];
                db_test[(r, c)] = db[c];
            }
        }

        for (gi, &lambda) in grid.iter().enumerate() {
            let eta = solve_coefficients(&gram, &omega, train.len() as f64 * lambda, &rhs)?;
            let h = &b_test * &eta;
            let hp = &db_test * &eta;
            let mut fold_risk = 0.0;
            for (r, &i) in test_idx.iter().enumerate() {
                let x = values[i];
                fold_risk += h[r] * h[r] + 2.0 * ((1.0 - 2.0 * x) * h[r] + x * (1.0 - x) * hp[r]);
            }
            risk_sums[gi] += fold_risk;
        }
    }

    let curve: Vec<(f64, f64)> = grid
        .iter()
        .zip(&risk_sums)
        .map(|(&l, &r)| (l, r / n as f64))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for &(l, r) in &curve {
        if !r.is_finite() {
            continue;
        }
        match best {
            Some((_, br)) if r > br => {}
            _ => best = Some((l, r)),
        }
    }
    let (lambda_hat, _) = best
        .ok_or_else(|| EcapError::Numeric("all cross-validation risks were non-finite".into()))?;
    Ok((lambda_hat, curve))
}
