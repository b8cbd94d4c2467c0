//! Bi-Lasso: separate lasso fits of the outcome model (penalty on the
//! mediator coefficients) and of the mediator models (penalty on the
//! exposure coefficients), with indirect effects taken as products.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{axpy, dot};
use crate::data::MediationDataset;
use crate::error::{Error, Result};

pub const GRID_SIZE: usize = 100;
pub const GRID_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 10;

pub fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate-descent controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    /// Absolute tolerance on the KKT conditions of `0.5 |y - Xb|^2 + lambda |b_P|_1`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// `(lambda, mean held-out squared error)`, lambdas decreasing; empty
    /// unless the fit came from cross-validation.
    pub cv_path: Vec<(f64, f64)>,
    /// No intercept is fitted; the model is the displayed loss as is.
    pub intercept: bool,
    pub converged: bool,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

impl LassoFit {
    /// Warning text when coordinate descent stopped at `max_iter`.
    pub fn warning(&self) -> Option<String> {
        (!self.converged).then(|| {
            format!(
                "coordinate descent hit the sweep limit at lambda {}; KKT residual {:.3e}",
                self.lambda, self.kkt_residual
            )
        })
    }
}

struct Solve {
    converged: bool,
    kkt: f64,
    sweeps: usize,
    rss: f64,
}

struct Design<'a> {
    x: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    penalized: &'a [bool],
}

impl<'a> Design<'a> {
    fn new(x: &'a DMatrix<f64>, penalized: &'a [bool]) -> Result<Self> {
        if penalized.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "penalty mask has {} entries for {} columns",
                penalized.len(),
                x.ncols()
            )));
        }
        let col_sq = (0..x.ncols()).map(|j| x.column(j).norm_squared()).collect();
        Ok(Self { x, col_sq, penalized })
    }

    fn col(&self, j: usize) -> &[f64] {
        let n = self.x.nrows();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Largest KKT violation at `b` with residual `r = y - Xb`.
    fn kkt_residual(&self, b: &[f64], r: &[f64], lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..b.len() {
            if self.col_sq[j] == 0.0 {
                continue;
            }
            let g = dot(self.col(j), r); // minus the gradient
            let v = if !self.penalized[j] {
                g.abs()
            } else if b[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// One coordinate update; returns the change in the coefficient.
    fn update(&self, j: usize, b: &mut [f64], r: &mut [f64], lambda: f64) -> f64 {
        let sq = self.col_sq[j];
        if sq == 0.0 {
            return 0.0;
        }
        let z = dot(self.col(j), r) + sq * b[j];
        let new = if self.penalized[j] { soft_threshold(z, lambda) / sq } else { z / sq };
        let delta = new - b[j];
        if delta != 0.0 {
            axpy(-delta, self.col(j), r);
            b[j] = new;
        }
        delta
    }

    /// Cyclic coordinate descent from `b`, alternating full sweeps with
    /// sweeps over the current nonzero set.
    fn solve(&self, y: &[f64], b: &mut [f64], lambda: f64, opts: &CdOptions) -> Solve {
        let mut r = y.to_vec();
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                axpy(-bj, self.col(j), &mut r);
            }
        }
        let d = b.len();
        let mut sweeps = 0;
        loop {
            for j in 0..d {
                self.update(j, b, &mut r, lambda);
            }
            sweeps += 1;
            loop {
                let mut max_move: f64 = 0.0;
                for j in 0..d {
                    if b[j] != 0.0 || !self.penalized[j] {
                        let delta = self.update(j, b, &mut r, lambda);
                        max_move = max_move.max(delta.abs() * self.col_sq[j].sqrt());
                    }
                }
                sweeps += 1;
                if max_move <= 0.1 * opts.tol || sweeps >= opts.max_iter {
                    break;
                }
            }
            let kkt = self.kkt_residual(b, &r, lambda);
            if kkt <= opts.tol || sweeps >= opts.max_iter {
                return Solve { converged: kkt <= opts.tol, kkt, sweeps, rss: dot(&r, &r) };
            }
        }
    }
}

/// Minimises `0.5 |y - Xb|^2 + lambda sum_{j penalised} |b_j|` by cyclic
/// coordinate descent until every KKT condition holds within `opts.tol`.
pub fn lasso_cd(x: &DMatrix<f64>, y: &[f64], penalized: &[bool], lambda: f64, opts: &CdOptions) -> Result<LassoFit> {
    lasso_cd_warm(x, y, penalized, lambda, opts, None)
}

fn lasso_cd_warm(
    x: &DMatrix<f64>,
    y: &[f64],
    penalized: &[bool],
    lambda: f64,
    opts: &CdOptions,
    start: Option<&[f64]>,
) -> Result<LassoFit> {
    if y.len() != x.nrows() {
        return Err(Error::Dimension(format!("y has {} rows, x has {}", y.len(), x.nrows())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let design = Design::new(x, penalized)?;
    let mut b = start.map_or_else(|| vec![0.0; x.ncols()], <[f64]>::to_vec);
    let s = design.solve(y, &mut b, lambda, opts);
    Ok(LassoFit {
        coefficients: b,
        lambda,
        cv_path: Vec::new(),
        intercept: false,
        converged: s.converged,
        kkt_residual: s.kkt,
        sweeps: s.sweeps,
    })
}

/// Smallest lambda at which every penalised coefficient is zero: the largest
/// `|x_j' r|` over penalised columns, with `r` the residual of the
/// unpenalised least-squares fit.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64], penalized: &[bool], opts: &CdOptions) -> Result<f64> {
    let design = Design::new(x, penalized)?;
    let mut b = vec![0.0; x.ncols()];
    let r = if penalized.iter().all(|&p| p) {
        y.to_vec()
    } else {
        design.solve(y, &mut b, f64::MAX, opts);
        let mut r = y.to_vec();
        for (j, &bj) in b.iter().enumerate() {
            axpy(-bj, design.col(j), &mut r);
        }
        r
    };
    Ok((0..x.ncols()).filter(|&j| penalized[j]).map(|j| dot(design.col(j), &r).abs()).fold(0.0, f64::max))
}

/// `GRID_SIZE` log-spaced values from `lmax` down to `GRID_RATIO * lmax`.
pub fn lambda_grid(lmax: f64) -> Vec<f64> {
    let lo = (GRID_RATIO * lmax).ln();
    let hi = lmax.ln();
    (0..GRID_SIZE).map(|k| (hi + (lo - hi) * k as f64 / (GRID_SIZE - 1) as f64).exp()).collect()
}

/// Random fold label for every row.
pub fn fold_labels<R: Rng + ?Sized>(n: usize, k_folds: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k_folds < 2 || k_folds > n {
        return Err(Error::Config(format!("k_folds must be in [2, n = {n}], got {k_folds}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        labels[i] = pos % k_folds;
    }
    Ok(labels)
}

fn split_rows(x: &DMatrix<f64>, y: &[f64], keep: &[bool]) -> (DMatrix<f64>, Vec<f64>) {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| keep[i]).collect();
    let xs = x.select_rows(rows.iter());
    let ys = rows.iter().map(|&i| y[i]).collect();
    (xs, ys)
}

/// Deviance ratio at which a lasso path is cut short.
pub const PATH_DEV_RATIO: f64 = 0.999;

/// Minimum relative deviance-ratio gain between grid points, checked from
/// grid point `PATH_MIN_POINTS` on, before a path is cut.
pub const PATH_DEV_GAIN: f64 = 1e-5;
pub const PATH_MIN_POINTS: usize = 5;

/// KKT tolerance of the fold fits, relative to `lambda_max`.
pub const CV_REL_TOL: f64 = 1e-6;

/// Solves along `grid` with warm starts, calling `visit(k, b)` after each
/// point, and stops once the fit explains `PATH_DEV_RATIO` of the deviance
/// left by the unpenalised fit or the ratio stalls.
/// Returns the number of grid points solved.
fn solve_path(
    design: &Design<'_>,
    y: &[f64],
    grid: &[f64],
    opts: &CdOptions,
    mut visit: impl FnMut(usize, &[f64]),
) -> usize {
    let mut b = vec![0.0; design.col_sq.len()];
    let mut null_rss = f64::NAN;
    let mut prev_ratio = 0.0;
    for (k, &lam) in grid.iter().enumerate() {
        let s = design.solve(y, &mut b, lam, opts);
        visit(k, &b);
        if k == 0 {
            null_rss = s.rss;
        }
        let ratio = if null_rss > 0.0 { 1.0 - s.rss / null_rss } else { 1.0 };
        if ratio >= PATH_DEV_RATIO || (k >= PATH_MIN_POINTS && ratio - prev_ratio < PATH_DEV_GAIN * ratio) {
            return k + 1;
        }
        prev_ratio = ratio;
    }
    grid.len()
}

/// K-fold cross-validated lambda for [`lasso_cd`]. The training loss is a
/// sum over rows, so each fold's penalty is scaled by `n_train / n` to keep
/// the per-row penalty of the full-data fit.
///
/// Paths stop early as in [`solve_path`]; the minimiser is taken over the
/// grid prefix every fold and the full-data path reached. Returns the
/// full-data fit at the selected lambda with the CV errors of that prefix.
pub fn cv_select_lambda<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    penalized: &[bool],
    k_folds: usize,
    opts: &CdOptions,
    rng: &mut R,
) -> Result<LassoFit> {
    let n = y.len();
    let labels = fold_labels(n, k_folds, rng)?;
    let lmax = lambda_max(x, y, penalized, opts)?;
    if !(lmax > 0.0) {
        let mut fit = lasso_cd(x, y, penalized, 0.0, opts)?;
        fit.cv_path = vec![(0.0, f64::NAN)];
        return Ok(fit);
    }
    let grid = lambda_grid(lmax);
    let fold_opts = CdOptions { tol: opts.tol.max(CV_REL_TOL * lmax), ..*opts };
    let design = Design::new(x, penalized)?;
    let mut reach = solve_path(&design, y, &grid, &fold_opts, |_, _| {});
    let mut sq_err = vec![0.0; grid.len()];
    for fold in 0..k_folds {
        let train: Vec<bool> = labels.iter().map(|&l| l != fold).collect();
        let test: Vec<bool> = train.iter().map(|t| !t).collect();
        let (xt, yt) = split_rows(x, y, &train);
        let (xv, yv) = split_rows(x, y, &test);
        let scale = yt.len() as f64 / n as f64;
        let fold_grid: Vec<f64> = grid[..reach].iter().map(|l| l * scale).collect();
        let fold_design = Design::new(&xt, penalized)?;
        reach = solve_path(&fold_design, &yt, &fold_grid, &fold_opts, |k, b| {
            let pred = &xv * nalgebra::DVector::from_column_slice(b);
            let mse = yv.iter().zip(pred.iter()).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / yv.len() as f64;
            sq_err[k] += mse / k_folds as f64;
        });
    }
    // first minimiser along the decreasing grid favours the sparser fit
    let best = (0..reach).fold(0, |best, k| if sq_err[k] < sq_err[best] { k } else { best });
    let mut b = vec![0.0; x.ncols()];
    let mut last = None;
    for &lam in &grid[..=best] {
        last = Some(design.solve(y, &mut b, lam, opts));
    }
    let last = last.expect("grid is non-empty");
    Ok(LassoFit {
        coefficients: b,
        lambda: grid[best],
        cv_path: grid.into_iter().zip(sq_err).take(reach).collect(),
        intercept: false,
        converged: last.converged,
        kkt_residual: last.kkt,
        sweeps: last.sweeps,
    })
}

/// Bi-Lasso estimates for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLassoFit {
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    pub nie_hat: Vec<f64>,
    pub beta_a: f64,
    pub lambda_outcome: f64,
    pub lambda_mediator: f64,
    pub outcome: LassoFit,
}

/// Cross-products for the mediator models after projecting the covariates
/// out of the exposure, restricted to a row subset.
struct MediatorCross {
    /// `a~ . m~_j` for each j
    cross: Vec<f64>,
    /// `|a~|^2`
    a_sq: f64,
}

fn residualize(c: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    if c.ncols() == 0 {
        return Ok(v.to_vec());
    }
    let ctc = c.transpose() * c;
    let chol = ctc.cholesky().ok_or_else(|| Error::Numerical("covariate Gram matrix is singular".into()))?;
    let vv = nalgebra::DVector::from_column_slice(v);
    let coef = chol.solve(&(c.transpose() * &vv));
    Ok((vv - c * coef).as_slice().to_vec())
}

fn mediator_cross(a: &[f64], m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<MediatorCross> {
    // with a~ = (I - P_C) a, a~ . m_j = a~ . m~_j since the projector is idempotent
    let at = residualize(c, a)?;
    let cross = (0..m.ncols()).map(|j| dot(&at, m.column(j).as_slice())).collect();
    Ok(MediatorCross { cross, a_sq: dot(&at, &at) })
}

/// Shared-lambda lasso over all mediator models. With a single exposure the
/// per-mediator solution is `soft(a~ . m_j, lambda) / |a~|^2`.
fn mediator_lasso<R: Rng + ?Sized>(data: &MediationDataset, k_folds: usize, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    let n = data.n();
    let p = data.p();
    let full = mediator_cross(&data.a, &data.m, &data.c)?;
    if !(full.a_sq > 0.0) {
        return Ok((vec![0.0; p], 0.0));
    }
    let lmax = full.cross.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(lmax > 0.0) {
        return Ok((vec![0.0; p], 0.0));
    }
    let grid = lambda_grid(lmax);
    let labels = fold_labels(n, k_folds, rng)?;
    let mut err = vec![0.0; grid.len()];
    for fold in 0..k_folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
        let sub = |rows: &[usize]| {
            let a: Vec<f64> = rows.iter().map(|&i| data.a[i]).collect();
            (a, data.m.select_rows(rows.iter()), data.c.select_rows(rows.iter()))
        };
        let (at, mt, ct) = sub(&train);
        let (av, mv, cv) = sub(&test);
        let tr = mediator_cross(&at, &mt, &ct)?;
        if !(tr.a_sq > 0.0) {
            continue;
        }
        // held-out residual of model j at alpha: h_j - alpha g, with the
        // covariate coefficients fitted on the training rows
        let (h, g) = if ct.ncols() == 0 {
            (mv.clone(), av.clone())
        } else {
            let ctc = ct.transpose() * &ct;
            let chol = ctc.cholesky().ok_or_else(|| Error::Numerical("covariate Gram matrix is singular".into()))?;
            let proj_m = chol.solve(&(ct.transpose() * &mt));
            let proj_a = chol.solve(&(ct.transpose() * nalgebra::DVector::from_column_slice(&at)));
            let h = &mv - &cv * proj_m;
            let g = nalgebra::DVector::from_column_slice(&av) - &cv * proj_a;
            (h, g.as_slice().to_vec())
        };
        let g_sq = dot(&g, &g);
        let scale = train.len() as f64 / n as f64;
        let nv = test.len() as f64;
        for j in 0..p {
            let hj = h.column(j);
            let h_sq = hj.norm_squared();
            let hg = dot(hj.as_slice(), &g);
            for (k, &lam) in grid.iter().enumerate() {
                let al = soft_threshold(tr.cross[j], lam * scale) / tr.a_sq;
                err[k] += (h_sq - 2.0 * al * hg + al * al * g_sq) / (nv * p as f64 * k_folds as f64);
            }
        }
    }
    let best = (0..grid.len()).fold(0, |best, k| if err[k] < err[best] { k } else { best });
    let lam = grid[best];
    Ok((full.cross.iter().map(|&z| soft_threshold(z, lam) / full.a_sq).collect(), lam))
}

/// Fits both lasso models with 10-fold CV and forms `nie_hat = alpha_a * beta_m`.
pub fn fit_bilasso<R: Rng + ?Sized>(data: &MediationDataset, rng: &mut R) -> Result<BiLassoFit> {
    fit_bilasso_with(data, DEFAULT_FOLDS, &CdOptions::default(), rng)
}

pub fn fit_bilasso_with<R: Rng + ?Sized>(
    data: &MediationDataset,
    k_folds: usize,
    opts: &CdOptions,
    rng: &mut R,
) -> Result<BiLassoFit> {
    data.validate()?;
    let (n, p, q) = (data.n(), data.p(), data.q());
    let mut x = DMatrix::zeros(n, p + 1 + q);
    x.columns_mut(0, p).copy_from(&data.m);
    x.column_mut(p).copy_from_slice(&data.a);
    x.columns_mut(p + 1, q).copy_from(&data.c);
    let mut penalized = vec![true; p];
    penalized.extend(std::iter::repeat_n(false, 1 + q));
    let outcome = cv_select_lambda(&x, &data.y, &penalized, k_folds, opts, rng)?;
    let (alpha_a, lambda_mediator) = mediator_lasso(data, k_folds, rng)?;
    let beta_m = outcome.coefficients[..p].to_vec();
    let nie_hat = beta_m.iter().zip(&alpha_a).map(|(b, a)| a * b).collect();
    Ok(BiLassoFit {
        beta_a: outcome.coefficients[p],
        lambda_outcome: outcome.lambda,
        beta_m,
        alpha_a,
        nie_hat,
        lambda_mediator,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::std_normal;
    use crate::randkit::RngStream;

    fn random_design(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = RngStream::new(seed, 0).rng();
        let x = DMatrix::from_fn(n, d, |_, _| std_normal(&mut rng));
        let y = (0..n).map(|i| x[(i, 0)] * 1.5 - x[(i, 2)] * 0.7 + std_normal(&mut rng) * 0.5).collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let (x, y) = random_design(50, 5, 1);
        let fit = lasso_cd(&x, &y, &[true; 5], 0.0, &CdOptions { tol: 1e-11, max_iter: 100_000 }).unwrap();
        let xt = x.transpose();
        let ols = (&xt * &x).cholesky().unwrap().solve(&(&xt * nalgebra::DVector::from_column_slice(&y)));
        for j in 0..5 {
            assert!((fit.coefficients[j] - ols[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = random_design(40, 6, 2);
        let mask = [true; 6];
        let lmax = lambda_max(&x, &y, &mask, &CdOptions::default()).unwrap();
        let fit = lasso_cd(&x, &y, &mask, lmax, &CdOptions::default()).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let fit = lasso_cd(&x, &y, &mask, 0.95 * lmax, &CdOptions::default()).unwrap();
        assert!(fit.coefficients.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn unpenalized_columns_are_kept() {
        let (x, y) = random_design(40, 4, 3);
        let mask = [true, false, true, true];
        let lmax = lambda_max(&x, &y, &mask, &CdOptions::default()).unwrap();
        let fit = lasso_cd(&x, &y, &mask, 2.0 * lmax, &CdOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[1] != 0.0);
        assert_eq!(fit.coefficients[0], 0.0);
    }

    #[test]
    fn sweep_limit_sets_warning() {
        let (x, y) = random_design(40, 8, 4);
        let fit = lasso_cd(&x, &y, &[true; 8], 0.1, &CdOptions { tol: 1e-14, max_iter: 2 }).unwrap();
        assert!(!fit.converged);
        assert!(fit.warning().unwrap().contains("KKT residual"));
    }

    #[test]
    fn too_many_folds() {
        let (x, y) = random_design(8, 3, 5);
        let mut rng = RngStream::new(1, 1).rng();
        let err = cv_select_lambda(&x, &y, &[true; 3], 10, &CdOptions::default(), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn grid_is_decreasing() {
        let g = lambda_grid(5.0);
        assert_eq!(g.len(), GRID_SIZE);
        assert!((g[0] - 5.0).abs() < 1e-12 && (g[GRID_SIZE - 1] - 5e-3).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
