//! Conjugate-update distributions specialised to the bivariate effect structure.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::special::log_sum_exp;
use crate::error::{Error, Result};

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    // shape validated by callers
    Gamma::new(shape, 1.0).expect("positive gamma shape").sample(rng)
}

/// `log G` with `G ~ Gamma(shape, 1)`, usable for shapes far below 1.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Domain(format!("gamma shape must be positive, got {shape}")));
    }
    if shape >= 1.0 {
        Ok(gamma_draw(shape, rng).ln())
    } else {
        // Gamma(s) = Gamma(s + 1) * U^(1/s)
        let u: f64 = 1.0 - rng.random::<f64>();
        Ok(gamma_draw(shape + 1.0, rng).ln() + u.ln() / shape)
    }
}

/// Inverse-gamma with density proportional to x^(-shape-1) exp(-scale/x).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::Domain(format!("inverse-gamma needs positive shape and scale, got ({shape}, {scale})")));
    }
    let g = gamma_draw(shape, rng);
    if g > 0.0 {
        Ok(scale / g)
    } else {
        Ok((scale.ln() - sample_log_gamma(shape, rng)?).exp())
    }
}

pub fn sample_chi_squared<R: Rng + ?Sized>(dof: f64, rng: &mut R) -> f64 {
    2.0 * gamma_draw(0.5 * dof, rng)
}

/// Dirichlet draw computed through log-gammas so tiny concentrations stay on the simplex.
pub fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::Domain("Dirichlet needs at least one concentration".into()));
    }
    if let Some(bad) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Domain(format!("Dirichlet concentrations must be positive, got {bad}")));
    }
    let logs = alphas.iter().map(|&a| sample_log_gamma(a, rng)).collect::<Result<Vec<_>>>()?;
    let lse = log_sum_exp(&logs);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - lse).exp().max(f64::MIN_POSITIVE)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

fn check_spd(psi: &Matrix2<f64>) -> Result<()> {
    let sym = (psi[(0, 1)] - psi[(1, 0)]).abs() <= 1e-12 * (psi[(0, 1)].abs() + 1.0);
    let det = psi[(0, 0)] * psi[(1, 1)] - psi[(0, 1)] * psi[(1, 0)];
    if !sym || !(psi[(0, 0)] > 0.0) || !(det > 0.0) || psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("scale matrix is not symmetric positive definite: {psi:?}")));
    }
    Ok(())
}

/// Inverse-Wishart(psi, nu) draw in two dimensions via the Bartlett factorisation
/// of the matching Wishart(psi^-1, nu).
pub fn sample_inv_wishart_2x2<R: Rng + ?Sized>(psi: &Matrix2<f64>, nu: f64, rng: &mut R) -> Result<Matrix2<f64>> {
    check_spd(psi)?;
    if !(nu > 1.0) || !nu.is_finite() {
        return Err(Error::Domain(format!(
            "inverse-Wishart degrees of freedom must exceed 1 in two dimensions, got {nu}"
        )));
    }
    let psi_inv = psi.try_inverse().ok_or_else(|| Error::Numerical("singular scale matrix".into()))?;
    let psi_inv = 0.5 * (psi_inv + psi_inv.transpose());
    let chol =
        psi_inv.cholesky().ok_or_else(|| Error::Numerical("scale matrix inverse not positive definite".into()))?.l();
    let c1 = sample_chi_squared(nu, rng).sqrt();
    let c2 = sample_chi_squared(nu - 1.0, rng).sqrt();
    let off: f64 = StandardNormal.sample(rng);
    let bartlett = Matrix2::new(c1, 0.0, off, c2);
    // W = B B^T with B lower triangular, so W^-1 = B^-T B^-1
    let b = chol * bartlett;
    let (b00, b10, b11) = (b[(0, 0)], b[(1, 0)], b[(1, 1)]);
    let binv = Matrix2::new(1.0 / b00, 0.0, -b10 / (b00 * b11), 1.0 / b11);
    let v = binv.transpose() * binv;
    Ok(0.5 * (v + v.transpose()))
}

/// Bivariate normal draw. Rank-deficient covariances with a zero diagonal
/// entry keep that coordinate exactly at its mean.
pub fn sample_mvn2<R: Rng + ?Sized>(mean: &Vector2<f64>, cov: &Matrix2<f64>, rng: &mut R) -> Result<Vector2<f64>> {
    let (c00, c01, c11) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    if c00 < 0.0 || c11 < 0.0 || !(c00.is_finite() && c11.is_finite() && c01.is_finite()) {
        return Err(Error::Domain(format!("covariance is not positive semi-definite: {cov:?}")));
    }
    let z0: f64 = StandardNormal.sample(rng);
    if c11 == 0.0 {
        if c01 != 0.0 {
            return Err(Error::Domain(format!("covariance is not positive semi-definite: {cov:?}")));
        }
        return Ok(Vector2::new(mean[0] + c00.sqrt() * z0, mean[1]));
    }
    if c00 == 0.0 {
        if c01 != 0.0 {
            return Err(Error::Domain(format!("covariance is not positive semi-definite: {cov:?}")));
        }
        return Ok(Vector2::new(mean[0], mean[1] + c11.sqrt() * z0));
    }
    let l00 = c00.sqrt();
    let l10 = c01 / l00;
    let rem = c11 - l10 * l10;
    if rem < -1e-12 * c11 {
        return Err(Error::Domain(format!("covariance is not positive semi-definite: {cov:?}")));
    }
    let l11 = rem.max(0.0).sqrt();
    let z1: f64 = StandardNormal.sample(rng);
    Ok(Vector2::new(mean[0] + l00 * z0, mean[1] + l10 * z0 + l11 * z1))
}

/// Half-Cauchy(0, 1) truncated to (0, b], by CDF inversion.
pub fn sample_truncated_half_cauchy<R: Rng + ?Sized>(b: f64, rng: &mut R) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Domain(format!("truncation point must be positive and finite, got {b}")));
    }
    let u = 1.0 - rng.random::<f64>();
    Ok((u * b.atan()).tan().min(b))
}
