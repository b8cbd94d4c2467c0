//! Truncated normal sampling.
//!
//! Intervals that reach into the central mass are sampled by inverting the
//! CDF (in upper-tail form to avoid cancellation). Intervals lying more than
//! three SDs out use exponential-proposal rejection, or uniform-proposal
//! rejection when the interval is narrow relative to the tail scale.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::special::{norm_quantile, norm_sf};
use crate::error::{Error, Result};

const TAIL_SWITCH: f64 = 3.0;

/// Draw from N(mu, sigma2) restricted to [lo, hi]; either bound may be infinite.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mu: f64, sigma2: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("truncated normal variance must be positive, got {sigma2}")));
    }
    if !(lo < hi) || !mu.is_finite() {
        return Err(Error::Interval { lo, hi });
    }
    let sd = sigma2.sqrt();
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let z = standard_truncated(a, b, rng);
    Ok((mu + sd * z).clamp(lo, hi))
}

/// Standard normal restricted to [a, b], a < b.
pub(crate) fn standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        positive_side(a, b, rng)
    } else if b <= 0.0 {
        -positive_side(-b, -a, rng)
    } else {
        // interval straddles zero
        let lo_cdf = norm_sf(-a);
        let hi_cdf = 1.0 - norm_sf(b);
        let u = lo_cdf + rng.random::<f64>() * (hi_cdf - lo_cdf);
        norm_quantile(u).clamp(a, b)
    }
}

fn positive_side<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a <= TAIL_SWITCH {
        let qa = norm_sf(a);
        let qb = norm_sf(b);
        let t = qa - rng.random::<f64>() * (qa - qb);
        return (-norm_quantile(t)).clamp(a, b);
    }
    if b.is_finite() && a * (b - a) < 1.0 {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        if z > b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - rate) * (z - rate) {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::special::norm_cdf;
    use crate::randkit::RngStream;

    fn ks_stat(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn untruncated_mean() {
        let mut rng = RngStream::new(1, 0).rng();
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_truncated_normal(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn far_tail_mean() {
        let mut rng = RngStream::new(2, 0).rng();
        let n = 1_000_000;
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = sample_truncated_normal(0.0, 1.0, 5.0, f64::INFINITY, &mut rng).unwrap();
            min = min.min(x);
            sum += x;
        }
        assert!(min >= 5.0);
        // phi(5)/(1 - Phi(5)), evaluated at 50 digits
        assert!((sum / n as f64 / 5.186503967125842 - 1.0).abs() < 0.01);
    }

    #[test]
    fn two_sided_interval_ks() {
        let mut rng = RngStream::new(3, 0).rng();
        let (mu, sd, lo, hi) = (2.0, 2.0, -1.0, 1.0);
        let xs: Vec<f64> =
            (0..1_000_000).map(|_| sample_truncated_normal(mu, sd * sd, lo, hi, &mut rng).unwrap()).collect();
        assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
        let (fa, fb) = (norm_cdf((lo - mu) / sd), norm_cdf((hi - mu) / sd));
        let d = ks_stat(xs, |x| (norm_cdf((x - mu) / sd) - fa) / (fb - fa));
        assert!(d < 0.002, "KS {d}");
    }

    #[test]
    fn narrow_far_interval_uses_uniform_branch() {
        let mut rng = RngStream::new(4, 0).rng();
        let xs: Vec<f64> =
            (0..200_000).map(|_| sample_truncated_normal(0.0, 1.0, 8.0, 8.05, &mut rng).unwrap()).collect();
        let (qa, qb) = (norm_sf(8.0), norm_sf(8.05));
        let d = ks_stat(xs, |x| (qa - norm_sf(x)) / (qa - qb));
        assert!(d < 0.005, "KS {d}");
    }

    #[test]
    fn left_tail_is_mirrored() {
        let mut rng = RngStream::new(5, 0).rng();
        let xs: Vec<f64> = (0..200_000)
            .map(|_| sample_truncated_normal(1.0, 0.25, f64::NEG_INFINITY, -1.0, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x <= -1.0));
        let q = norm_sf(4.0);
        let d = ks_stat(xs, |x| norm_cdf((x - 1.0) / 0.5) / q);
        assert!(d < 0.005, "KS {d}");
    }

    #[test]
    fn bad_arguments() {
        let mut rng = RngStream::new(6, 0).rng();
        assert!(matches!(sample_truncated_normal(0.0, 1.0, 1.0, 1.0, &mut rng), Err(Error::Interval { .. })));
        assert!(matches!(sample_truncated_normal(0.0, 0.0, 0.0, 1.0, &mut rng), Err(Error::Domain(_))));
    }
}
