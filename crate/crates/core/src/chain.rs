//! Machinery shared by the GMM and PTG Gibbs samplers.
//!
//! Both samplers have the same nuisance block: the direct effect `beta_a`,
//! covariate effects in the outcome and mediator models, and the three
//! residual/prior variances. The conditionals for that block do not depend
//! on the effect prior, so they live here together with the cached
//! cross-products, posterior accumulators and the iteration driver.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MediationDataset;
use crate::effects::unit_effects;
use crate::error::{Error, Result};
use crate::randkit::{sample_inverse_gamma, ChainRng};

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Dataset plus the cross-products every sweep needs.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub data: &'a MediationDataset,
    /// `|M_j|^2`
    pub m_sq: Vec<f64>,
    pub a_sq: f64,
    /// `A . M_j`
    pub a_dot_m: Vec<f64>,
    /// `C_w . A`
    pub c_dot_a: Vec<f64>,
    /// `C^T C` (q x q)
    pub c_gram: DMatrix<f64>,
    /// `C^T M` (q x p)
    pub c_dot_m: DMatrix<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(data: &'a MediationDataset) -> Result<Self> {
        data.validate()?;
        let p = data.p();
        let q = data.q();
        let m_sq = (0..p).map(|j| data.m.column(j).norm_squared()).collect();
        let a_dot_m = (0..p).map(|j| dot(&data.a, data.m.column(j).as_slice())).collect();
        let c_dot_a = (0..q).map(|w| dot(&data.a, data.c.column(w).as_slice())).collect();
        let c_gram = data.c.transpose() * &data.c;
        let c_dot_m = data.c.transpose() * &data.m;
        for w in 0..q {
            if !(c_gram[(w, w)] > 0.0) {
                return Err(Error::DegenerateColumn(format!("c{}", w + 1)));
            }
        }
        Ok(Self { data, m_sq, a_sq: dot(&data.a, &data.a), a_dot_m, c_dot_a, c_gram, c_dot_m })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn q(&self) -> usize {
        self.data.q()
    }

    pub fn m_col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.data.m.as_slice()[j * n..(j + 1) * n]
    }

    pub fn c_col(&self, w: usize) -> &[f64] {
        let n = self.n();
        &self.data.c.as_slice()[w * n..(w + 1) * n]
    }

    /// `A . (M_j - C alpha_c[j, :])`, the exposure cross-product of mediator j's
    /// covariate-adjusted column.
    pub fn mediator_cross(&self, j: usize, alpha_c: &DMatrix<f64>) -> f64 {
        let mut v = self.a_dot_m[j];
        for w in 0..self.q() {
            v -= self.c_dot_a[w] * alpha_c[(j, w)];
        }
        v
    }
}

/// Inverse-gamma prior with density proportional to `x^(-shape-1) exp(-scale/x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaPrior {
    pub const fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{name}: inverse-gamma shape and scale must be positive, got ({}, {})",
                self.shape, self.scale
            )))
        }
    }

    /// Conjugate draw after adding `extra_shape` and `extra_scale`.
    pub fn draw_posterior<R: Rng + ?Sized>(&self, extra_shape: f64, extra_scale: f64, rng: &mut R) -> Result<f64> {
        sample_inverse_gamma(self.shape + extra_shape, self.scale + extra_scale, rng)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_inverse_gamma(self.shape, self.scale, rng)
    }
}

/// Priors on the variance of `beta_a` and the two residual variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisancePriors {
    pub sigma_a2: InvGammaPrior,
    pub sigma_e2: InvGammaPrior,
    pub sigma_g2: InvGammaPrior,
}

impl Default for NuisancePriors {
    fn default() -> Self {
        Self {
            sigma_a2: InvGammaPrior::new(1.0, 1.0),
            sigma_e2: InvGammaPrior::new(0.1, 0.1),
            sigma_g2: InvGammaPrior::new(0.1, 0.1),
        }
    }
}

impl NuisancePriors {
    pub fn validate(&self) -> Result<()> {
        self.sigma_a2.validate("sigma_a2")?;
        self.sigma_e2.validate("sigma_e2")?;
        self.sigma_g2.validate("sigma_g2")
    }
}

/// Parameters outside the mediator effect prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Nuisance {
    pub beta_a: f64,
    pub beta_c: Vec<f64>,
    /// p x q
    pub alpha_c: DMatrix<f64>,
    pub sigma_e2: f64,
    pub sigma_g2: f64,
    pub sigma_a2: f64,
}

impl Nuisance {
    pub fn initial(p: usize, q: usize) -> Self {
        Self {
            beta_a: 0.0,
            beta_c: vec![0.0; q],
            alpha_c: DMatrix::zeros(p, q),
            sigma_e2: 1.0,
            sigma_g2: 1.0,
            sigma_a2: 1.0,
        }
    }

    /// Dispersed start for multi-chain convergence checks.
    pub fn random<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Self {
        let mut out = Self::initial(p, q);
        out.beta_a = std_normal(rng);
        out.beta_c.iter_mut().for_each(|b| *b = 0.5 * std_normal(rng));
        out.alpha_c.iter_mut().for_each(|b| *b = 0.5 * std_normal(rng));
        out.sigma_e2 = rng.random_range(0.25..4.0);
        out.sigma_g2 = rng.random_range(0.25..4.0);
        out.sigma_a2 = rng.random_range(0.25..4.0);
        out
    }

    /// Name of the first non-finite or non-positive scalar, if any.
    pub fn first_bad(&self) -> Option<&'static str> {
        if !self.beta_a.is_finite() {
            return Some("beta_a");
        }
        for (name, v) in [("sigma_e2", self.sigma_e2), ("sigma_g2", self.sigma_g2), ("sigma_a2", self.sigma_a2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Some(name);
            }
        }
        if self.beta_c.iter().any(|v| !v.is_finite()) {
            return Some("beta_c");
        }
        if self.alpha_c.iter().any(|v| !v.is_finite()) {
            return Some("alpha_c");
        }
        None
    }
}

/// Outcome residual `y - M beta_m - A beta_a - C beta_c`; zero effects are skipped.
pub fn outcome_residual(prep: &Prepared<'_>, beta_m: &[f64], nuis: &Nuisance) -> Vec<f64> {
    let d = prep.data;
    let mut r = d.y.clone();
    for (j, &b) in beta_m.iter().enumerate() {
        if b != 0.0 {
            axpy(-b, prep.m_col(j), &mut r);
        }
    }
    axpy(-nuis.beta_a, &d.a, &mut r);
    for (w, &b) in nuis.beta_c.iter().enumerate() {
        axpy(-b, prep.c_col(w), &mut r);
    }
    r
}

/// Residual sum of squares of the mediator model summed over all p columns,
/// from cached cross-products.
pub fn mediator_residual_ss(prep: &Prepared<'_>, alpha_a: &[f64], alpha_c: &DMatrix<f64>) -> f64 {
    let q = prep.q();
    let mut total = 0.0;
    for (j, &al) in alpha_a.iter().enumerate() {
        let mut ss = prep.m_sq[j] - 2.0 * al * prep.a_dot_m[j] + al * al * prep.a_sq;
        for w in 0..q {
            let cw = alpha_c[(j, w)];
            ss += -2.0 * cw * prep.c_dot_m[(w, j)] + 2.0 * al * cw * prep.c_dot_a[w];
            for v in 0..q {
                ss += cw * alpha_c[(j, v)] * prep.c_gram[(w, v)];
            }
        }
        total += ss.max(0.0);
    }
    total
}

/// `beta_a | rest ~ N(A.r' / (sigma_e2/sigma_a2 + |A|^2), sigma_e2 / (sigma_e2/sigma_a2 + |A|^2))`
/// where `r'` is the residual with the exposure term added back. Keeps `r` current.
pub fn update_beta_a<R: Rng + ?Sized>(prep: &Prepared<'_>, nuis: &mut Nuisance, r: &mut [f64], rng: &mut R) {
    let a = &prep.data.a;
    let cross = dot(a, r) + nuis.beta_a * prep.a_sq;
    let denom = nuis.sigma_e2 / nuis.sigma_a2 + prep.a_sq;
    let mean = cross / denom;
    let sd = (nuis.sigma_e2 / denom).sqrt();
    let new = mean + sd * std_normal(rng);
    axpy(nuis.beta_a - new, a, r);
    nuis.beta_a = new;
}

/// Redraws sigma_a^2, sigma_e^2 and sigma_g^2 in that order.
pub fn update_variances<R: Rng + ?Sized>(
    prep: &Prepared<'_>,
    nuis: &mut Nuisance,
    r: &[f64],
    alpha_a: &[f64],
    priors: &NuisancePriors,
    rng: &mut R,
) -> Result<()> {
    nuis.sigma_a2 = priors.sigma_a2.draw_posterior(0.5, 0.5 * nuis.beta_a * nuis.beta_a, rng)?;
    let n = prep.n() as f64;
    nuis.sigma_e2 = priors.sigma_e2.draw_posterior(0.5 * n, 0.5 * dot(r, r), rng)?;
    let ss = mediator_residual_ss(prep, alpha_a, &nuis.alpha_c);
    nuis.sigma_g2 = priors.sigma_g2.draw_posterior(0.5 * n * prep.p() as f64, 0.5 * ss, rng)?;
    Ok(())
}

/// Systematic sweep over the covariate effects of both models under flat priors.
pub fn update_covariate_effects<R: Rng + ?Sized>(
    prep: &Prepared<'_>,
    nuis: &mut Nuisance,
    r: &mut [f64],
    alpha_a: &[f64],
    rng: &mut R,
) {
    let q = prep.q();
    for w in 0..q {
        let cw = prep.c_col(w);
        let css = prep.c_gram[(w, w)];
        let old = nuis.beta_c[w];
        let mean = dot(cw, r) / css + old;
        let new = mean + (nuis.sigma_e2 / css).sqrt() * std_normal(rng);
        axpy(old - new, cw, r);
        nuis.beta_c[w] = new;
    }
    for j in 0..prep.p() {
        for w in 0..q {
            let css = prep.c_gram[(w, w)];
            let mut num = prep.c_dot_m[(w, j)] - alpha_a[j] * prep.c_dot_a[w];
            for v in 0..q {
                if v != w {
                    num -= prep.c_gram[(w, v)] * nuis.alpha_c[(j, v)];
                }
            }
            nuis.alpha_c[(j, w)] = num / css + (nuis.sigma_g2 / css).sqrt() * std_normal(rng);
        }
    }
}

/// Iteration counts and per-run switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Mediators whose 0/1 inclusion path is stored in the trace.
    pub trace_mediators: Vec<usize>,
    /// Evaluate the state invariants after every full scan.
    pub check_invariants: bool,
    /// Start from a dispersed random state instead of the neutral one.
    pub random_init: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 150_000,
            burn_in: 100_000,
            thin: 1,
            trace_mediators: Vec::new(),
            check_invariants: false,
            random_init: false,
        }
    }
}

impl ChainConfig {
    pub fn new(n_iter: usize, burn_in: usize) -> Self {
        Self { n_iter, burn_in, ..Self::default() }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let Some(j) = self.trace_mediators.iter().find(|&&j| j >= p) {
            return Err(Error::Config(format!("trace mediator index {j} out of range for p = {p}")));
        }
        Ok(())
    }

    pub fn is_kept(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn kept_draws(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// Kept-draw paths of global scalars and of selected inclusion indicators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scalar_names: Vec<String>,
    pub scalars: Vec<Vec<f64>>,
    pub mediators: Vec<usize>,
    pub indicators: Vec<Vec<u8>>,
}

impl Trace {
    fn new(names: &[&str], mediators: &[usize], capacity: usize) -> Self {
        Self {
            scalar_names: names.iter().map(|s| s.to_string()).collect(),
            scalars: names.iter().map(|_| Vec::with_capacity(capacity)).collect(),
            mediators: mediators.to_vec(),
            indicators: mediators.iter().map(|_| Vec::with_capacity(capacity)).collect(),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalar_names.iter().position(|n| n == name).map(|k| self.scalars[k].as_slice())
    }

    pub fn indicator(&self, j: usize) -> Option<&[u8]> {
        self.mediators.iter().position(|&m| m == j).map(|k| self.indicators[k].as_slice())
    }

    pub fn len(&self) -> usize {
        self.scalars.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Posterior summaries over kept draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Posterior probability that both effects of mediator j are nonzero.
    pub pip: Vec<f64>,
    pub mean_beta_m: Vec<f64>,
    pub mean_alpha_a: Vec<f64>,
    /// Product of posterior means, unit exposure contrast.
    pub nie_hat: Vec<f64>,
    pub nde_hat: f64,
    pub te_hat: f64,
    pub kept_draws: usize,
    /// Frequencies of the four zero patterns: both nonzero, outcome effect
    /// only, exposure effect only, neither.
    pub group_posterior: Vec<[f64; 4]>,
}

#[derive(Debug, Clone)]
struct Accumulator {
    counts: Vec<[u64; 4]>,
    sum_beta: Vec<f64>,
    sum_alpha: Vec<f64>,
    sum_beta_a: f64,
    kept: usize,
}

impl Accumulator {
    fn new(p: usize) -> Self {
        Self { counts: vec![[0; 4]; p], sum_beta: vec![0.0; p], sum_alpha: vec![0.0; p], sum_beta_a: 0.0, kept: 0 }
    }

    fn record<C: GibbsChain + ?Sized>(&mut self, chain: &C) {
        let (beta, alpha) = chain.effects();
        for j in 0..beta.len() {
            self.counts[j][chain.group(j)] += 1;
            self.sum_beta[j] += beta[j];
            self.sum_alpha[j] += alpha[j];
        }
        self.sum_beta_a += chain.nuisance().beta_a;
        self.kept += 1;
    }

    fn finish(self) -> Result<PosteriorSummary> {
        let k = self.kept as f64;
        let mean_beta_m: Vec<f64> = self.sum_beta.iter().map(|s| s / k).collect();
        let mean_alpha_a: Vec<f64> = self.sum_alpha.iter().map(|s| s / k).collect();
        let group_posterior: Vec<[f64; 4]> = self.counts.iter().map(|c| c.map(|v| v as f64 / k)).collect();
        let effects = unit_effects(&mean_beta_m, &mean_alpha_a, self.sum_beta_a / k)?;
        Ok(PosteriorSummary {
            pip: group_posterior.iter().map(|g| g[0]).collect(),
            mean_beta_m,
            mean_alpha_a,
            nie_hat: effects.nie_per_mediator,
            nde_hat: effects.nde,
            te_hat: effects.te,
            kept_draws: self.kept,
            group_posterior,
        })
    }
}

/// Zero-pattern group of an effect pair: 0 both nonzero, 1 outcome only,
/// 2 exposure only, 3 neither.
pub fn zero_pattern_group(beta: f64, alpha: f64) -> usize {
    match (beta != 0.0, alpha != 0.0) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// What the iteration driver needs from a sampler.
pub(crate) trait GibbsChain {
    fn sweep(&mut self, rng: &mut ChainRng) -> Result<()>;
    fn effects(&self) -> (&[f64], &[f64]);
    fn nuisance(&self) -> &Nuisance;
    /// Group in `0..4` of mediator j in the current state.
    fn group(&self, j: usize) -> usize;
    fn trace_names(&self) -> Vec<&'static str>;
    fn trace_values(&self) -> Vec<f64>;
    fn invariant_failures(&self) -> Vec<String>;
    /// Name of a non-finite parameter block, if any.
    fn first_non_finite(&self) -> Option<String>;
}

pub(crate) fn drive<C: GibbsChain>(
    chain: &mut C,
    config: &ChainConfig,
    rng: &mut ChainRng,
) -> Result<(PosteriorSummary, Trace)> {
    let p = chain.effects().0.len();
    config.validate(p)?;
    let mut acc = Accumulator::new(p);
    let names = chain.trace_names();
    let mut trace = Trace::new(&names, &config.trace_mediators, config.kept_draws());
    for iter in 0..config.n_iter {
        chain.sweep(rng).map_err(|e| match e {
            Error::Domain(detail) | Error::Numerical(detail) => Error::ChainDivergence { iteration: iter, detail },
            other => other,
        })?;
        if let Some(detail) = chain.first_non_finite() {
            return Err(Error::ChainDivergence { iteration: iter, detail });
        }
        if config.check_invariants {
            let failures = chain.invariant_failures();
            if !failures.is_empty() {
                return Err(Error::Invariant { iteration: iter, failures });
            }
        }
        if config.is_kept(iter) {
            acc.record(chain);
            for (slot, v) in trace.scalars.iter_mut().zip(chain.trace_values()) {
                slot.push(v);
            }
            for (slot, &j) in trace.indicators.iter_mut().zip(&config.trace_mediators) {
                slot.push(u8::from(chain.group(j) == 0));
            }
        }
    }
    Ok((acc.finish()?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::RngStream;

    fn toy() -> MediationDataset {
        let y = vec![1.0, -0.5, 2.0, 0.3, -1.2];
        let a = vec![0.5, -1.0, 1.5, 0.2, -1.2];
        let m = DMatrix::from_row_slice(5, 2, &[0.3, 1.0, -0.2, 0.4, 1.1, -0.7, 0.0, 0.5, -0.9, 0.2]);
        let c = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, 1.0, -0.4, 1.0, 0.9, 1.0, -1.1, 1.0, 0.6]);
        MediationDataset::new(y, a, m, c).unwrap()
    }

    #[test]
    fn mediator_ss_matches_direct_sum() {
        let d = toy();
        let prep = Prepared::new(&d).unwrap();
        let alpha = [0.7, -0.3];
        let alpha_c = DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.4, 0.3]);
        let mut direct = 0.0;
        for j in 0..2 {
            for i in 0..5 {
                let fit = d.a[i] * alpha[j] + d.c[(i, 0)] * alpha_c[(j, 0)] + d.c[(i, 1)] * alpha_c[(j, 1)];
                direct += (d.m[(i, j)] - fit).powi(2);
            }
        }
        assert!((mediator_residual_ss(&prep, &alpha, &alpha_c) - direct).abs() < 1e-12);
    }

    #[test]
    fn residual_tracks_beta_a_update() {
        let d = toy();
        let prep = Prepared::new(&d).unwrap();
        let mut nuis = Nuisance::initial(2, 2);
        nuis.beta_c = vec![0.1, -0.2];
        let beta = [0.4, 0.0];
        let mut r = outcome_residual(&prep, &beta, &nuis);
        let mut rng = RngStream::new(1, 0).rng();
        update_beta_a(&prep, &mut nuis, &mut r, &mut rng);
        update_covariate_effects(&prep, &mut nuis, &mut r, &[0.0, 0.0], &mut rng);
        let fresh = outcome_residual(&prep, &beta, &nuis);
        for (x, y) in r.iter().zip(&fresh) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kept_draw_bookkeeping() {
        let c = ChainConfig { n_iter: 10, burn_in: 3, thin: 3, ..ChainConfig::default() };
        let kept: Vec<usize> = (0..10).filter(|&i| c.is_kept(i)).collect();
        assert_eq!(kept, vec![3, 6, 9]);
        assert_eq!(c.kept_draws(), 3);
        assert!(ChainConfig::new(5, 5).validate(1).is_err());
    }
}
