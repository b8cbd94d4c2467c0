//! Gibbs sampler for the product-threshold Gaussian prior.
//!
//! Each mediator carries Gaussian latents `(bt, at)` and effects
//!
//! ```text
//! beta  = bt * 1{|bt| > l1  or  |bt at| > l0}
//! alpha = at * 1{|at| > l2  or  |bt at| > l0}
//! ```
//!
//! Conditional on everything else a latent has a piecewise density on the
//! real line: prior-only where its own effect is switched off, prior times
//! likelihood where it is on. Because of the product rule the partner's
//! effect can also switch on once `|bt| > l0 / |at|`, which adds the
//! partner's likelihood ratio on the outer part of each tail. The update
//! splits the line into at most five segments with exact Gaussian masses,
//! picks one, and draws a truncated normal inside it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::zero_pattern_group;
use crate::chain::{
    axpy, dot, drive, outcome_residual, std_normal, update_beta_a, update_covariate_effects, update_variances,
    ChainConfig, GibbsChain, InvGammaPrior, Nuisance, NuisancePriors, PosteriorSummary, Prepared, Trace,
};
use crate::data::MediationDataset;
use crate::diagnostics::check_ptg_state;
use crate::error::{Error, Result};
use crate::randkit::special::{log_norm_interval, log_phi_tail};
use crate::randkit::{sample_log_gamma, sample_truncated_normal, ChainRng};

/// Quantile levels searched by [`calibrate_lambda`].
pub const CALIBRATION_LEVELS: [f64; 7] = [0.80, 0.85, 0.90, 0.93, 0.95, 0.97, 0.99];

/// Shape of the inverse-gamma priors on the latent variances.
pub const TAU_PRIOR_SHAPE: f64 = 1.1;

/// Thresholds `(l0, l1, l2)`: product, outcome effect, exposure effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambda {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Lambda {
    pub const fn new(l0: f64, l1: f64, l2: f64) -> Self {
        Self { l0, l1, l2 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.l0, self.l1, self.l2].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("thresholds must be finite and nonnegative, got {self:?}")))
        }
    }

    /// Radius beyond which the outcome effect is nonzero, given the exposure latent.
    pub fn u_beta(&self, tilde_alpha: f64) -> f64 {
        radius(self.l1, self.l0, tilde_alpha)
    }

    /// Radius beyond which the exposure effect is nonzero, given the outcome latent.
    pub fn u_alpha(&self, tilde_beta: f64) -> f64 {
        radius(self.l2, self.l0, tilde_beta)
    }

    /// Thresholded `(beta, alpha)` of a latent pair; switched-off effects are exactly `0.0`.
    pub fn apply(&self, tilde_beta: f64, tilde_alpha: f64) -> (f64, f64) {
        let product = (tilde_beta * tilde_alpha).abs() > self.l0;
        let beta = if tilde_beta.abs() > self.l1 || product { tilde_beta } else { 0.0 };
        let alpha = if tilde_alpha.abs() > self.l2 || product { tilde_alpha } else { 0.0 };
        (beta, alpha)
    }

    pub fn is_active(&self, tilde_beta: f64, tilde_alpha: f64) -> bool {
        let (b, a) = self.apply(tilde_beta, tilde_alpha);
        b != 0.0 && a != 0.0
    }
}

fn radius(own: f64, l0: f64, partner: f64) -> f64 {
    if partner != 0.0 {
        own.min(l0 / partner.abs())
    } else {
        own
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtgHyper {
    pub lambda: Lambda,
    pub tau_beta: InvGammaPrior,
    pub tau_alpha: InvGammaPrior,
    #[serde(default)]
    pub priors: NuisancePriors,
}

impl PtgHyper {
    /// `tau_beta^2, tau_alpha^2 ~ IG(1.1, tau_hat2)`.
    pub fn new(lambda: Lambda, tau_hat2: f64) -> Self {
        let tau = InvGammaPrior::new(TAU_PRIOR_SHAPE, tau_hat2);
        Self { lambda, tau_beta: tau, tau_alpha: tau, priors: NuisancePriors::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambda.validate()?;
        self.tau_beta.validate("tau_beta")?;
        self.tau_alpha.validate("tau_alpha")?;
        self.priors.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtgState {
    pub tilde_beta_m: Vec<f64>,
    pub tilde_alpha_a: Vec<f64>,
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    pub tau_beta2: f64,
    pub tau_alpha2: f64,
    pub lambda: Lambda,
    pub nuisance: Nuisance,
}

impl PtgState {
    /// Latents at zero, so every effect starts at zero.
    pub fn initial(p: usize, q: usize, lambda: Lambda) -> Self {
        Self {
            tilde_beta_m: vec![0.0; p],
            tilde_alpha_a: vec![0.0; p],
            beta_m: vec![0.0; p],
            alpha_a: vec![0.0; p],
            tau_beta2: 1.0,
            tau_alpha2: 1.0,
            lambda,
            nuisance: Nuisance::initial(p, q),
        }
    }

    /// Dispersed start with latents drawn around random scales.
    pub fn random<R: Rng + ?Sized>(p: usize, q: usize, lambda: Lambda, rng: &mut R) -> Self {
        let mut s = Self::initial(p, q, lambda);
        s.nuisance = Nuisance::random(p, q, rng);
        s.tau_beta2 = rng.random_range(0.02..0.5);
        s.tau_alpha2 = rng.random_range(0.02..0.5);
        for j in 0..p {
            s.tilde_beta_m[j] = s.tau_beta2.sqrt() * std_normal(rng);
            s.tilde_alpha_a[j] = s.tau_alpha2.sqrt() * std_normal(rng);
        }
        s.apply_threshold();
        s
    }

    /// Recomputes every effect from the latents.
    pub fn apply_threshold(&mut self) {
        for j in 0..self.beta_m.len() {
            let (b, a) = self.lambda.apply(self.tilde_beta_m[j], self.tilde_alpha_a[j]);
            self.beta_m[j] = b;
            self.alpha_a[j] = a;
        }
    }

    pub fn threshold_u_beta(&self, j: usize) -> f64 {
        self.lambda.u_beta(self.tilde_alpha_a[j])
    }

    pub fn threshold_u_alpha(&self, j: usize) -> f64 {
        self.lambda.u_alpha(self.tilde_beta_m[j])
    }
}

/// Posterior masses `(mid, hi, lo)` of `{|x| < u}`, `{x >= u}`, `{x <= -u}`
/// for a latent whose conditional is `N(0, tau2)` inside `(-u, u)` and
/// `N(0, tau2)` times a Gaussian likelihood outside, with slab moments
/// `(mu, s2)`.
pub fn region_weights(mu: f64, s2: f64, tau2: f64, u: f64) -> Result<[f64; 3]> {
    if !(s2 > 0.0 && tau2 > 0.0) || !(u >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "region weights need s2, tau2 > 0 and u >= 0, got ({mu}, {s2}, {tau2}, {u})"
        )));
    }
    if u == f64::INFINITY {
        return Ok([1.0, 0.0, 0.0]);
    }
    let tau = tau2.sqrt();
    let s = s2.sqrt();
    let log_k = (s / tau).ln() + 0.5 * mu * mu / s2;
    let mid = log_norm_interval(-u / tau, u / tau);
    let hi = log_k + log_phi_tail((u - mu) / s);
    let lo = log_k + log_phi_tail((u + mu) / s);
    let top = mid.max(hi).max(lo);
    let (em, eh, el) = ((mid - top).exp(), (hi - top).exp(), (lo - top).exp());
    let total = em + (eh + el);
    Ok([em / total, eh / total, el / total])
}

/// A latent's full conditional: prior `N(0, tau2)`, own likelihood
/// `exp(b x - a x^2 / 2)` for `|x| > u`, and a partner log-likelihood
/// ratio `c` once `|x| > bp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentConditional {
    pub tau2: f64,
    pub a: f64,
    pub b: f64,
    pub u: f64,
    pub bp: f64,
    pub c: f64,
}

/// Piece of the real line with its own Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    /// Log of the unnormalised mass.
    pub log_mass: f64,
    /// Prior kernel if false, slab kernel if true.
    pub slab: bool,
}

impl LatentConditional {
    /// Slab moments `(mu, s2)`.
    pub fn slab(&self) -> (f64, f64) {
        let s2 = 1.0 / (1.0 / self.tau2 + self.a);
        (s2 * self.b, s2)
    }

    /// The (up to) five segments, ordered left to right.
    pub fn segments(&self) -> [Segment; 5] {
        let tau = self.tau2.sqrt();
        let (mu, s2) = self.slab();
        let s = s2.sqrt();
        let log_k = (s / tau).ln() + 0.5 * mu * mu / s2;
        let (u, bp) = (self.u, self.bp.max(self.u));
        let z = |x: f64| (x - mu) / s;
        let slab = |lo: f64, hi: f64, extra: f64| Segment {
            lo,
            hi,
            log_mass: if lo < hi { log_k + extra + log_norm_interval(z(lo), z(hi)) } else { f64::NEG_INFINITY },
            slab: true,
        };
        [
            slab(f64::NEG_INFINITY, -bp, self.c),
            slab(-bp, -u, 0.0),
            Segment { lo: -u, hi: u, log_mass: log_norm_interval(-u / tau, u / tau), slab: false },
            slab(u, bp, 0.0),
            slab(bp, f64::INFINITY, self.c),
        ]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let segs = self.segments();
        let top = segs.iter().map(|s| s.log_mass).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numerical(format!("latent conditional has no mass: {self:?}")));
        }
        let weights = segs.map(|s| (s.log_mass - top).exp());
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut pick = weights.iter().rposition(|w| *w > 0.0).unwrap_or(2);
        for (k, w) in weights.iter().enumerate() {
            cum += w;
            if target < cum && *w > 0.0 {
                pick = k;
                break;
            }
        }
        let seg = segs[pick];
        if seg.slab {
            let (mu, s2) = self.slab();
            sample_truncated_normal(mu, s2, seg.lo, seg.hi, rng)
        } else {
            sample_truncated_normal(0.0, self.tau2, seg.lo, seg.hi, rng)
        }
    }
}

/// One PTG chain with its maintained outcome residual.
#[derive(Debug, Clone)]
pub struct PtgChain<'a> {
    pub prep: Prepared<'a>,
    pub hyper: PtgHyper,
    pub state: PtgState,
    residual: Vec<f64>,
}

impl<'a> PtgChain<'a> {
    pub fn new(data: &'a MediationDataset, hyper: PtgHyper) -> Result<Self> {
        hyper.validate()?;
        let prep = Prepared::new(data)?;
        let state = PtgState::initial(prep.p(), prep.q(), hyper.lambda);
        Ok(Self::with_state(prep, hyper, state))
    }

    pub fn with_state(prep: Prepared<'a>, hyper: PtgHyper, state: PtgState) -> Self {
        let residual = outcome_residual(&prep, &state.beta_m, &state.nuisance);
        Self { prep, hyper, state, residual }
    }

    pub fn set_state(&mut self, state: PtgState) {
        self.residual = outcome_residual(&self.prep, &state.beta_m, &state.nuisance);
        self.state = state;
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// Outcome-model likelihood of mediator j as `(a, b)` in `exp(b x - a x^2 / 2)`,
    /// with j's own contribution removed from the residual.
    fn outcome_terms(&self, j: usize) -> (f64, f64) {
        let se2 = self.state.nuisance.sigma_e2;
        let a = self.prep.m_sq[j] / se2;
        let b = (dot(self.prep.m_col(j), &self.residual) + self.prep.m_sq[j] * self.state.beta_m[j]) / se2;
        (a, b)
    }

    fn mediator_terms(&self, j: usize) -> (f64, f64) {
        let sg2 = self.state.nuisance.sigma_g2;
        (self.prep.a_sq / sg2, self.prep.mediator_cross(j, &self.state.nuisance.alpha_c) / sg2)
    }

    /// Full conditional of the outcome latent of mediator j.
    pub fn beta_conditional(&self, j: usize) -> LatentConditional {
        let s = &self.state;
        let (a, b) = self.outcome_terms(j);
        let partner = s.tilde_alpha_a[j];
        let (bp, c) = if partner != 0.0 && partner.abs() <= s.lambda.l2 {
            let (pa, pb) = self.mediator_terms(j);
            (s.lambda.l0 / partner.abs(), partner * pb - 0.5 * partner * partner * pa)
        } else {
            (f64::INFINITY, 0.0)
        };
        LatentConditional { tau2: s.tau_beta2, a, b, u: s.threshold_u_beta(j), bp, c }
    }

    /// Full conditional of the exposure latent of mediator j.
    pub fn alpha_conditional(&self, j: usize) -> LatentConditional {
        let s = &self.state;
        let (a, b) = self.mediator_terms(j);
        let partner = s.tilde_beta_m[j];
        let (bp, c) = if partner != 0.0 && partner.abs() <= s.lambda.l1 {
            let (pa, pb) = self.outcome_terms(j);
            (s.lambda.l0 / partner.abs(), partner * pb - 0.5 * partner * partner * pa)
        } else {
            (f64::INFINITY, 0.0)
        };
        LatentConditional { tau2: s.tau_alpha2, a, b, u: s.threshold_u_alpha(j), bp, c }
    }

    fn rethreshold(&mut self, j: usize) {
        let s = &mut self.state;
        let (b, a) = s.lambda.apply(s.tilde_beta_m[j], s.tilde_alpha_a[j]);
        let old = s.beta_m[j];
        if b != old {
            axpy(old - b, self.prep.m_col(j), &mut self.residual);
        }
        s.beta_m[j] = b;
        s.alpha_a[j] = a;
    }

    pub fn update_tilde_beta(&mut self, j: usize, rng: &mut ChainRng) -> Result<()> {
        self.state.tilde_beta_m[j] = self.beta_conditional(j).sample(rng)?;
        self.rethreshold(j);
        Ok(())
    }

    pub fn update_tilde_alpha(&mut self, j: usize, rng: &mut ChainRng) -> Result<()> {
        self.state.tilde_alpha_a[j] = self.alpha_conditional(j).sample(rng)?;
        self.rethreshold(j);
        Ok(())
    }

    /// `(shape, scale)` of the two latent-variance conditionals.
    pub fn tau2_posteriors(&self) -> [(f64, f64); 2] {
        let s = &self.state;
        let half_p = 0.5 * s.tilde_beta_m.len() as f64;
        let sb: f64 = s.tilde_beta_m.iter().map(|v| v * v).sum();
        let sa: f64 = s.tilde_alpha_a.iter().map(|v| v * v).sum();
        [
            (self.hyper.tau_beta.shape + half_p, self.hyper.tau_beta.scale + 0.5 * sb),
            (self.hyper.tau_alpha.shape + half_p, self.hyper.tau_alpha.scale + 0.5 * sa),
        ]
    }

    pub fn update_tau2(&mut self, rng: &mut ChainRng) -> Result<()> {
        let [(sb, cb), (sa, ca)] = self.tau2_posteriors();
        self.state.tau_beta2 = InvGammaPrior::new(sb, cb).draw(rng)?;
        self.state.tau_alpha2 = InvGammaPrior::new(sa, ca).draw(rng)?;
        Ok(())
    }

    pub fn update_beta_a(&mut self, rng: &mut ChainRng) {
        update_beta_a(&self.prep, &mut self.state.nuisance, &mut self.residual, rng);
    }

    pub fn update_variances(&mut self, rng: &mut ChainRng) -> Result<()> {
        let s = &mut self.state;
        update_variances(&self.prep, &mut s.nuisance, &self.residual, &s.alpha_a, &self.hyper.priors, rng)
    }

    pub fn update_covariate_effects(&mut self, rng: &mut ChainRng) {
        let s = &mut self.state;
        update_covariate_effects(&self.prep, &mut s.nuisance, &mut self.residual, &s.alpha_a, rng);
    }

    pub fn sweep(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.residual = outcome_residual(&self.prep, &self.state.beta_m, &self.state.nuisance);
        for j in 0..self.prep.p() {
            self.update_tilde_beta(j, rng)?;
            self.update_tilde_alpha(j, rng)?;
        }
        self.update_tau2(rng)?;
        self.update_beta_a(rng);
        self.update_variances(rng)?;
        self.update_covariate_effects(rng);
        Ok(())
    }
}

impl GibbsChain for PtgChain<'_> {
    fn sweep(&mut self, rng: &mut ChainRng) -> Result<()> {
        PtgChain::sweep(self, rng)
    }

    fn effects(&self) -> (&[f64], &[f64]) {
        (&self.state.beta_m, &self.state.alpha_a)
    }

    fn nuisance(&self) -> &Nuisance {
        &self.state.nuisance
    }

    fn group(&self, j: usize) -> usize {
        zero_pattern_group(self.state.beta_m[j], self.state.alpha_a[j])
    }

    fn trace_names(&self) -> Vec<&'static str> {
        vec!["tau_beta2", "tau_alpha2", "beta_a", "sigma_a2", "sigma_e2", "sigma_g2", "n_active"]
    }

    fn trace_values(&self) -> Vec<f64> {
        let s = &self.state;
        let n = &s.nuisance;
        let active = (0..s.beta_m.len()).filter(|&j| s.beta_m[j] != 0.0 && s.alpha_a[j] != 0.0).count();
        vec![s.tau_beta2, s.tau_alpha2, n.beta_a, n.sigma_a2, n.sigma_e2, n.sigma_g2, active as f64]
    }

    fn invariant_failures(&self) -> Vec<String> {
        check_ptg_state(&self.state).failures.iter().map(ToString::to_string).collect()
    }

    fn first_non_finite(&self) -> Option<String> {
        let s = &self.state;
        if let Some(name) = s.nuisance.first_bad() {
            return Some(name.to_string());
        }
        if !(s.tau_beta2 > 0.0 && s.tau_beta2.is_finite() && s.tau_alpha2 > 0.0 && s.tau_alpha2.is_finite()) {
            return Some("latent variances".into());
        }
        (0..s.beta_m.len())
            .find(|&j| !(s.tilde_beta_m[j].is_finite() && s.tilde_alpha_a[j].is_finite()))
            .map(|j| format!("latents of mediator {j}"))
    }
}

pub fn run_chain(
    data: &MediationDataset,
    hyper: &PtgHyper,
    config: &ChainConfig,
    rng: &mut ChainRng,
) -> Result<(PosteriorSummary, Trace)> {
    let mut chain = PtgChain::new(data, hyper.clone())?;
    if config.random_init {
        chain.set_state(PtgState::random(data.p(), data.q(), hyper.lambda, rng));
    }
    drive(&mut chain, config, rng)
}

/// Fraction of `n_mc` latent pairs from `N(0, diag(tau_beta2, tau_alpha2))`
/// that survive thresholding with both effects nonzero.
pub fn prior_active_fraction<R: Rng + ?Sized>(
    lambda: &Lambda,
    tau_beta2: f64,
    tau_alpha2: f64,
    n_mc: usize,
    rng: &mut R,
) -> f64 {
    let (sb, sa) = (tau_beta2.sqrt(), tau_alpha2.sqrt());
    let hits = (0..n_mc).filter(|_| lambda.is_active(sb * std_normal(rng), sa * std_normal(rng))).count();
    hits as f64 / n_mc as f64
}

/// Result of [`calibrate_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCalibration {
    pub lambda: Lambda,
    /// Survivor fraction of the chosen thresholds on the calibration draws.
    pub achieved: f64,
    /// Quantile levels that produced `(l0, l1, l2)`.
    pub levels: [f64; 3],
}

pub(crate) fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Grid search over prior quantiles of `|bt|`, `|at|` (for l1, l2) and
/// `|bt at|` (for l0) for the thresholds whose Monte Carlo active fraction
/// is closest to `target_pi1`; ties go to the smallest l0. Fails when the
/// closest candidate is more than 10% (relative) off target.
pub fn calibrate_lambda<R: Rng + ?Sized>(
    tau_beta2: f64,
    tau_alpha2: f64,
    target_pi1: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<LambdaCalibration> {
    if !(target_pi1 > 0.0 && target_pi1 < 1.0) {
        return Err(Error::Domain(format!("target proportion must lie in (0, 1), got {target_pi1}")));
    }
    if n_mc < 100_000 {
        return Err(Error::Domain(format!("calibration needs at least 1e5 draws, got {n_mc}")));
    }
    if !(tau_beta2 > 0.0 && tau_alpha2 > 0.0) {
        return Err(Error::Domain(format!("latent variances must be positive, got ({tau_beta2}, {tau_alpha2})")));
    }
    let (sb, sa) = (tau_beta2.sqrt(), tau_alpha2.sqrt());
    let pairs: Vec<(f64, f64)> = (0..n_mc).map(|_| (sb * std_normal(rng), sa * std_normal(rng))).collect();
    let sorted = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let mut v: Vec<f64> = pairs.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        CALIBRATION_LEVELS.map(|l| quantile_sorted(&v, l))
    };
    let qb = sorted(&|p| p.0.abs());
    let qa = sorted(&|p| p.1.abs());
    let q0 = sorted(&|p| (p.0 * p.1).abs());
    let mut best: Option<(f64, LambdaCalibration)> = None;
    for (i0, &l0) in q0.iter().enumerate() {
        for (i1, &l1) in qb.iter().enumerate() {
            for (i2, &l2) in qa.iter().enumerate() {
                let lambda = Lambda::new(l0, l1, l2);
                let hits = pairs.iter().filter(|(b, a)| lambda.is_active(*b, *a)).count();
                let achieved = hits as f64 / n_mc as f64;
                let dist = (achieved - target_pi1).abs();
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    let levels = [CALIBRATION_LEVELS[i0], CALIBRATION_LEVELS[i1], CALIBRATION_LEVELS[i2]];
                    best = Some((dist, LambdaCalibration { lambda, achieved, levels }));
                }
            }
        }
    }
    let (_, cal) = best.expect("grid is non-empty");
    if (cal.achieved / target_pi1 - 1.0).abs() > 0.1 {
        return Err(Error::Calibration { target: target_pi1, achieved: cal.achieved });
    }
    Ok(cal)
}

/// Scale `tau_hat2` of the `IG(1.1, tau_hat2)` latent-variance priors at
/// which the marginal prior probability of an active pair equals
/// `target_pi1` for fixed thresholds. Bisection on common random numbers.
pub fn calibrate_tau_hat2<R: Rng + ?Sized>(lambda: &Lambda, target_pi1: f64, n_mc: usize, rng: &mut R) -> Result<f64> {
    if !(target_pi1 > 0.0 && target_pi1 < 1.0) {
        return Err(Error::Domain(format!("target proportion must lie in (0, 1), got {target_pi1}")));
    }
    lambda.validate()?;
    // IG(k, t) = t * IG(k, 1); latent = sqrt(t) * z / sqrt(G), G ~ Gamma(k, 1)
    let mut unit = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let gb = sample_log_gamma(TAU_PRIOR_SHAPE, rng)?;
        let ga = sample_log_gamma(TAU_PRIOR_SHAPE, rng)?;
        unit.push((std_normal(rng) * (-0.5 * gb).exp(), std_normal(rng) * (-0.5 * ga).exp()));
    }
    let fraction = |log_t: f64| {
        let s = (0.5 * log_t).exp();
        unit.iter().filter(|(b, a)| lambda.is_active(s * b, s * a)).count() as f64 / n_mc as f64
    };
    let (mut lo, mut hi) = (-30.0f64, 15.0f64);
    if fraction(lo) > target_pi1 || fraction(hi) < target_pi1 {
        let achieved = if fraction(lo) > target_pi1 { fraction(lo) } else { fraction(hi) };
        return Err(Error::Calibration { target: target_pi1, achieved });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fraction(mid) < target_pi1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
