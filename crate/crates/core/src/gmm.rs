//! Gibbs sampler for the four-component Gaussian mixture prior on
//! `(beta_mj, alpha_aj)`: a full bivariate normal (active), two normals on
//! a single axis, and a point mass at zero.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bilasso::fit_bilasso;
use crate::chain::{
    axpy, dot, drive, outcome_residual, std_normal, update_beta_a, update_covariate_effects, update_variances,
    ChainConfig, GibbsChain, InvGammaPrior, Nuisance, NuisancePriors, PosteriorSummary, Prepared, Trace,
};
use crate::data::MediationDataset;
use crate::diagnostics::check_gmm_state;
use crate::error::{Error, Result};
use crate::randkit::special::log_sum_exp;
use crate::randkit::{sample_dirichlet, sample_inv_wishart_2x2, sample_mvn2, ChainRng};

/// Floor applied to mixture weights before taking logs.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Fallback prior scale when the lasso fit gives too few nonzeros.
pub const PSI0_FALLBACK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmHyper {
    pub dirichlet_a: [f64; 4],
    /// Diagonal of the inverse-Wishart scale matrix.
    pub psi0: [f64; 2],
    pub nu: f64,
    #[serde(default)]
    pub priors: NuisancePriors,
}

impl GmmHyper {
    /// Dirichlet (0.01p, 0.05p, 0.05p, 0.89p), nu = 2.
    pub fn with_psi0(p: usize, psi0: [f64; 2]) -> Self {
        let p = p as f64;
        Self { dirichlet_a: [0.01 * p, 0.05 * p, 0.05 * p, 0.89 * p], psi0, nu: 2.0, priors: NuisancePriors::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dirichlet_a.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            problems.push(format!("dirichlet_a must be strictly positive, got {:?}", self.dirichlet_a));
        }
        if self.psi0.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            problems.push(format!("psi0 diagonal must be positive, got {:?}", self.psi0));
        }
        if !(self.nu >= 2.0 && self.nu.is_finite()) {
            problems.push(format!("nu must be at least 2, got {}", self.nu));
        }
        if let Err(e) = self.priors.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn psi0_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.psi0[0], 0.0, 0.0, self.psi0[1])
    }
}

/// Full state of one GMM chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmState {
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    /// One-hot membership rows.
    pub gamma: Vec<[u8; 4]>,
    pub pi: [f64; 4],
    pub v1: Matrix2<f64>,
    pub sigma2_2: f64,
    pub sigma2_3: f64,
    pub nuisance: Nuisance,
}

impl GmmState {
    /// Neutral start: everything in the null component, pi at the Dirichlet
    /// means, V_1 = Psi_0 / nu.
    pub fn initial(p: usize, q: usize, hyper: &GmmHyper) -> Self {
        let total: f64 = hyper.dirichlet_a.iter().sum();
        Self {
            beta_m: vec![0.0; p],
            alpha_a: vec![0.0; p],
            gamma: vec![[0, 0, 0, 1]; p],
            pi: hyper.dirichlet_a.map(|a| a / total),
            v1: hyper.psi0_matrix() / hyper.nu,
            sigma2_2: hyper.psi0[0] / hyper.nu,
            sigma2_3: hyper.psi0[1] / hyper.nu,
            nuisance: Nuisance::initial(p, q),
        }
    }

    /// Dispersed start: memberships and effects drawn from the prior at the
    /// initial covariances.
    pub fn random<R: Rng + ?Sized>(p: usize, q: usize, hyper: &GmmHyper, rng: &mut R) -> Result<Self> {
        let mut s = Self::initial(p, q, hyper);
        s.nuisance = Nuisance::random(p, q, rng);
        for j in 0..p {
            let u: f64 = rng.random();
            let mut k = 0;
            let mut cum = s.pi[0];
            while u > cum && k < 3 {
                k += 1;
                cum += s.pi[k];
            }
            let cov = match k {
                0 => s.v1,
                1 => Matrix2::new(s.sigma2_2, 0.0, 0.0, 0.0),
                2 => Matrix2::new(0.0, 0.0, 0.0, s.sigma2_3),
                _ => Matrix2::zeros(),
            };
            let x = sample_mvn2(&Vector2::zeros(), &cov, rng)?;
            s.beta_m[j] = x[0];
            s.alpha_a[j] = x[1];
            s.gamma[j] = one_hot(k);
        }
        Ok(s)
    }

    pub fn component(&self, j: usize) -> usize {
        self.gamma[j].iter().position(|&g| g == 1).unwrap_or(3)
    }
}

fn one_hot(k: usize) -> [u8; 4] {
    let mut g = [0; 4];
    g[k] = 1;
    g
}

/// One GMM chain: prepared data, hyperparameters, state and the maintained
/// outcome residual `y - M beta_m - A beta_a - C beta_c`.
#[derive(Debug, Clone)]
pub struct GmmChain<'a> {
    pub prep: Prepared<'a>,
    pub hyper: GmmHyper,
    pub state: GmmState,
    residual: Vec<f64>,
}

impl<'a> GmmChain<'a> {
    pub fn new(data: &'a MediationDataset, hyper: GmmHyper) -> Result<Self> {
        hyper.validate()?;
        let prep = Prepared::new(data)?;
        let state = GmmState::initial(prep.p(), prep.q(), &hyper);
        Ok(Self::with_state(prep, hyper, state))
    }

    pub fn with_state(prep: Prepared<'a>, hyper: GmmHyper, state: GmmState) -> Self {
        let residual = outcome_residual(&prep, &state.beta_m, &state.nuisance);
        Self { prep, hyper, state, residual }
    }

    pub fn set_state(&mut self, state: GmmState) {
        self.residual = outcome_residual(&self.prep, &state.beta_m, &state.nuisance);
        self.state = state;
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// `(W_j, w_j)`: W_j = diag(|M_j|^2 / sigma_e2, |A|^2 / sigma_g2) and w_j the
    /// partial-residual cross-products of both models.
    pub fn effect_suffstats(&self, j: usize) -> (Vector2<f64>, Vector2<f64>) {
        let s = &self.state;
        let (se2, sg2) = (s.nuisance.sigma_e2, s.nuisance.sigma_g2);
        let big_w = Vector2::new(self.prep.m_sq[j] / se2, self.prep.a_sq / sg2);
        let w0 = (dot(self.prep.m_col(j), &self.residual) + self.prep.m_sq[j] * s.beta_m[j]) / se2;
        let w1 = self.prep.mediator_cross(j, &s.nuisance.alpha_c) / sg2;
        (big_w, Vector2::new(w0, w1))
    }

    /// Unnormalised log membership probabilities of mediator j.
    pub fn component_log_weights(&self, j: usize) -> Result<[f64; 4]> {
        let (big_w, w) = self.effect_suffstats(j);
        let s = &self.state;
        let lp = s.pi.map(|p| p.max(WEIGHT_FLOOR).ln());
        let (_, logdet, quad) = full_component(&big_w, &w, &s.v1)?;
        let single = |wd: f64, wv: f64, var: f64| -0.5 * (wd * var).ln_1p() + 0.5 * wv * wv / (wd + 1.0 / var);
        Ok([
            -0.5 * logdet + 0.5 * quad + lp[0],
            single(big_w[0], w[0], s.sigma2_2) + lp[1],
            single(big_w[1], w[1], s.sigma2_3) + lp[2],
            lp[3],
        ])
    }

    /// Draws gamma_j, then (beta_mj, alpha_aj) from the chosen component's
    /// conditional.
    pub fn update_mediator(&mut self, j: usize, rng: &mut ChainRng) -> Result<()> {
        let logw = self.component_log_weights(j)?;
        let lse = log_sum_exp(&logw);
        let u: f64 = rng.random();
        let mut k = 3;
        let mut cum = 0.0;
        for (idx, lw) in logw.iter().enumerate() {
            cum += (lw - lse).exp();
            if u < cum {
                k = idx;
                break;
            }
        }
        let (big_w, w) = self.effect_suffstats(j);
        let s = &self.state;
        let (beta, alpha) = match k {
            0 => {
                let (cov, _, _) = full_component(&big_w, &w, &s.v1)?;
                let x = sample_mvn2(&(cov * w), &cov, rng)?;
                (x[0], x[1])
            }
            1 => {
                let prec = big_w[0] + 1.0 / s.sigma2_2;
                (w[0] / prec + std_normal(rng) / prec.sqrt(), 0.0)
            }
            2 => {
                let prec = big_w[1] + 1.0 / s.sigma2_3;
                (0.0, w[1] / prec + std_normal(rng) / prec.sqrt())
            }
            _ => (0.0, 0.0),
        };
        let old = self.state.beta_m[j];
        if beta != old {
            axpy(old - beta, self.prep.m_col(j), &mut self.residual);
        }
        self.state.beta_m[j] = beta;
        self.state.alpha_a[j] = alpha;
        self.state.gamma[j] = one_hot(k);
        Ok(())
    }

    pub fn membership_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for g in &self.state.gamma {
            for k in 0..4 {
                counts[k] += g[k] as usize;
            }
        }
        counts
    }

    /// Dirichlet parameters of the pi conditional.
    pub fn pi_posterior(&self) -> [f64; 4] {
        let counts = self.membership_counts();
        let mut a = self.hyper.dirichlet_a;
        for k in 0..4 {
            a[k] += counts[k] as f64;
        }
        a
    }

    pub fn update_pi(&mut self, rng: &mut ChainRng) -> Result<()> {
        let draw = sample_dirichlet(&self.pi_posterior(), rng)?;
        self.state.pi.copy_from_slice(&draw);
        Ok(())
    }

    /// Inverse-Wishart scale and degrees of freedom of the V_1 conditional.
    pub fn v1_posterior(&self) -> (Matrix2<f64>, f64) {
        let s = &self.state;
        let mut scale = self.hyper.psi0_matrix();
        let mut count = 0.0;
        for j in 0..s.beta_m.len() {
            if s.gamma[j][0] == 1 {
                let t = Vector2::new(s.beta_m[j], s.alpha_a[j]);
                scale += t * t.transpose();
                count += 1.0;
            }
        }
        (scale, self.hyper.nu + count)
    }

    /// `(shape, scale)` of the sigma2_2 and sigma2_3 conditionals.
    pub fn axis_variance_posteriors(&self) -> [(f64, f64); 2] {
        let s = &self.state;
        let h = &self.hyper;
        let mut out = [(0.5 * h.nu, 0.5 * h.psi0[0]), (0.5 * h.nu, 0.5 * h.psi0[1])];
        for j in 0..s.beta_m.len() {
            if s.gamma[j][1] == 1 {
                out[0].0 += 0.5;
                out[0].1 += 0.5 * s.beta_m[j] * s.beta_m[j];
            }
            if s.gamma[j][2] == 1 {
                out[1].0 += 0.5;
                out[1].1 += 0.5 * s.alpha_a[j] * s.alpha_a[j];
            }
        }
        out
    }

    pub fn update_covariances(&mut self, rng: &mut ChainRng) -> Result<()> {
        let (scale, dof) = self.v1_posterior();
        self.state.v1 = sample_inv_wishart_2x2(&scale, dof, rng)?;
        let [(sh2, sc2), (sh3, sc3)] = self.axis_variance_posteriors();
        self.state.sigma2_2 = InvGammaPrior::new(sh2, sc2).draw(rng)?;
        self.state.sigma2_3 = InvGammaPrior::new(sh3, sc3).draw(rng)?;
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

    /// One systematic scan.
    pub fn sweep(&mut self, rng: &mut ChainRng) -> Result<()> {
        self.residual = outcome_residual(&self.prep, &self.state.beta_m, &self.state.nuisance);
        for j in 0..self.prep.p() {
            self.update_mediator(j, rng)?;
        }
        self.update_pi(rng)?;
        self.update_covariances(rng)?;
        self.update_beta_a(rng);
        self.update_variances(rng)?;
        self.update_covariate_effects(rng);
        Ok(())
    }
}

/// For the full component: `((W + V^-1)^-1, log det(I + W V), w' (W + V^-1)^-1 w)`.
fn full_component(big_w: &Vector2<f64>, w: &Vector2<f64>, v: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64, f64)> {
    // (W + V^-1)^-1 = (I + V W)^-1 V, which avoids inverting V
    let i_vw = Matrix2::identity() + v * Matrix2::from_diagonal(big_w);
    let det = i_vw.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Numerical(format!("det(I + W V_1) = {det}")));
    }
    let inv = Matrix2::new(i_vw[(1, 1)], -i_vw[(0, 1)], -i_vw[(1, 0)], i_vw[(0, 0)]) / det;
    let cov = inv * v;
    let cov = 0.5 * (cov + cov.transpose());
    let quad = w.dot(&(cov * w));
    Ok((cov, det.ln(), quad))
}

impl GibbsChain for GmmChain<'_> {
    fn sweep(&mut self, rng: &mut ChainRng) -> Result<()> {
        GmmChain::sweep(self, rng)
    }

    fn effects(&self) -> (&[f64], &[f64]) {
        (&self.state.beta_m, &self.state.alpha_a)
    }

    fn nuisance(&self) -> &Nuisance {
        &self.state.nuisance
    }

    fn group(&self, j: usize) -> usize {
        self.state.component(j)
    }

    fn trace_names(&self) -> Vec<&'static str> {
        vec![
            "pi1", "pi2", "pi3", "pi4", "v1_11", "v1_12", "v1_22", "sigma2_2", "sigma2_3", "beta_a", "sigma_a2",
            "sigma_e2", "sigma_g2",
        ]
    }

    fn trace_values(&self) -> Vec<f64> {
        let s = &self.state;
        let n = &s.nuisance;
        vec![
            s.pi[0],
            s.pi[1],
            s.pi[2],
            s.pi[3],
            s.v1[(0, 0)],
            s.v1[(0, 1)],
            s.v1[(1, 1)],
            s.sigma2_2,
            s.sigma2_3,
            n.beta_a,
            n.sigma_a2,
            n.sigma_e2,
            n.sigma_g2,
        ]
    }

    fn invariant_failures(&self) -> Vec<String> {
        check_gmm_state(&self.state).failures.iter().map(ToString::to_string).collect()
    }

    fn first_non_finite(&self) -> Option<String> {
        let s = &self.state;
        if let Some(name) = s.nuisance.first_bad() {
            return Some(name.to_string());
        }
        if let Some(j) = (0..s.beta_m.len()).find(|&j| !(s.beta_m[j].is_finite() && s.alpha_a[j].is_finite())) {
            return Some(format!("effects of mediator {j}"));
        }
        if s.v1.iter().any(|v| !v.is_finite()) || !(s.sigma2_2 > 0.0 && s.sigma2_3 > 0.0) {
            return Some("mixture covariances".into());
        }
        None
    }
}

/// Runs one chain and summarises the kept draws.
pub fn run_chain(
    data: &MediationDataset,
    hyper: &GmmHyper,
    config: &ChainConfig,
    rng: &mut ChainRng,
) -> Result<(PosteriorSummary, Trace)> {
    let mut chain = GmmChain::new(data, hyper.clone())?;
    if config.random_init {
        let state = GmmState::random(data.p(), data.q(), hyper, rng)?;
        chain.set_state(state);
    }
    drive(&mut chain, config, rng)
}

/// Diagonal of Psi_0 from the sample variances of the nonzero Bi-Lasso
/// coefficients of each model. A model with fewer than two nonzero
/// coefficients (or zero spread) falls back to [`PSI0_FALLBACK`].
pub fn empirical_bayes_psi0<R: Rng + ?Sized>(data: &MediationDataset, rng: &mut R) -> Result<[f64; 2]> {
    let fit = fit_bilasso(data, rng)?;
    Ok([nonzero_variance(&fit.beta_m), nonzero_variance(&fit.alpha_a)])
}

pub(crate) fn nonzero_variance(xs: &[f64]) -> f64 {
    let nz: Vec<f64> = xs.iter().copied().filter(|v| *v != 0.0).collect();
    if nz.len() < 2 {
        return PSI0_FALLBACK;
    }
    let mean = nz.iter().sum::<f64>() / nz.len() as f64;
    let var = nz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nz.len() - 1) as f64;
    if var > 0.0 {
        var
    } else {
        PSI0_FALLBACK
    }
}
