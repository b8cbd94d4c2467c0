//! A frozen single-mediator instance (n = 20, one covariate) with sampler
//! states and quadrature oracles for the conditionals they induce. Every
//! likelihood here is evaluated from the raw data, not from the sampler's
//! sufficient statistics.

use medsel::chain::{InvGammaPrior, Nuisance, NuisancePriors};
use medsel::gmm::{GmmHyper, GmmState};
use medsel::ptg::{Lambda, PtgHyper, PtgState};
use medsel::MediationDataset;
use nalgebra::{DMatrix, Matrix2};

use super::{integrate, integrate_2d, normal, rng, threshold};

pub const N: usize = 20;

pub fn data() -> MediationDataset {
    let mut r = rng(2024, 7);
    let a: Vec<f64> = (0..N).map(|_| normal(&mut r)).collect();
    let c: Vec<f64> = (0..N).map(|_| 1.0 + 0.5 * normal(&mut r)).collect();
    let m: Vec<f64> = (0..N).map(|i| 0.6 * a[i] + 0.3 * c[i] + 0.8 * normal(&mut r)).collect();
    let y: Vec<f64> = (0..N).map(|i| 0.5 * m[i] + 0.4 * a[i] + 0.2 * c[i] + normal(&mut r)).collect();
    MediationDataset::new(y, a, DMatrix::from_column_slice(N, 1, &m), DMatrix::from_column_slice(N, 1, &c)).unwrap()
}

pub fn priors() -> NuisancePriors {
    let p = InvGammaPrior::new(3.0, 2.0);
    NuisancePriors { sigma_a2: p, sigma_e2: p, sigma_g2: p }
}

fn nuisance(beta_a: f64, beta_c: f64, alpha_c: f64, se2: f64, sg2: f64, sa2: f64) -> Nuisance {
    Nuisance {
        beta_a,
        beta_c: vec![beta_c],
        alpha_c: DMatrix::from_element(1, 1, alpha_c),
        sigma_e2: se2,
        sigma_g2: sg2,
        sigma_a2: sa2,
    }
}

pub fn gmm_hyper() -> GmmHyper {
    GmmHyper { dirichlet_a: [1.0, 2.0, 2.0, 3.0], psi0: [0.4, 0.3], nu: 10.0, priors: priors() }
}

/// States spanning the four memberships and a range of noise levels.
pub fn gmm_states() -> Vec<GmmState> {
    let base = |k: usize, b: f64, al: f64, nuis: Nuisance, pi: [f64; 4], v1: Matrix2<f64>| {
        let mut gamma = [0u8; 4];
        gamma[k] = 1;
        GmmState {
            beta_m: vec![b],
            alpha_a: vec![al],
            gamma: vec![gamma],
            pi,
            v1,
            sigma2_2: 0.3,
            sigma2_3: 0.25,
            nuisance: nuis,
        }
    };
    vec![
        base(
            0,
            0.4,
            0.5,
            nuisance(0.3, 0.1, 0.2, 0.9, 0.7, 1.2),
            [0.2, 0.2, 0.2, 0.4],
            Matrix2::new(0.5, 0.1, 0.1, 0.4),
        ),
        base(
            1,
            0.6,
            0.0,
            nuisance(0.5, 0.0, 0.3, 2.5, 1.5, 0.8),
            [0.1, 0.3, 0.3, 0.3],
            Matrix2::new(0.2, -0.05, -0.05, 0.3),
        ),
        base(
            2,
            0.0,
            0.7,
            nuisance(0.2, 0.2, 0.1, 4.0, 0.5, 1.0),
            [0.05, 0.05, 0.1, 0.8],
            Matrix2::new(1.0, 0.3, 0.3, 0.6),
        ),
        base(
            3,
            0.0,
            0.0,
            nuisance(0.4, -0.1, 0.25, 1.1, 3.0, 2.0),
            [0.3, 0.1, 0.1, 0.5],
            Matrix2::new(0.1, 0.0, 0.0, 0.1),
        ),
    ]
}

pub fn ptg_hyper() -> PtgHyper {
    let tau = InvGammaPrior::new(3.0, 0.5);
    PtgHyper { lambda: Lambda::new(0.15, 0.4, 0.4), tau_beta: tau, tau_alpha: tau, priors: priors() }
}

pub fn ptg_states() -> Vec<PtgState> {
    let lambda = ptg_hyper().lambda;
    let make = |bt: f64, at: f64, tb: f64, ta: f64, nuis: Nuisance| {
        let (b, a) = threshold(&lambda, bt, at);
        PtgState {
            tilde_beta_m: vec![bt],
            tilde_alpha_a: vec![at],
            beta_m: vec![b],
            alpha_a: vec![a],
            tau_beta2: tb,
            tau_alpha2: ta,
            lambda,
            nuisance: nuis,
        }
    };
    vec![
        // both on through the product only
        make(0.35, 0.45, 0.3, 0.25, nuisance(0.3, 0.1, 0.2, 0.9, 0.7, 1.2)),
        // partner below every threshold
        make(0.1, 0.05, 0.5, 0.2, nuisance(0.5, 0.0, 0.3, 2.0, 1.5, 0.8)),
        // both large
        make(-0.8, 0.9, 0.2, 0.6, nuisance(0.2, 0.2, 0.1, 3.0, 0.5, 1.0)),
        // partner exactly zero
        make(0.6, 0.0, 0.4, 0.4, nuisance(0.4, -0.1, 0.25, 1.1, 2.0, 2.0)),
    ]
}

/// `sum (y - m beta - a beta_a - c beta_c)^2 / (2 sigma_e2)` relative to beta = 0, negated.
pub fn outcome_loglik(d: &MediationDataset, beta: f64, nuis: &Nuisance) -> f64 {
    let mut at = 0.0;
    let mut at0 = 0.0;
    for i in 0..d.n() {
        let r = d.y[i] - d.a[i] * nuis.beta_a - d.c[(i, 0)] * nuis.beta_c[0];
        at += (r - d.m[(i, 0)] * beta).powi(2);
        at0 += r * r;
    }
    -(at - at0) / (2.0 * nuis.sigma_e2)
}

pub fn mediator_loglik(d: &MediationDataset, alpha: f64, nuis: &Nuisance) -> f64 {
    let mut at = 0.0;
    let mut at0 = 0.0;
    for i in 0..d.n() {
        let g = d.m[(i, 0)] - d.c[(i, 0)] * nuis.alpha_c[(0, 0)];
        at += (g - d.a[i] * alpha).powi(2);
        at0 += g * g;
    }
    -(at - at0) / (2.0 * nuis.sigma_g2)
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn bvn_pdf(x: f64, y: f64, v: &Matrix2<f64>) -> f64 {
    let det = v[(0, 0)] * v[(1, 1)] - v[(0, 1)] * v[(1, 0)];
    let q = (v[(1, 1)] * x * x - 2.0 * v[(0, 1)] * x * y + v[(0, 0)] * y * y) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

const EFFECT_BREAKS: [f64; 9] = [-10.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 10.0];
const REL: f64 = 1e-12;

/// Membership probabilities and posterior effect means of the single
/// mediator under the GMM prior, by direct quadrature of likelihood times
/// component density.
pub struct GmmOracle {
    pub probs: [f64; 4],
    pub mean_beta: f64,
    pub mean_alpha: f64,
}

pub fn gmm_oracle(d: &MediationDataset, s: &GmmState) -> GmmOracle {
    let nuis = &s.nuisance;
    let lb = |b: f64| outcome_loglik(d, b, nuis).exp();
    let la = |a: f64| mediator_loglik(d, a, nuis).exp();
    let full = |b: f64, a: f64| lb(b) * la(a) * bvn_pdf(b, a, &s.v1);
    let z = [
        integrate_2d(&full, &EFFECT_BREAKS, &EFFECT_BREAKS, REL),
        integrate(&|b| lb(b) * normal_pdf(b, s.sigma2_2), &EFFECT_BREAKS, REL),
        integrate(&|a| la(a) * normal_pdf(a, s.sigma2_3), &EFFECT_BREAKS, REL),
        1.0,
    ];
    let w: Vec<f64> = (0..4).map(|k| s.pi[k] * z[k]).collect();
    let total: f64 = w.iter().sum();
    let probs = [w[0] / total, w[1] / total, w[2] / total, w[3] / total];
    let full_beta = integrate_2d(&|b, a| b * full(b, a), &EFFECT_BREAKS, &EFFECT_BREAKS, REL);
    let full_alpha = integrate_2d(&|b, a| a * full(b, a), &EFFECT_BREAKS, &EFFECT_BREAKS, REL);
    let beta_only = integrate(&|b| b * lb(b) * normal_pdf(b, s.sigma2_2), &EFFECT_BREAKS, REL);
    let alpha_only = integrate(&|a| a * la(a) * normal_pdf(a, s.sigma2_3), &EFFECT_BREAKS, REL);
    GmmOracle {
        probs,
        mean_beta: (s.pi[0] * full_beta + s.pi[1] * beta_only) / total,
        mean_alpha: (s.pi[0] * full_alpha + s.pi[2] * alpha_only) / total,
    }
}

/// First two moments of a PTG latent and the mean of its thresholded effect.
pub struct LatentOracle {
    pub mean: f64,
    pub var: f64,
    pub mean_effect: f64,
}

/// Full conditional of the outcome latent (`outcome = true`) or the
/// exposure latent, from prior times both likelihoods evaluated at the
/// thresholded effects.
pub fn ptg_latent_oracle(d: &MediationDataset, s: &PtgState, outcome: bool) -> LatentOracle {
    let nuis = &s.nuisance;
    let lambda = s.lambda;
    let (bt, at) = (s.tilde_beta_m[0], s.tilde_alpha_a[0]);
    let tau2 = if outcome { s.tau_beta2 } else { s.tau_alpha2 };
    let effects = |x: f64| if outcome { threshold(&lambda, x, at) } else { threshold(&lambda, bt, x) };
    let dens = |x: f64| {
        let (b, a) = effects(x);
        normal_pdf(x, tau2) * (outcome_loglik(d, b, nuis) + mediator_loglik(d, a, nuis)).exp()
    };
    let partner = if outcome { at } else { bt };
    let own = if outcome { lambda.l1 } else { lambda.l2 };
    let mut breaks = EFFECT_BREAKS.to_vec();
    breaks.extend([own, -own]);
    if partner != 0.0 {
        let r = lambda.l0 / partner.abs();
        if r < 10.0 {
            breaks.extend([r, -r]);
        }
    }
    let z = integrate(&dens, &breaks, REL);
    let m1 = integrate(&|x| x * dens(x), &breaks, REL) / z;
    let m2 = integrate(&|x| x * x * dens(x), &breaks, REL) / z;
    let eff = integrate(
        &|x| {
            let (b, a) = effects(x);
            (if outcome { b } else { a }) * dens(x)
        },
        &breaks,
        REL,
    ) / z;
    LatentOracle { mean: m1, var: m2 - m1 * m1, mean_effect: eff }
}
