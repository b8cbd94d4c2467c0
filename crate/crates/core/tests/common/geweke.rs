//! Joint-distribution (Geweke) simulators for both samplers with q = 0.
//!
//! The marginal-conditional simulator draws parameters from the prior with
//! generators written here. The successive-conditional simulator alternates
//! one sampler sweep with a fresh draw of the data given the parameters.
//! Both must agree on every prior moment.

use medsel::chain::{InvGammaPrior, Nuisance, NuisancePriors, Prepared};
use medsel::gmm::{GmmChain, GmmHyper, GmmState};
use medsel::ptg::{Lambda, PtgChain, PtgHyper, PtgState};
use medsel::randkit::ChainRng;
use medsel::MediationDataset;
use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{columns, inv_gamma, normal, threshold};

pub const N: usize = 10;
pub const P: usize = 2;

fn proper() -> NuisancePriors {
    let p = InvGammaPrior::new(3.0, 2.0);
    NuisancePriors { sigma_a2: p, sigma_e2: p, sigma_g2: p }
}

pub fn gmm_hyper() -> GmmHyper {
    GmmHyper { dirichlet_a: [1.0, 1.0, 1.0, 2.0], psi0: [0.5, 0.5], nu: 5.0, priors: proper() }
}

pub fn ptg_hyper() -> PtgHyper {
    let tau = InvGammaPrior::new(3.0, 1.0);
    PtgHyper { lambda: Lambda::new(0.1, 0.3, 0.3), tau_beta: tau, tau_alpha: tau, priors: proper() }
}

fn ig<R: Rng + ?Sized>(p: InvGammaPrior, rng: &mut R) -> f64 {
    inv_gamma(p.shape, p.scale, rng)
}

fn nuisance_prior<R: Rng + ?Sized>(pr: &NuisancePriors, rng: &mut R) -> Nuisance {
    let sigma_a2 = ig(pr.sigma_a2, rng);
    Nuisance {
        beta_a: sigma_a2.sqrt() * normal(rng),
        beta_c: Vec::new(),
        alpha_c: DMatrix::zeros(P, 0),
        sigma_e2: ig(pr.sigma_e2, rng),
        sigma_g2: ig(pr.sigma_g2, rng),
        sigma_a2,
    }
}

/// Inverse-Wishart draw for integer degrees of freedom: the inverse of a
/// sum of `nu` outer products of `N(0, psi^-1)` vectors.
fn inv_wishart<R: Rng + ?Sized>(psi: &Matrix2<f64>, nu: usize, rng: &mut R) -> Matrix2<f64> {
    let l = psi.try_inverse().unwrap().cholesky().unwrap().l();
    let mut w = Matrix2::zeros();
    for _ in 0..nu {
        let z = l * Vector2::new(normal(rng), normal(rng));
        w += z * z.transpose();
    }
    w.try_inverse().unwrap()
}

pub fn gmm_prior<R: Rng + ?Sized>(h: &GmmHyper, rng: &mut R) -> GmmState {
    let g: Vec<f64> = h.dirichlet_a.iter().map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng)).collect();
    let total: f64 = g.iter().sum();
    let pi = [g[0] / total, g[1] / total, g[2] / total, g[3] / total];
    let v1 = inv_wishart(&Matrix2::new(h.psi0[0], 0.0, 0.0, h.psi0[1]), h.nu as usize, rng);
    let sigma2_2 = inv_gamma(0.5 * h.nu, 0.5 * h.psi0[0], rng);
    let sigma2_3 = inv_gamma(0.5 * h.nu, 0.5 * h.psi0[1], rng);
    let chol = v1.cholesky().unwrap().l();
    let mut s = GmmState {
        beta_m: vec![0.0; P],
        alpha_a: vec![0.0; P],
        gamma: vec![[0, 0, 0, 1]; P],
        pi,
        v1,
        sigma2_2,
        sigma2_3,
        nuisance: nuisance_prior(&h.priors, rng),
    };
    for j in 0..P {
        let u: f64 = rng.random();
        let k = if u < pi[0] {
            0
        } else if u < pi[0] + pi[1] {
            1
        } else if u < pi[0] + pi[1] + pi[2] {
            2
        } else {
            3
        };
        let (b, a) = match k {
            0 => {
                let t = chol * Vector2::new(normal(rng), normal(rng));
                (t[0], t[1])
            }
            1 => (sigma2_2.sqrt() * normal(rng), 0.0),
            2 => (0.0, sigma2_3.sqrt() * normal(rng)),
            _ => (0.0, 0.0),
        };
        s.beta_m[j] = b;
        s.alpha_a[j] = a;
        s.gamma[j] = [0; 4];
        s.gamma[j][k] = 1;
    }
    s
}

pub fn ptg_prior<R: Rng + ?Sized>(h: &PtgHyper, rng: &mut R) -> PtgState {
    let tau_beta2 = ig(h.tau_beta, rng);
    let tau_alpha2 = ig(h.tau_alpha, rng);
    let tb: Vec<f64> = (0..P).map(|_| tau_beta2.sqrt() * normal(rng)).collect();
    let ta: Vec<f64> = (0..P).map(|_| tau_alpha2.sqrt() * normal(rng)).collect();
    let (mut beta, mut alpha) = (vec![0.0; P], vec![0.0; P]);
    for j in 0..P {
        (beta[j], alpha[j]) = threshold(&h.lambda, tb[j], ta[j]);
    }
    PtgState {
        tilde_beta_m: tb,
        tilde_alpha_a: ta,
        beta_m: beta,
        alpha_a: alpha,
        tau_beta2,
        tau_alpha2,
        lambda: h.lambda,
        nuisance: nuisance_prior(&h.priors, rng),
    }
}

/// Data given parameters: `M = A alpha' + E_g`, `Y = M beta + A beta_a + e`.
pub fn data_given<R: Rng + ?Sized>(
    a: &[f64],
    beta: &[f64],
    alpha: &[f64],
    nuis: &Nuisance,
    rng: &mut R,
) -> MediationDataset {
    let (se, sg) = (nuis.sigma_e2.sqrt(), nuis.sigma_g2.sqrt());
    let m = DMatrix::from_fn(N, P, |i, j| a[i] * alpha[j] + sg * normal(rng));
    let y = (0..N)
        .map(|i| (0..P).map(|j| m[(i, j)] * beta[j]).sum::<f64>() + a[i] * nuis.beta_a + se * normal(rng))
        .collect();
    MediationDataset::without_covariates(y, a.to_vec(), m).unwrap()
}

/// Paired statistic series from both simulators.
pub struct GewekeRun {
    pub names: Vec<&'static str>,
    pub forward: Vec<Vec<f64>>,
    pub successive: Vec<Vec<f64>>,
}

fn gmm_stats(s: &GmmState) -> Vec<f64> {
    vec![s.nuisance.beta_a, s.nuisance.sigma_e2, s.pi[0], s.nuisance.sigma_g2]
}

fn ptg_stats(s: &PtgState) -> Vec<f64> {
    let active = (0..P).filter(|&j| s.beta_m[j] != 0.0 && s.alpha_a[j] != 0.0).count();
    vec![s.nuisance.beta_a, s.nuisance.sigma_e2, s.tau_beta2, active as f64]
}

pub fn gmm_run(a: &[f64], rounds: usize, rng: &mut ChainRng) -> GewekeRun {
    let h = gmm_hyper();
    let forward = columns(rounds, || gmm_stats(&gmm_prior(&h, rng)));
    let mut state = gmm_prior(&h, rng);
    let mut data = data_given(a, &state.beta_m, &state.alpha_a, &state.nuisance, rng);
    let successive = columns(rounds, || {
        let mut chain = GmmChain::with_state(Prepared::new(&data).unwrap(), h.clone(), state.clone());
        chain.sweep(rng).unwrap();
        state = chain.state;
        data = data_given(a, &state.beta_m, &state.alpha_a, &state.nuisance, rng);
        gmm_stats(&state)
    });
    GewekeRun { names: vec!["beta_a", "sigma_e2", "pi1", "sigma_g2"], forward, successive }
}

pub fn ptg_run(a: &[f64], rounds: usize, rng: &mut ChainRng) -> GewekeRun {
    let h = ptg_hyper();
    let forward = columns(rounds, || ptg_stats(&ptg_prior(&h, rng)));
    let mut state = ptg_prior(&h, rng);
    let mut data = data_given(a, &state.beta_m, &state.alpha_a, &state.nuisance, rng);
    let successive = columns(rounds, || {
        let mut chain = PtgChain::with_state(Prepared::new(&data).unwrap(), h.clone(), state.clone());
        chain.sweep(rng).unwrap();
        state = chain.state;
        data = data_given(a, &state.beta_m, &state.alpha_a, &state.nuisance, rng);
        ptg_stats(&state)
    });
    GewekeRun { names: vec!["beta_a", "sigma_e2", "tau_beta2", "n_active"], forward, successive }
}
