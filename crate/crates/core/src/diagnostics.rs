//! State invariant checks for both samplers, used by debug runs and tests.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gmm::GmmState;
use crate::ptg::PtgState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantFailure {
    pub id: String,
    pub context: String,
}

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.context)
    }
}

/// Failed invariants of one state; empty when the state is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub iteration: Option<usize>,
    pub failures: Vec<InvariantFailure>,
}

impl InvariantReport {
    pub fn is_empty(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, id: &str, context: String) {
        self.failures.push(InvariantFailure { id: id.to_string(), context });
    }

    fn positive(&mut self, name: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail("variance_positive", format!("{name} = {v}"));
        }
    }
}

pub fn check_gmm_state(s: &GmmState) -> InvariantReport {
    let mut r = InvariantReport::default();
    for (j, g) in s.gamma.iter().enumerate() {
        let sum: u32 = g.iter().map(|&v| u32::from(v)).sum();
        if sum != 1 || g.iter().any(|&v| v > 1) {
            r.fail("gamma_one_hot", format!("row {j} = {g:?} sums to {sum}"));
            continue;
        }
        let (b, a) = (s.beta_m[j], s.alpha_a[j]);
        let ok = match g.iter().position(|&v| v == 1) {
            Some(1) => a.to_bits() == 0,
            Some(2) => b.to_bits() == 0,
            Some(3) => a.to_bits() == 0 && b.to_bits() == 0,
            _ => true,
        };
        if !ok {
            r.fail("membership_zero", format!("mediator {j} in component {g:?} has effects ({b}, {a})"));
        }
    }
    let total: f64 = s.pi.iter().sum();
    if s.pi.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-10 {
        r.fail("pi_simplex", format!("pi = {:?}", s.pi));
    }
    let v = &s.v1;
    let det = v[(0, 0)] * v[(1, 1)] - v[(0, 1)] * v[(1, 0)];
    if !(v[(0, 0)] > 0.0 && det > 0.0) || (v[(0, 1)] - v[(1, 0)]).abs() > 1e-12 * v[(0, 1)].abs().max(1.0) {
        r.fail("v1_spd", format!("V_1 = {v:?}"));
    }
    r.positive("sigma2_2", s.sigma2_2);
    r.positive("sigma2_3", s.sigma2_3);
    r.positive("sigma_e2", s.nuisance.sigma_e2);
    r.positive("sigma_g2", s.nuisance.sigma_g2);
    r.positive("sigma_a2", s.nuisance.sigma_a2);
    r
}

pub fn check_ptg_state(s: &PtgState) -> InvariantReport {
    let mut r = InvariantReport::default();
    for j in 0..s.beta_m.len() {
        let (bt, at) = (s.tilde_beta_m[j], s.tilde_alpha_a[j]);
        let (want_b, want_a) = s.lambda.apply(bt, at);
        if s.beta_m[j].to_bits() != want_b.to_bits() {
            r.fail("threshold_beta", format!("mediator {j}: latent {bt}, effect {}, expected {want_b}", s.beta_m[j]));
        }
        if s.alpha_a[j].to_bits() != want_a.to_bits() {
            r.fail("threshold_alpha", format!("mediator {j}: latent {at}, effect {}, expected {want_a}", s.alpha_a[j]));
        }
    }
    r.positive("tau_beta2", s.tau_beta2);
    r.positive("tau_alpha2", s.tau_alpha2);
    r.positive("sigma_e2", s.nuisance.sigma_e2);
    r.positive("sigma_g2", s.nuisance.sigma_g2);
    r.positive("sigma_a2", s.nuisance.sigma_a2);
    r
}
