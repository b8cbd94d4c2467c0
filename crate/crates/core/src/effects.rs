//! Natural direct/indirect/total effect arithmetic for the linear,
//! no-interaction outcome and mediator models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Effect decomposition for the exposure contrast `a` versus `a_star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectDecomposition {
    pub nde: f64,
    pub nie_total: f64,
    pub nie_per_mediator: Vec<f64>,
    pub te: f64,
    pub contrast: (f64, f64),
}

/// NDE = beta_a (a - a*), NIE_j = alpha_aj beta_mj (a - a*), TE = NDE + NIE.
///
/// `nie_total` is accumulated left to right over mediators so that the
/// additivity identities hold exactly.
pub fn compute_effects(
    beta_m: &[f64],
    alpha_a: &[f64],
    beta_a: f64,
    a: f64,
    a_star: f64,
) -> Result<EffectDecomposition> {
    if beta_m.len() != alpha_a.len() {
        return Err(Error::Dimension(format!(
            "beta_m has length {}, alpha_a has length {}",
            beta_m.len(),
            alpha_a.len()
        )));
    }
    if !a.is_finite() || !a_star.is_finite() {
        return Err(Error::Domain(format!("exposure levels must be finite, got ({a}, {a_star})")));
    }
    let delta = a - a_star;
    let nie_per_mediator: Vec<f64> = beta_m.iter().zip(alpha_a).map(|(b, al)| al * b * delta).collect();
    let nie_total = nie_per_mediator.iter().fold(0.0, |acc, v| acc + v);
    let nde = beta_a * delta;
    Ok(EffectDecomposition { nde, nie_total, nie_per_mediator, te: nde + nie_total, contrast: (a, a_star) })
}

/// Unit contrast (a - a* = 1), the default reporting scale.
pub fn unit_effects(beta_m: &[f64], alpha_a: &[f64], beta_a: f64) -> Result<EffectDecomposition> {
    compute_effects(beta_m, alpha_a, beta_a, 1.0, 0.0)
}
