//! Synthetic mediation studies with known effects.
//!
//! Effects come from one of five designs: two fixed-magnitude designs and
//! three random ones (thresholded Gaussian, four-component Gaussian mixture,
//! horseshoe mixture). Data follow the linear mediator and outcome models
//! with a standard normal exposure and no covariates.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{std_normal, zero_pattern_group};
use crate::data::MediationDataset;
use crate::error::{Error, Result};
use crate::ptg::{quantile_sorted, Lambda};
use crate::randkit::{sample_mvn2, sample_truncated_half_cauchy, ChainRng, RngStream};

/// Magnitude of every nonzero effect in [`Setting::FixedI`].
pub const FIXED_I_MAGNITUDE: f64 = 0.5;

/// Magnitudes and shares of nonzero effects in [`Setting::FixedII`].
pub const FIXED_II_LEVELS: [(f64, f64); 3] = [(0.3, 0.4), (0.5, 0.3), (0.7, 0.3)];

/// Group proportions used throughout the benchmark studies.
pub const DEFAULT_PROPORTIONS: [f64; 4] = [0.05, 0.05, 0.10, 0.80];

/// Monte Carlo draws used when solving thresholds for [`Setting::RandomPtg`].
pub const LAMBDA_SOLVE_DRAWS: usize = 100_000;

const EFFECTS_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    FixedI,
    FixedII,
    RandomPtg,
    RandomGmm,
    RandomHorseshoe,
}

impl Setting {
    pub fn is_fixed(self) -> bool {
        matches!(self, Setting::FixedI | Setting::FixedII)
    }
}

/// Parameters of the random designs; each setting reads only its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectParams {
    /// Latent variance for `RandomPtg`.
    pub sigma_u2: Option<f64>,
    /// Slab variance for `RandomGmm` and `RandomHorseshoe`.
    pub sigma2: Option<f64>,
    /// Truncation point of the half-Cauchy scale for `RandomHorseshoe`.
    pub b: Option<f64>,
    /// Thresholds for `RandomPtg`; solved from the proportions when absent.
    pub lambda: Option<Lambda>,
}

/// Mediator residual correlation, multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResidualCov {
    Identity,
    Exchangeable { rho: f64 },
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub proportions: [f64; 4],
    pub setting: Setting,
    #[serde(default)]
    pub effect_params: EffectParams,
    #[serde(default = "default_beta_a")]
    pub beta_a: f64,
    #[serde(default = "default_residual_cov")]
    pub residual_cov: ResidualCov,
    #[serde(default = "default_scale")]
    pub residual_scale: f64,
    pub seed: u64,
}

fn default_beta_a() -> f64 {
    0.5
}

fn default_residual_cov() -> ResidualCov {
    ResidualCov::Identity
}

fn default_scale() -> f64 {
    1.0
}

impl SimulationConfig {
    /// Benchmark configuration for `setting` with the effect scales used in
    /// the small (p ≤ 500) or large scenario.
    pub fn benchmark(setting: Setting, n: usize, p: usize, seed: u64) -> Self {
        let small = p <= 500;
        let effect_params = match setting {
            Setting::FixedI | Setting::FixedII => EffectParams::default(),
            Setting::RandomPtg => EffectParams { sigma_u2: Some(if small { 0.3 } else { 0.1 }), ..Default::default() },
            Setting::RandomGmm => EffectParams { sigma2: Some(if small { 0.3 } else { 0.1 }), ..Default::default() },
            Setting::RandomHorseshoe => {
                EffectParams { sigma2: Some(if small { 0.5 } else { 0.3 }), b: Some(3.0), ..Default::default() }
            }
        };
        Self {
            n,
            p,
            proportions: DEFAULT_PROPORTIONS,
            setting,
            effect_params,
            beta_a: default_beta_a(),
            residual_cov: ResidualCov::Identity,
            residual_scale: 1.0,
            seed,
        }
    }

    /// Every schema problem, empty when the configuration is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 1 {
            out.push("n: must be at least 1".to_string());
        }
        if self.p < 1 {
            out.push("p: must be at least 1".to_string());
        }
        let total: f64 = self.proportions.iter().sum();
        if self.proportions.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            out.push(format!(
                "proportions: must be non-negative and sum to 1, got {:?} (sum {total})",
                self.proportions
            ));
        }
        if !self.beta_a.is_finite() {
            out.push(format!("beta_a: must be finite, got {}", self.beta_a));
        }
        if !(self.residual_scale > 0.0 && self.residual_scale.is_finite()) {
            out.push(format!("residual_scale: must be positive, got {}", self.residual_scale));
        }
        match self.residual_cov {
            ResidualCov::Identity => {}
            ResidualCov::Exchangeable { rho } => {
                let floor = if self.p > 1 { -1.0 / (self.p as f64 - 1.0) } else { -1.0 };
                if !(rho > floor.max(-1.0) && rho < 1.0) {
                    out.push(format!("residual_cov.rho: exchangeable correlation must lie in ({floor}, 1), got {rho}"));
                }
            }
            ResidualCov::Ar1 { rho } => {
                if !(rho > -1.0 && rho < 1.0) {
                    out.push(format!("residual_cov.rho: must lie in (-1, 1), got {rho}"));
                }
            }
        }
        let ep = &self.effect_params;
        let positive = |out: &mut Vec<String>, name: &str, v: Option<f64>| match v {
            None => out.push(format!("effect_params.{name}: required for setting {:?}", self.setting)),
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                out.push(format!("effect_params.{name}: must be positive, got {x}"))
            }
            Some(_) => {}
        };
        match self.setting {
            Setting::FixedI | Setting::FixedII => {}
            Setting::RandomPtg => {
                positive(&mut out, "sigma_u2", ep.sigma_u2);
                if let Some(Err(e)) = ep.lambda.map(|l| l.validate()) {
                    out.push(format!("effect_params.lambda: {e}"));
                }
            }
            Setting::RandomGmm => positive(&mut out, "sigma2", ep.sigma2),
            Setting::RandomHorseshoe => {
                positive(&mut out, "sigma2", ep.sigma2);
                positive(&mut out, "b", ep.b);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Effects and dataset from the configured seed.
    pub fn generate(&self) -> Result<(MediationDataset, SimulationTruth)> {
        let truth = generate_effects(self, &mut RngStream::for_task(self.seed, &[EFFECTS_STREAM]).rng())?;
        let data = gen_dataset(&truth, self, &mut RngStream::for_task(self.seed, &[DATA_STREAM]).rng())?;
        Ok((data, truth))
    }
}

/// Ground truth of a simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    /// 1 both nonzero, 2 outcome effect only, 3 exposure effect only, 4 neither.
    pub group: Vec<u8>,
    pub active: Vec<bool>,
    pub nie_true: Vec<f64>,
    pub beta_a: f64,
}

impl SimulationTruth {
    pub fn from_effects(beta_m: Vec<f64>, alpha_a: Vec<f64>, beta_a: f64) -> Result<Self> {
        if beta_m.len() != alpha_a.len() {
            return Err(Error::Dimension(format!(
                "{} outcome effects vs {} exposure effects",
                beta_m.len(),
                alpha_a.len()
            )));
        }
        let group: Vec<u8> = beta_m.iter().zip(&alpha_a).map(|(&b, &a)| zero_pattern_group(b, a) as u8 + 1).collect();
        let active = group.iter().map(|&g| g == 1).collect();
        let nie_true = beta_m.iter().zip(&alpha_a).map(|(b, a)| b * a).collect();
        Ok(Self { beta_m, alpha_a, group, active, nie_true, beta_a })
    }

    pub fn p(&self) -> usize {
        self.beta_m.len()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "group", "beta_m", "alpha_a", "nie_true"])?;
        for j in 0..self.p() {
            w.write_record([
                j.to_string(),
                self.group[j].to_string(),
                self.beta_m[j].to_string(),
                self.alpha_a[j].to_string(),
                self.nie_true[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a truth table; `beta_a` is not part of the table and is set to 0.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("truth table lacks column `{name}`")))
        };
        let (ib, ia) = (col("beta_m")?, col("alpha_a")?);
        let (mut beta_m, mut alpha_a) = (Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize, field: &str| {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or(Error::NonFinite { field: field.to_string(), row })
            };
            beta_m.push(parse(ib, "beta_m")?);
            alpha_a.push(parse(ia, "alpha_a")?);
        }
        Self::from_effects(beta_m, alpha_a, 0.0)
    }
}

/// Effects for any setting.
pub fn generate_effects(config: &SimulationConfig, rng: &mut ChainRng) -> Result<SimulationTruth> {
    if config.setting.is_fixed() {
        gen_fixed_effects(config, rng)
    } else {
        gen_random_effects(config, rng)
    }
}

/// Splits `total` into integer parts proportional to `shares`, assigning
/// leftover units by largest fractional remainder (earlier entries win ties).
pub fn largest_remainder(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let raw: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&i, &j| (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn rademacher(rng: &mut ChainRng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn magnitudes(setting: Setting, count: usize, rng: &mut ChainRng) -> Vec<f64> {
    let mut mags = match setting {
        Setting::FixedII => {
            let shares: Vec<f64> = FIXED_II_LEVELS.iter().map(|l| l.1).collect();
            let counts = largest_remainder(count, &shares);
            FIXED_II_LEVELS.iter().zip(counts).flat_map(|(l, c)| std::iter::repeat_n(l.0, c)).collect()
        }
        _ => vec![FIXED_I_MAGNITUDE; count],
    };
    mags.shuffle(rng);
    mags.into_iter().map(|m| m * rademacher(rng)).collect()
}

/// Fixed-magnitude effects with exact group counts at shuffled positions.
///
/// Group sizes are `round(π_k p)`, adjusted by largest remainder so they sum
/// to `p`. In `FixedII` each nonzero effect vector of a group carries the
/// 40/30/30 magnitude split, shuffled independently for the two paths.
pub fn gen_fixed_effects(config: &SimulationConfig, rng: &mut ChainRng) -> Result<SimulationTruth> {
    config.validate()?;
    if !config.setting.is_fixed() {
        return Err(Error::Config(format!("setting {:?} has random effects", config.setting)));
    }
    let p = config.p;
    let counts = largest_remainder(p, &config.proportions);
    let mut positions: Vec<usize> = (0..p).collect();
    positions.shuffle(rng);
    let (mut beta_m, mut alpha_a) = (vec![0.0; p], vec![0.0; p]);
    let mut start = 0;
    for (k, &count) in counts.iter().enumerate() {
        let idx = &positions[start..start + count];
        start += count;
        if k == 0 || k == 1 {
            for (&j, v) in idx.iter().zip(magnitudes(config.setting, count, rng)) {
                beta_m[j] = v;
            }
        }
        if k == 0 || k == 2 {
            for (&j, v) in idx.iter().zip(magnitudes(config.setting, count, rng)) {
                alpha_a[j] = v;
            }
        }
    }
    SimulationTruth::from_effects(beta_m, alpha_a, config.beta_a)
}

fn categorical(weights: &[f64; 4], rng: &mut ChainRng) -> usize {
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(3)
}

/// Effects drawn from a random design; group labels follow the realized
/// zero pattern.
pub fn gen_random_effects(config: &SimulationConfig, rng: &mut ChainRng) -> Result<SimulationTruth> {
    config.validate()?;
    let p = config.p;
    let ep = &config.effect_params;
    let (mut beta_m, mut alpha_a) = (vec![0.0; p], vec![0.0; p]);
    match config.setting {
        Setting::FixedI | Setting::FixedII => {
            return Err(Error::Config(format!("setting {:?} has fixed effects", config.setting)));
        }
        Setting::RandomPtg => {
            let s2 = ep.sigma_u2.expect("validated");
            let lambda = match ep.lambda {
                Some(l) => l,
                None => solve_group_lambda(s2, &config.proportions, LAMBDA_SOLVE_DRAWS, rng)?.lambda,
            };
            let s = s2.sqrt();
            for j in 0..p {
                let (bt, at) = (s * std_normal(rng), s * std_normal(rng));
                (beta_m[j], alpha_a[j]) = lambda.apply(bt, at);
            }
        }
        Setting::RandomGmm | Setting::RandomHorseshoe => {
            let s2 = ep.sigma2.expect("validated");
            let cov = Matrix2::new(s2, s2 / 3.0, s2 / 3.0, s2);
            for j in 0..p {
                let k = categorical(&config.proportions, rng);
                let z = match config.setting {
                    Setting::RandomHorseshoe => sample_truncated_half_cauchy(ep.b.expect("validated"), rng)?,
                    _ => 1.0,
                };
                let sd = z * s2.sqrt();
                match k {
                    0 => {
                        let v = sample_mvn2(&Vector2::zeros(), &(cov * (z * z)), rng)?;
                        (beta_m[j], alpha_a[j]) = (v[0], v[1]);
                    }
                    1 => beta_m[j] = sd * std_normal(rng),
                    2 => alpha_a[j] = sd * std_normal(rng),
                    _ => {}
                }
            }
        }
    }
    SimulationTruth::from_effects(beta_m, alpha_a, config.beta_a)
}

/// Thresholds chosen to reproduce all four group proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLambda {
    pub lambda: Lambda,
    /// Group fractions realized on the solving draws.
    pub achieved: [f64; 4],
    /// Quantile levels of `|bt at|`, `|bt|`, `|at|` behind the thresholds.
    pub levels: [f64; 3],
}

fn group_fractions(pairs: &[(f64, f64)], lambda: &Lambda) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for &(b, a) in pairs {
        let (eb, ea) = lambda.apply(b, a);
        counts[zero_pattern_group(eb, ea)] += 1;
    }
    counts.map(|c| c as f64 / pairs.len() as f64)
}

/// Coordinate search over quantile levels (0.500 to 0.999, step 0.001) of
/// the latent magnitudes for thresholds whose group fractions are closest
/// in squared error to `proportions`. Latents are `N(0, sigma_u2)` each.
pub fn solve_group_lambda<R: Rng + ?Sized>(
    sigma_u2: f64,
    proportions: &[f64; 4],
    n_mc: usize,
    rng: &mut R,
) -> Result<GroupLambda> {
    if !(sigma_u2 > 0.0) || n_mc < 1000 {
        return Err(Error::Domain(format!("need positive variance and at least 1000 draws, got {sigma_u2}, {n_mc}")));
    }
    let s = sigma_u2.sqrt();
    let pairs: Vec<(f64, f64)> = (0..n_mc).map(|_| (s * std_normal(rng), s * std_normal(rng))).collect();
    let sorted = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let mut v: Vec<f64> = pairs.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let axes = [sorted(&|p| (p.0 * p.1).abs()), sorted(&|p| p.0.abs()), sorted(&|p| p.1.abs())];
    let levels: Vec<f64> = (500..1000).map(|k| k as f64 / 1000.0).collect();
    let lambda_at = |idx: [usize; 3]| {
        let q = |a: usize| quantile_sorted(&axes[a], levels[idx[a]]);
        Lambda::new(q(0), q(1), q(2))
    };
    let loss = |idx: [usize; 3]| {
        let f = group_fractions(&pairs, &lambda_at(idx));
        f.iter().zip(proportions).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    };
    // start near 0.95 / 0.90 / 0.90
    let mut idx = [450, 400, 400];
    let mut best = loss(idx);
    for _ in 0..25 {
        let mut moved = false;
        for axis in 0..3 {
            for k in 0..levels.len() {
                let mut cand = idx;
                cand[axis] = k;
                let l = loss(cand);
                if l < best {
                    best = l;
                    idx = cand;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    let lambda = lambda_at(idx);
    Ok(GroupLambda { lambda, achieved: group_fractions(&pairs, &lambda), levels: idx.map(|i| levels[i]) })
}

/// Draws one row of mediator residuals with unit-scale correlation `cov`.
fn residual_row(cov: ResidualCov, out: &mut [f64], rng: &mut ChainRng) {
    let p = out.len();
    match cov {
        ResidualCov::Identity => out.iter_mut().for_each(|v| *v = std_normal(rng)),
        ResidualCov::Exchangeable { rho } => {
            // symmetric root of (1 - rho) I + rho 11'
            let a = (1.0 - rho).sqrt();
            let c = ((1.0 - rho + p as f64 * rho).sqrt() - a) / p as f64;
            let mut sum = 0.0;
            for v in out.iter_mut() {
                *v = std_normal(rng);
                sum += *v;
            }
            out.iter_mut().for_each(|v| *v = a * *v + c * sum);
        }
        ResidualCov::Ar1 { rho } => {
            let innov = (1.0 - rho * rho).sqrt();
            let mut prev = std_normal(rng);
            out[0] = prev;
            for v in out.iter_mut().skip(1) {
                prev = rho * prev + innov * std_normal(rng);
                *v = prev;
            }
        }
    }
}

/// Exposure, mediators and outcome for given effects.
pub fn gen_dataset(truth: &SimulationTruth, config: &SimulationConfig, rng: &mut ChainRng) -> Result<MediationDataset> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    if truth.p() != p {
        return Err(Error::Dimension(format!("truth has {} mediators, configuration {p}", truth.p())));
    }
    let a: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
    let sd = config.residual_scale.sqrt();
    let mut m = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for i in 0..n {
        residual_row(config.residual_cov, &mut row, rng);
        for j in 0..p {
            m[(i, j)] = a[i] * truth.alpha_a[j] + sd * row[j];
        }
    }
    let mb = &m * nalgebra::DVector::from_column_slice(&truth.beta_m);
    let y: Vec<f64> = (0..n).map(|i| mb[i] + a[i] * config.beta_a + std_normal(rng)).collect();
    MediationDataset::without_covariates(y, a, m)
}
