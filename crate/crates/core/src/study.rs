//! Method fitting with resolved hyperparameters, and replicate studies that
//! chain simulation, fitting and scoring.

use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilasso;
use crate::chain::{ChainConfig, NuisancePriors, PosteriorSummary, Trace};
use crate::data::MediationDataset;
use crate::error::{Error, Result};
use crate::gmm::{self, GmmHyper};
use crate::metrics::{self, MethodOutput, MetricsReport};
use crate::ptg::{self, Lambda, PtgHyper};
use crate::randkit::RngStream;
use crate::simulate::{self, Setting, SimulationConfig, SimulationTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gmm,
    Ptg,
    Bilasso,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gmm, Method::Ptg, Method::Bilasso];

    pub fn id(self) -> &'static str {
        match self {
            Method::Gmm => "gmm",
            Method::Ptg => "ptg",
            Method::Bilasso => "bilasso",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Method::Gmm => 1,
            Method::Ptg => 2,
            Method::Bilasso => 3,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected gmm, ptg or bilasso)")))
    }
}

/// GMM settings; omitted fields take the data-driven defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmOptions {
    pub dirichlet_a: Option<[f64; 4]>,
    pub nu: Option<f64>,
    /// Inverse-Wishart scale diagonal; empirical Bayes from Bi-Lasso when absent.
    pub psi0: Option<[f64; 2]>,
    #[serde(default)]
    pub priors: NuisancePriors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtgOptions {
    /// Calibrated to `target_pi1` when absent.
    pub lambda: Option<Lambda>,
    /// Calibrated so the prior active fraction is `target_pi1` when absent.
    pub tau_hat2: Option<f64>,
    #[serde(default = "default_target")]
    pub target_pi1: f64,
    #[serde(default = "default_draws")]
    pub calibration_draws: usize,
    #[serde(default)]
    pub priors: NuisancePriors,
}

fn default_target() -> f64 {
    0.01
}

fn default_draws() -> usize {
    100_000
}

impl Default for PtgOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            tau_hat2: None,
            target_pi1: default_target(),
            calibration_draws: default_draws(),
            priors: NuisancePriors::default(),
        }
    }
}

/// Everything a fit needs besides the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "one")]
    pub n_chains: usize,
    #[serde(default)]
    pub gmm: GmmOptions,
    #[serde(default)]
    pub ptg: PtgOptions,
}

fn one() -> usize {
    1
}

/// Hyperparameters actually used by a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FitDetails {
    Gmm { hyper: GmmHyper },
    Ptg { hyper: PtgHyper, lambda_calibrated: bool, tau_hat2: f64 },
    Bilasso { lambda_outcome: f64, lambda_mediator: f64, warning: Option<String> },
}

/// Per-mediator output of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    pub pip: Option<Vec<f64>>,
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    pub nie_hat: Vec<f64>,
    /// Ranking score: PIP for the samplers, `|nie_hat|` for Bi-Lasso.
    pub scores: Vec<f64>,
    pub nde_hat: f64,
    pub details: FitDetails,
    pub wall_seconds: f64,
}

impl MethodFit {
    pub fn output(&self) -> MethodOutput<'_> {
        MethodOutput { scores: &self.scores, nie_hat: &self.nie_hat, pips: self.pip.as_deref() }
    }

    pub fn table(&self) -> SummaryTable {
        SummaryTable {
            pip: self.pip.clone(),
            beta_m: self.beta_m.clone(),
            alpha_a: self.alpha_a.clone(),
            nie_hat: self.nie_hat.clone(),
            scores: self.scores.clone(),
        }
    }
}

/// Per-mediator columns of a fit as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub pip: Option<Vec<f64>>,
    pub beta_m: Vec<f64>,
    pub alpha_a: Vec<f64>,
    pub nie_hat: Vec<f64>,
    pub scores: Vec<f64>,
}

const SUMMARY_HEADER: [&str; 6] = ["index", "pip", "beta_m", "alpha_a", "nie_hat", "score"];

impl SummaryTable {
    pub fn output(&self) -> MethodOutput<'_> {
        MethodOutput { scores: &self.scores, nie_hat: &self.nie_hat, pips: self.pip.as_deref() }
    }

    /// One row per mediator; `pip` is `NA` for methods without one.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SUMMARY_HEADER)?;
        for j in 0..self.scores.len() {
            let pip = self.pip.as_ref().map_or_else(|| "NA".to_string(), |p| p[j].to_string());
            w.write_record([
                j.to_string(),
                pip,
                self.beta_m[j].to_string(),
                self.alpha_a[j].to_string(),
                self.nie_hat[j].to_string(),
                self.scores[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().ne(SUMMARY_HEADER) {
            return Err(Error::Config(format!("summary header must be {SUMMARY_HEADER:?}, got {headers:?}")));
        }
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut pips: Vec<Option<f64>> = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonFinite { field: SUMMARY_HEADER[i].to_string(), row })
            };
            pips.push(if rec.get(1).map(str::trim) == Some("NA") { None } else { Some(num(1)?) });
            for (k, col) in cols.iter_mut().enumerate() {
                col.push(num(k + 2)?);
            }
        }
        let pip = if pips.iter().all(Option::is_some) && !pips.is_empty() {
            Some(pips.into_iter().flatten().collect())
        } else if pips.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::Config("pip column mixes values and NA".into()));
        };
        let [beta_m, alpha_a, nie_hat, scores] = cols;
        Ok(Self { pip, beta_m, alpha_a, nie_hat, scores })
    }
}

/// Resolves GMM hyperparameters, computing Psi_0 by empirical Bayes when needed.
pub fn resolve_gmm(data: &MediationDataset, opts: &GmmOptions, stream: RngStream) -> Result<GmmHyper> {
    let psi0 = match opts.psi0 {
        Some(v) => v,
        None => gmm::empirical_bayes_psi0(data, &mut stream.rng())?,
    };
    let mut hyper = GmmHyper::with_psi0(data.p(), psi0);
    if let Some(a) = opts.dirichlet_a {
        hyper.dirichlet_a = a;
    }
    if let Some(nu) = opts.nu {
        hyper.nu = nu;
    }
    hyper.priors = opts.priors;
    hyper.validate()?;
    Ok(hyper)
}

/// Resolves PTG hyperparameters. Without thresholds, they are calibrated
/// to `target_pi1` under latent variances set to the empirical-Bayes
/// Psi_0; the IG scale `tau_hat2` is then calibrated to the same target.
pub fn resolve_ptg(data: &MediationDataset, opts: &PtgOptions, stream: RngStream) -> Result<(PtgHyper, bool)> {
    let mut rng = stream.rng();
    let (lambda, calibrated) = match opts.lambda {
        Some(l) => (l, false),
        None => {
            let psi0 = gmm::empirical_bayes_psi0(data, &mut rng)?;
            let cal = ptg::calibrate_lambda(psi0[0], psi0[1], opts.target_pi1, opts.calibration_draws, &mut rng)?;
            (cal.lambda, true)
        }
    };
    let tau_hat2 = match opts.tau_hat2 {
        Some(t) => t,
        None => ptg::calibrate_tau_hat2(&lambda, opts.target_pi1, opts.calibration_draws, &mut rng)?,
    };
    let mut hyper = PtgHyper::new(lambda, tau_hat2);
    hyper.priors = opts.priors;
    hyper.validate()?;
    Ok((hyper, calibrated))
}

/// Averages chain summaries with equal kept-draw counts.
pub fn merge_summaries(parts: &[PosteriorSummary]) -> Result<PosteriorSummary> {
    let first = parts.first().ok_or_else(|| Error::Config("no chains to merge".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let k = parts.len() as f64;
    let avg = |f: &dyn Fn(&PosteriorSummary) -> &Vec<f64>| -> Vec<f64> {
        (0..first.pip.len()).map(|j| parts.iter().map(|s| f(s)[j]).sum::<f64>() / k).collect()
    };
    let mean_beta_m = avg(&|s| &s.mean_beta_m);
    let mean_alpha_a = avg(&|s| &s.mean_alpha_a);
    let group_posterior: Vec<[f64; 4]> = (0..first.pip.len())
        .map(|j| std::array::from_fn(|g| parts.iter().map(|s| s.group_posterior[j][g]).sum::<f64>() / k))
        .collect();
    let nde_hat = parts.iter().map(|s| s.nde_hat).sum::<f64>() / k;
    let nie_hat: Vec<f64> = mean_beta_m.iter().zip(&mean_alpha_a).map(|(b, a)| b * a).collect();
    let te_hat = nde_hat + nie_hat.iter().sum::<f64>();
    Ok(PosteriorSummary {
        pip: group_posterior.iter().map(|g| g[0]).collect(),
        mean_beta_m,
        mean_alpha_a,
        nie_hat,
        nde_hat,
        te_hat,
        kept_draws: parts.iter().map(|s| s.kept_draws).sum(),
        group_posterior,
    })
}

fn sampler_fit(method: Method, summary: PosteriorSummary, details: FitDetails, started: Instant) -> MethodFit {
    MethodFit {
        method,
        scores: summary.pip.clone(),
        pip: Some(summary.pip),
        beta_m: summary.mean_beta_m,
        alpha_a: summary.mean_alpha_a,
        nie_hat: summary.nie_hat,
        nde_hat: summary.nde_hat,
        details,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Fits one method. Chain `c` of a sampler draws from stream
/// `path ++ [method, c]` under `seed`; hyperparameter resolution uses
/// `path ++ [method, u64::MAX]`. Traces are returned per chain.
pub fn fit_method(
    method: Method,
    data: &MediationDataset,
    opts: &FitOptions,
    seed: u64,
    path: &[u64],
) -> Result<(MethodFit, Vec<Trace>)> {
    let started = Instant::now();
    let stream = |tail: u64| {
        let mut full = path.to_vec();
        full.extend([method.stream(), tail]);
        RngStream::for_task(seed, &full)
    };
    if opts.n_chains == 0 {
        return Err(Error::Config("n_chains must be at least 1".into()));
    }
    // Chains run on the current rayon pool; results keep chain order.
    let run_chains = |f: &(dyn Fn(&mut crate::randkit::ChainRng) -> Result<(PosteriorSummary, Trace)> + Sync)| {
        let runs: Vec<(PosteriorSummary, Trace)> = (0..opts.n_chains)
            .into_par_iter()
            .map(|c| {
                f(&mut stream(c as u64).rng()).map_err(|e| match e {
                    Error::ChainDivergence { iteration, detail } => {
                        Error::ChainDivergence { iteration, detail: format!("{} chain {c}: {detail}", method.id()) }
                    }
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        let (summaries, traces): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
        Ok::<_, Error>((merge_summaries(&summaries)?, traces))
    };
    match method {
        Method::Gmm => {
            let hyper = resolve_gmm(data, &opts.gmm, stream(u64::MAX))?;
            let (summary, traces) = run_chains(&|rng| gmm::run_chain(data, &hyper, &opts.chain, rng))?;
            Ok((sampler_fit(method, summary, FitDetails::Gmm { hyper }, started), traces))
        }
        Method::Ptg => {
            let (hyper, lambda_calibrated) = resolve_ptg(data, &opts.ptg, stream(u64::MAX))?;
            let (summary, traces) = run_chains(&|rng| ptg::run_chain(data, &hyper, &opts.chain, rng))?;
            let tau_hat2 = hyper.tau_beta.scale;
            Ok((sampler_fit(method, summary, FitDetails::Ptg { hyper, lambda_calibrated, tau_hat2 }, started), traces))
        }
        Method::Bilasso => {
            let fit = bilasso::fit_bilasso(data, &mut stream(0).rng())?;
            let details = FitDetails::Bilasso {
                lambda_outcome: fit.lambda_outcome,
                lambda_mediator: fit.lambda_mediator,
                warning: fit.outcome.warning(),
            };
            Ok((
                MethodFit {
                    method,
                    pip: None,
                    scores: fit.nie_hat.iter().map(|v| v.abs()).collect(),
                    beta_m: fit.beta_m,
                    alpha_a: fit.alpha_a,
                    nie_hat: fit.nie_hat,
                    nde_hat: fit.beta_a,
                    details,
                    wall_seconds: started.elapsed().as_secs_f64(),
                },
                Vec::new(),
            ))
        }
    }
}

/// A replicated simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub simulation: SimulationConfig,
    pub replicates: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<f64>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_cutoffs() -> Vec<f64> {
    metrics::DEFAULT_CUTOFFS.to_vec()
}

impl StudyConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.simulation.problems().into_iter().map(|p| format!("simulation.{p}")).collect();
        if self.replicates == 0 {
            out.push("replicates: must be at least 1".into());
        }
        if self.methods.is_empty() {
            out.push("methods: list at least one method".into());
        }
        if self.fit.n_chains == 0 {
            out.push("fit.n_chains: must be at least 1".into());
        }
        if let Err(e) = self.fit.chain.validate(self.simulation.p) {
            out.push(format!("fit.chain: {e}"));
        }
        if let Some(c) = self.cutoffs.iter().find(|c| !(**c >= 0.0 && **c < 1.0)) {
            out.push(format!("cutoffs: must lie in [0, 1), got {c}"));
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

    /// Seed of replicate `r`'s simulated dataset.
    pub fn replicate_seed(&self, r: u64) -> u64 {
        RngStream::for_task(self.simulation.seed, &[r, 0]).rng().next_u64()
    }

    /// Solves Setting A thresholds once so every replicate shares them.
    pub fn with_resolved_simulation(&self) -> Result<StudyConfig> {
        let mut out = self.clone();
        let sim = &mut out.simulation;
        if sim.setting == Setting::RandomPtg && sim.effect_params.lambda.is_none() {
            sim.validate()?;
            let s2 = sim.effect_params.sigma_u2.expect("validated");
            let mut rng = RngStream::for_task(sim.seed, &[u64::MAX]).rng();
            let solved = simulate::solve_group_lambda(s2, &sim.proportions, simulate::LAMBDA_SOLVE_DRAWS, &mut rng)?;
            sim.effect_params.lambda = Some(solved.lambda);
        }
        Ok(out)
    }
}

/// Dataset, truth, fits and scores of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub seed: u64,
    pub truth: SimulationTruth,
    pub fits: Vec<MethodFit>,
    pub reports: Vec<MetricsReport>,
}

/// Simulates, fits every method and scores replicate `r`. Expects a study
/// whose simulation is already resolved (see [`StudyConfig::with_resolved_simulation`]).
pub fn run_replicate(study: &StudyConfig, r: u64) -> Result<ReplicateOutcome> {
    let seed = study.replicate_seed(r);
    let sim = SimulationConfig { seed, ..study.simulation.clone() };
    let (data, truth) = sim.generate()?;
    let mut fits = Vec::with_capacity(study.methods.len());
    let mut reports = Vec::with_capacity(study.methods.len());
    for &method in &study.methods {
        let (fit, _) = fit_method(method, &data, &study.fit, study.simulation.seed, &[r])?;
        reports.push(metrics::evaluate(method.id(), r, seed, fit.output(), &truth, &study.cutoffs)?);
        fits.push(fit);
    }
    Ok(ReplicateOutcome { replicate: r, seed, truth, fits, reports })
}

/// All replicates on up to `workers` threads, in replicate order.
pub fn run_study(study: &StudyConfig, workers: usize) -> Result<Vec<ReplicateOutcome>> {
    study.validate()?;
    let resolved = study.with_resolved_simulation()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..study.replicates as u64).into_par_iter().map(|r| run_replicate(&resolved, r)).collect())
}
