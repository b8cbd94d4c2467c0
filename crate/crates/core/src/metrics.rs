//! Selection and estimation scores against a known truth, plus the
//! Gelman–Rubin convergence statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::SimulationTruth;

/// PIP cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [f64; 2] = [0.5, 0.9];

/// Target FDR of the headline TPR.
pub const TARGET_FDR: f64 = 0.10;

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic, with half
/// credit for tied positive/negative pairs. Errors when either class is
/// empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len(), "scores vs labels")?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain(format!("AUC needs both classes, got {pos} positives and {neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // twice the rank sum of the positives, so tied ranks stay integral
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mid_rank = (start + 1 + end) as u64;
        let pos_in_run = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        twice_rank_sum += twice_mid_rank * pos_in_run;
        start = end;
    }
    let (p, q) = (pos as u64, neg as u64);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (p * q) as f64)
}

/// Indices ordered by `scores` descending, then `secondary` descending,
/// then index ascending.
pub fn ranking(scores: &[f64], secondary: &[f64]) -> Result<Vec<usize>> {
    check_lengths(scores.len(), secondary.len(), "scores vs tie-break scores")?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j].total_cmp(&scores[i]).then_with(|| secondary[j].total_cmp(&secondary[i])).then(i.cmp(&j))
    });
    Ok(order)
}

/// TPR of the longest prefix of `order` whose realized FDR is at most `q`.
pub fn tpr_at_fdr_ranked(order: &[usize], labels: &[bool], q: f64) -> Result<f64> {
    check_lengths(order.len(), labels.len(), "ranking vs labels")?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Domain("TPR needs at least one positive".to_string()));
    }
    let (mut tp, mut best_tp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        }
        let fp = k + 1 - tp;
        if fp as f64 <= q * (k + 1) as f64 {
            best_tp = tp;
        }
    }
    Ok(best_tp as f64 / positives as f64)
}

/// [`tpr_at_fdr_ranked`] with ties broken by index.
pub fn tpr_at_fdr(scores: &[f64], labels: &[bool], q: f64) -> Result<f64> {
    let order = ranking(scores, &vec![0.0; scores.len()])?;
    tpr_at_fdr_ranked(&order, labels, q)
}

/// Mean squared error of the indirect effects over truly active and truly
/// inactive mediators. An empty class yields NaN.
pub fn mse_split(nie_hat: &[f64], nie_true: &[f64], active: &[bool]) -> Result<(f64, f64)> {
    check_lengths(nie_hat.len(), nie_true.len(), "estimates vs truth")?;
    check_lengths(nie_hat.len(), active.len(), "estimates vs labels")?;
    let (mut s, mut c) = ([0.0; 2], [0usize; 2]);
    for j in 0..nie_hat.len() {
        let k = usize::from(!active[j]);
        s[k] += (nie_hat[j] - nie_true[j]).powi(2);
        c[k] += 1;
    }
    let mean = |k: usize| if c[k] == 0 { f64::NAN } else { s[k] / c[k] as f64 };
    Ok((mean(0), mean(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub cutoff: f64,
    pub tpr: f64,
    pub fdr: f64,
    pub n_selected: usize,
}

/// Selection by `pip > cutoff`. An empty selection has FDR 0.
pub fn pip_cut_metrics(pips: &[f64], labels: &[bool], cutoffs: &[f64]) -> Result<Vec<CutoffMetrics>> {
    check_lengths(pips.len(), labels.len(), "PIPs vs labels")?;
    let positives = labels.iter().filter(|&&l| l).count();
    Ok(cutoffs
        .iter()
        .map(|&cutoff| {
            let (mut tp, mut sel) = (0usize, 0usize);
            for (pip, &l) in pips.iter().zip(labels) {
                if *pip > cutoff {
                    sel += 1;
                    tp += usize::from(l);
                }
            }
            let tpr = if positives == 0 { f64::NAN } else { tp as f64 / positives as f64 };
            let fdr = if sel == 0 { 0.0 } else { (sel - tp) as f64 / sel as f64 };
            CutoffMetrics { cutoff, tpr, fdr, n_selected: sel }
        })
        .collect())
}

/// Gelman–Rubin potential scale reduction factor of `m ≥ 2` chains of
/// equal length `n ≥ 10`: `sqrt(((n-1)/n W + B/n) / W)` with `W` the mean
/// within-chain variance and `B/n` the variance of the chain means.
///
/// Equal chain means (`B = 0`) give exactly 1, as does `W = B = 0`;
/// constant chains at different levels give infinity.
pub fn psrf(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Domain(format!("PSRF needs at least 2 chains, got {m}")));
    }
    let n = chains[0].len();
    if n < 10 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Domain("PSRF needs chains of equal length, at least 10".to_string()));
    }
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum::<f64>()
        / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
    // equal means can still leave a rounding residue in the grand mean
    if b_over_n == 0.0 || means.iter().all(|&mu| mu == means[0]) {
        return Ok(1.0);
    }
    if w == 0.0 {
        return Ok(f64::INFINITY);
    }
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * w + b_over_n) / w).sqrt())
}

/// Running mean of a 0/1 inclusion trace.
pub fn running_mean(indicators: &[u8]) -> Vec<f64> {
    let mut sum = 0u64;
    indicators
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            sum += u64::from(v);
            sum as f64 / (k + 1) as f64
        })
        .collect()
}

/// Windows per chain in [`pip_psrf`].
pub const PIP_WINDOWS: usize = 50;

/// Means of consecutive windows of `window` draws. A remainder that does
/// not fill a window is dropped from the start of the trace.
pub fn window_means(indicators: &[u8], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let skip = indicators.len() % window;
    indicators[skip..]
        .chunks_exact(window)
        .map(|w| w.iter().map(|&v| f64::from(v)).sum::<f64>() / window as f64)
        .collect()
}

/// Split-chain PSRF of each mediator's PIP. Each chain's inclusion trace
/// is cut into [`PIP_WINDOWS`] windows whose means are PIP estimates
/// (draw by draw for shorter traces), and the window series of every chain
/// is halved, so a chain that drifts disagrees with itself.
/// `traces[c][j]` is chain `c`'s inclusion trace for mediator `j`.
pub fn pip_psrf(traces: &[Vec<Vec<u8>>]) -> Result<Vec<f64>> {
    let p = traces.first().map_or(0, Vec::len);
    if traces.iter().any(|t| t.len() != p) {
        return Err(Error::Dimension("chains trace different mediator counts".to_string()));
    }
    (0..p)
        .map(|j| {
            let len = traces[0][j].len();
            let window = (len / PIP_WINDOWS).max(1);
            let smoothed: Vec<Vec<f64>> = traces.iter().map(|t| window_means(&t[j], window)).collect();
            let half = smoothed[0].len() / 2;
            let views: Vec<&[f64]> =
                smoothed.iter().flat_map(|s| [&s[s.len() - 2 * half..s.len() - half], &s[s.len() - half..]]).collect();
            psrf(&views)
        })
        .collect()
}

/// Scores of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method_id: String,
    pub replicate_id: u64,
    pub seed: u64,
    pub auc: f64,
    pub tpr_at_fdr10: f64,
    pub mse_nonnull: f64,
    pub mse_null: f64,
    /// Empty for methods without inclusion probabilities.
    pub pip_cut_metrics: Vec<CutoffMetrics>,
    pub n_active_true: usize,
}

/// What a method hands to [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct MethodOutput<'a> {
    /// Ranking score (PIP for the samplers, `|nie_hat|` otherwise).
    pub scores: &'a [f64],
    pub nie_hat: &'a [f64],
    pub pips: Option<&'a [f64]>,
}

/// Scores a method against the truth. AUC and TPR are NaN when the truth
/// has no active (or no inactive) mediators.
pub fn evaluate(
    method_id: &str,
    replicate_id: u64,
    seed: u64,
    out: MethodOutput<'_>,
    truth: &SimulationTruth,
    cutoffs: &[f64],
) -> Result<MetricsReport> {
    let labels = &truth.active;
    check_lengths(out.scores.len(), labels.len(), "scores vs truth")?;
    let tiebreak: Vec<f64> = out.nie_hat.iter().map(|v| v.abs()).collect();
    let order = ranking(out.scores, &tiebreak)?;
    let n_active = truth.n_active();
    let degenerate = n_active == 0 || n_active == labels.len();
    let (auc, tpr) = if degenerate {
        (f64::NAN, f64::NAN)
    } else {
        (auc(out.scores, labels)?, tpr_at_fdr_ranked(&order, labels, TARGET_FDR)?)
    };
    let (mse_nonnull, mse_null) = mse_split(out.nie_hat, &truth.nie_true, labels)?;
    let pip_cut_metrics = match out.pips {
        Some(p) => pip_cut_metrics(p, labels, cutoffs)?,
        None => Vec::new(),
    };
    Ok(MetricsReport {
        method_id: method_id.to_string(),
        replicate_id,
        seed,
        auc,
        tpr_at_fdr10: tpr,
        mse_nonnull,
        mse_null,
        pip_cut_metrics,
        n_active_true: n_active,
    })
}

/// Mean and standard error of one metric across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    /// Replicates with a defined value.
    pub count: usize,
}

impl MeanSe {
    /// NaN entries are skipped; one value gives SE 0.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        let r = v.len();
        if r == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, count: 0 };
        }
        let mean = v.iter().sum::<f64>() / r as f64;
        let se = if r < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt() / (r as f64).sqrt()
        };
        Self { mean, se, count: r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method_id: String,
    pub replicates: usize,
    /// Set when only one replicate was available, so every SE is 0.
    pub single_replicate: bool,
    pub auc: MeanSe,
    pub tpr_at_fdr10: MeanSe,
    pub mse_nonnull: MeanSe,
    pub mse_null: MeanSe,
    /// `(cutoff, tpr, fdr)` per cutoff present in the reports.
    pub pip_cut: Vec<(f64, MeanSe, MeanSe)>,
}

/// Per-method means and standard errors, methods in first-seen order.
pub fn aggregate_replicates(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method_id.as_str()) {
            methods.push(&r.method_id);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.method_id == method).collect();
            let stat = |f: &dyn Fn(&MetricsReport) -> f64| MeanSe::of(rows.iter().map(|r| f(r)));
            let mut cutoffs: Vec<f64> = rows.iter().flat_map(|r| r.pip_cut_metrics.iter().map(|c| c.cutoff)).collect();
            cutoffs.sort_by(f64::total_cmp);
            cutoffs.dedup();
            let pip_cut = cutoffs
                .into_iter()
                .map(|cut| {
                    let pick = |f: fn(&CutoffMetrics) -> f64| {
                        MeanSe::of(
                            rows.iter().flat_map(|r| r.pip_cut_metrics.iter().filter(|c| c.cutoff == cut).map(f)),
                        )
                    };
                    (cut, pick(|c| c.tpr), pick(|c| c.fdr))
                })
                .collect();
            AggregateRow {
                method_id: method.to_string(),
                replicates: rows.len(),
                single_replicate: rows.len() == 1,
                auc: stat(&|r| r.auc),
                tpr_at_fdr10: stat(&|r| r.tpr_at_fdr10),
                mse_nonnull: stat(&|r| r.mse_nonnull),
                mse_null: stat(&|r| r.mse_null),
                pip_cut,
            }
        })
        .collect()
}
