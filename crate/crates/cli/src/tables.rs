//! CSV tables of replicate-level scores and their aggregates. Undefined
//! values are written as `NA`.

use std::path::Path;

use medsel::metrics::{AggregateRow, CutoffMetrics, MeanSe, MetricsReport};

use crate::error::{CliError, Result};

const FIXED: [&str; 8] =
    ["method_id", "replicate_id", "seed", "auc", "tpr_at_fdr10", "mse_nonnull", "mse_null", "n_active_true"];

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        v.to_string()
    }
}

fn cutoffs_of<'a>(cuts: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    let mut out: Vec<f64> = cuts.copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// One row per (method, replicate), with `tpr`, `fdr` and `n_selected`
/// columns for every cutoff any report carries.
pub fn metrics_csv(reports: &[MetricsReport]) -> Result<Vec<u8>> {
    let cutoffs = cutoffs_of(reports.iter().flat_map(|r| r.pip_cut_metrics.iter().map(|c| &c.cutoff)));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for c in &cutoffs {
        header.extend([format!("tpr_pip_gt_{c}"), format!("fdr_pip_gt_{c}"), format!("n_selected_pip_gt_{c}")]);
    }
    w.write_record(&header).map_err(medsel::Error::from)?;
    for r in reports {
        let mut row = vec![
            r.method_id.clone(),
            r.replicate_id.to_string(),
            r.seed.to_string(),
            num(r.auc),
            num(r.tpr_at_fdr10),
            num(r.mse_nonnull),
            num(r.mse_null),
            r.n_active_true.to_string(),
        ];
        for c in &cutoffs {
            match r.pip_cut_metrics.iter().find(|m| m.cutoff == *c) {
                Some(m) => row.extend([num(m.tpr), num(m.fdr), m.n_selected.to_string()]),
                None => row.extend(["NA".to_string(), "NA".to_string(), "NA".to_string()]),
            }
        }
        w.write_record(&row).map_err(medsel::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("csv buffer: {e}")))
}

/// Inverse of [`metrics_csv`].
pub fn read_metrics_csv(path: &Path, bytes: &[u8]) -> Result<Vec<MetricsReport>> {
    let bad = |message: String| CliError::Parse { path: path.to_path_buf(), message };
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if header.len() < FIXED.len()
        || header[..FIXED.len()].iter().ne(FIXED.iter())
        || !(header.len() - FIXED.len()).is_multiple_of(3)
    {
        return Err(bad(format!("unexpected metrics header {header:?}")));
    }
    let cutoffs: Vec<f64> = header[FIXED.len()..]
        .chunks(3)
        .map(|c| {
            c[0].strip_prefix("tpr_pip_gt_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad column {}", c[0])))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let float = |i: usize| -> Result<f64> {
            match field(i) {
                "NA" => Ok(f64::NAN),
                s => s.parse().map_err(|_| bad(format!("row {line}: `{s}` in column {}", header[i]))),
            }
        };
        let int = |i: usize| -> Result<u64> {
            field(i).parse().map_err(|_| bad(format!("row {line}: `{}` in column {}", field(i), header[i])))
        };
        let mut pip_cut_metrics = Vec::new();
        for (k, &cutoff) in cutoffs.iter().enumerate() {
            let base = FIXED.len() + 3 * k;
            if field(base + 2) != "NA" {
                pip_cut_metrics.push(CutoffMetrics {
                    cutoff,
                    tpr: float(base)?,
                    fdr: float(base + 1)?,
                    n_selected: int(base + 2)? as usize,
                });
            }
        }
        out.push(MetricsReport {
            method_id: field(0).to_string(),
            replicate_id: int(1)?,
            seed: int(2)?,
            auc: float(3)?,
            tpr_at_fdr10: float(4)?,
            mse_nonnull: float(5)?,
            mse_null: float(6)?,
            n_active_true: int(7)? as usize,
            pip_cut_metrics,
        });
    }
    Ok(out)
}

/// Means and standard errors per method.
pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let cutoffs = cutoffs_of(rows.iter().flat_map(|r| r.pip_cut.iter().map(|c| &c.0)));
    let mut header: Vec<String> = vec!["method_id".into(), "replicates".into()];
    for m in ["auc", "tpr_at_fdr10", "mse_nonnull", "mse_null"] {
        header.extend([format!("{m}_mean"), format!("{m}_se")]);
    }
    for c in &cutoffs {
        for m in ["tpr", "fdr"] {
            header.extend([format!("{m}_pip_gt_{c}_mean"), format!("{m}_pip_gt_{c}_se")]);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(medsel::Error::from)?;
    let pair = |s: &MeanSe| [num(s.mean), num(s.se)];
    for r in rows {
        let mut row = vec![r.method_id.clone(), r.replicates.to_string()];
        for s in [&r.auc, &r.tpr_at_fdr10, &r.mse_nonnull, &r.mse_null] {
            row.extend(pair(s));
        }
        for c in &cutoffs {
            match r.pip_cut.iter().find(|p| p.0 == *c) {
                Some((_, tpr, fdr)) => {
                    row.extend(pair(tpr));
                    row.extend(pair(fdr));
                }
                None => row.extend(std::iter::repeat_n("NA".to_string(), 4)),
            }
        }
        w.write_record(&row).map_err(medsel::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("csv buffer: {e}")))
}
