use std::path::Path;

use medsel::metrics::{self, MetricsReport};
use medsel::simulate::SimulationTruth;
use medsel::study::SummaryTable;
use serde_json::json;

use super::out_dir;
use crate::args::{EvaluateArgs, Global};
use crate::error::{CliError, Result};
use crate::files;
use crate::manifest::{Manifest, OutputDir};
use crate::tables;

/// `gmm_summary.csv` -> `gmm`; other stems are used as they are.
pub fn method_id_of(path: &Path) -> String {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    stem.strip_suffix("_summary").map_or_else(|| stem.clone(), str::to_string)
}

/// Writes `metrics.csv` (one row per summary), `aggregate.csv` and
/// `evaluate_manifest.json`.
pub fn run(g: &Global, args: &EvaluateArgs) -> Result<()> {
    if let Some(c) = args.cutoffs.iter().find(|c| !(**c >= 0.0 && **c < 1.0)) {
        return Err(CliError::Usage(format!("--cutoffs: each cutoff must lie in [0, 1), got {c}")));
    }
    let truth_bytes = files::read(&args.truth)?;
    let truth = SimulationTruth::read_csv(truth_bytes.as_slice())
        .map_err(|e| CliError::Parse { path: args.truth.clone(), message: e.to_string() })?;
    let seed = g.seed.unwrap_or(0);
    let mut manifest = Manifest::new("evaluate", seed, &(&args.cutoffs, args.replicate_id))?;
    manifest.input("truth", &truth_bytes);

    let mut reports: Vec<MetricsReport> = Vec::with_capacity(args.summaries.len());
    for path in &args.summaries {
        let bytes = files::read(path)?;
        let table = SummaryTable::read_csv(bytes.as_slice())
            .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
        let id = method_id_of(path);
        manifest.input(&id, &bytes);
        let report = metrics::evaluate(&id, args.replicate_id, seed, table.output(), &truth, &args.cutoffs)
            .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
        reports.push(report);
    }

    let mut out = OutputDir::create(out_dir(g)?, manifest)?;
    let rows = metrics::aggregate_replicates(&reports);
    out.write("metrics.csv", &tables::metrics_csv(&reports)?)?;
    out.write("aggregate.csv", &tables::aggregate_csv(&rows)?)?;
    out.manifest.details = json!({ "methods": reports.iter().map(|r| r.method_id.clone()).collect::<Vec<_>>() });
    out.finish("evaluate_manifest.json")?;
    for r in &reports {
        println!(
            "{}: auc {:.4}, tpr@fdr10 {:.4}, mse_nonnull {:.3e}",
            r.method_id, r.auc, r.tpr_at_fdr10, r.mse_nonnull
        );
    }
    Ok(())
}
