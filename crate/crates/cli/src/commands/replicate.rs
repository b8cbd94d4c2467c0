use std::path::{Path, PathBuf};
use std::time::Instant;

use medsel::metrics::{self, MetricsReport};
use medsel::study::{self, StudyConfig};
use rayon::prelude::*;
use serde_json::json;

use super::{config_path, out_dir, pool};
use crate::args::Global;
use crate::error::{CliError, Result};
use crate::files::{self, check_schema, load_toml, render};
use crate::manifest::{config_hash, Manifest, OutputDir, Status};
use crate::tables;

const REPLICATE_MANIFEST: &str = "manifest.json";
const REPLICATE_METRICS: &str = "metrics.csv";

/// Layout under `--out`:
///
/// ```text
/// study.toml  metrics.csv  aggregate.csv  manifest.json
/// replicates/r0000/{truth.csv, <method>_summary.csv, metrics.csv, manifest.json}
/// ```
///
/// A replicate directory whose manifest is complete and carries the same
/// configuration hash is reused instead of being recomputed.
pub fn run(g: &Global) -> Result<()> {
    let path = config_path(g, "study")?;
    let (mut study, raw): (StudyConfig, _) = load_toml(&path)?;
    if let Some(seed) = g.seed {
        study.simulation.seed = seed;
    }
    check_schema(&path, study.problems())?;
    let resolved = study.with_resolved_simulation()?;
    let hash = config_hash(&resolved)?;

    let mut manifest = Manifest::new("replicate", resolved.simulation.seed, &resolved)?;
    manifest.input("config", &raw);
    let mut out = OutputDir::create(out_dir(g)?, manifest)?;
    let rep_root = out.dir.join("replicates");
    files::create_dir(&rep_root)?;

    let total = resolved.replicates;
    let results: Vec<Result<(Vec<MetricsReport>, bool)>> = pool(g.workers)?.install(|| {
        (0..total as u64)
            .into_par_iter()
            .map(|r| {
                let dir = rep_root.join(format!("r{r:04}"));
                if let Some(reports) = completed(&dir, &hash)? {
                    eprintln!("replicate {r}: reused");
                    return Ok((reports, true));
                }
                let started = Instant::now();
                let reports = compute(&resolved, r, &dir)?;
                eprintln!("replicate {r}: done in {:.1} s", started.elapsed().as_secs_f64());
                Ok((reports, false))
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut reused = 0;
    for res in results {
        let (rs, was_reused) = res?;
        reused += usize::from(was_reused);
        reports.extend(rs);
    }

    let rows = metrics::aggregate_replicates(&reports);
    let echo = toml::to_string(&resolved).map_err(|e| CliError::Usage(format!("config echo: {e}")))?;
    out.write("study.toml", echo.as_bytes())?;
    out.write("metrics.csv", &tables::metrics_csv(&reports)?)?;
    out.write("aggregate.csv", &tables::aggregate_csv(&rows)?)?;
    out.manifest.details = json!({ "replicates": total, "reused": reused, "aggregate": rows });
    let dir = out.dir.clone();
    out.finish("manifest.json")?;
    for row in &rows {
        eprintln!(
            "{}: auc {:.3} ({:.3}), tpr@fdr10 {:.3} ({:.3})",
            row.method_id, row.auc.mean, row.auc.se, row.tpr_at_fdr10.mean, row.tpr_at_fdr10.se
        );
    }
    eprintln!("replicate: {total} replicates ({reused} reused) -> {}", dir.display());
    Ok(())
}

/// Scores of a finished replicate, or `None` when it must be (re)computed.
fn completed(dir: &Path, hash: &str) -> Result<Option<Vec<MetricsReport>>> {
    let manifest_path = dir.join(REPLICATE_MANIFEST);
    if !manifest_path.exists() {
        return Ok(None);
    }
    let m = match Manifest::load(&manifest_path) {
        Ok(m) => m,
        Err(_) => return Ok(None),
    };
    if m.status != Status::Complete || m.config_hash != hash {
        return Ok(None);
    }
    let metrics_path: PathBuf = dir.join(REPLICATE_METRICS);
    let bytes = files::read(&metrics_path)?;
    let listed = m.outputs.iter().find(|o| o.name == REPLICATE_METRICS);
    if listed.is_none_or(|o| o.sha256 != files::content_hash(&bytes)) {
        return Ok(None);
    }
    Ok(Some(tables::read_metrics_csv(&metrics_path, &bytes)?))
}

fn compute(study: &StudyConfig, r: u64, dir: &Path) -> Result<Vec<MetricsReport>> {
    let manifest = Manifest::new("replicate", study.replicate_seed(r), study)?;
    let mut out = OutputDir::create(dir, manifest)?;
    let outcome = study::run_replicate(study, r)?;
    out.write("truth.csv", &render(|w| outcome.truth.write_csv(w))?)?;
    for fit in &outcome.fits {
        out.write(&format!("{}_summary.csv", fit.method.id()), &render(|w| fit.table().write_csv(w))?)?;
    }
    out.write(REPLICATE_METRICS, &tables::metrics_csv(&outcome.reports)?)?;
    out.manifest.details = json!({
        "replicate": r,
        "fits": outcome.fits.iter().map(|f| json!({ "method": f.method.id(), "seconds": f.wall_seconds, "hyperparameters": f.details })).collect::<Vec<_>>(),
    });
    out.finish(REPLICATE_MANIFEST)?;
    Ok(outcome.reports)
}
