use medsel::diagnostics::{InvariantFailure, InvariantReport};
use medsel::study::{self, FitDetails, FitOptions};
use medsel::{Error, MediationDataset, Trace};
use serde_json::json;

use super::{out_dir, pool};
use crate::args::{FitArgs, Global};
use crate::error::{CliError, Result};
use crate::files::{self, check_schema, load_toml, render};
use crate::manifest::{Manifest, OutputDir, Status};

/// Writes `<method>_summary.csv`, one `<method>_trace_chain<c>.csv` per
/// sampler chain and `<method>_manifest.json`. A failed fit still leaves
/// a manifest describing the failure.
pub fn run(g: &Global, args: &FitArgs) -> Result<()> {
    let (mut opts, raw) = match &g.config {
        Some(p) => {
            let (o, raw): (FitOptions, _) = load_toml(p)?;
            (o, Some((p.clone(), raw)))
        }
        None => (FitOptions::default(), None),
    };
    if args.check_invariants {
        opts.chain.check_invariants = true;
    }
    let data_bytes = files::read(&args.data)?;
    let data = MediationDataset::read_csv(data_bytes.as_slice())
        .map_err(|e| CliError::Parse { path: args.data.clone(), message: e.to_string() })?;
    let config_label = raw.as_ref().map_or_else(|| "defaults".into(), |(p, _)| p.display().to_string());
    let mut problems = Vec::new();
    if opts.n_chains == 0 {
        problems.push("n_chains: must be at least 1".to_string());
    }
    if let Err(e) = opts.chain.validate(data.p()) {
        problems.push(format!("chain: {e}"));
    }
    check_schema(std::path::Path::new(&config_label), problems)?;

    let seed = g.seed.unwrap_or(0);
    let id = args.method.id();
    let mut manifest = Manifest::new("fit", seed, &(args.method, &opts))?;
    manifest.input("data", &data_bytes);
    if let Some((_, raw)) = &raw {
        manifest.input("config", raw);
    }
    let mut out = OutputDir::create(out_dir(g)?, manifest)?;

    let result = pool(g.workers)?.install(|| study::fit_method(args.method, &data, &opts, seed, &[]));
    let (fit, traces) = match result {
        Ok(v) => v,
        Err(e) => {
            out.manifest.status = Status::Failed;
            out.manifest.error = Some(e.to_string());
            if let Error::Invariant { iteration, failures } = &e {
                out.manifest.invariant_report = Some(invariant_report(*iteration, failures));
            }
            out.finish(&format!("{id}_manifest.json"))?;
            return Err(e.into());
        }
    };

    if let FitDetails::Ptg { hyper, lambda_calibrated, tau_hat2 } = &fit.details {
        let l = hyper.lambda;
        let how = if *lambda_calibrated { "calibrated" } else { "given" };
        eprintln!("ptg: lambda {how}: l0 = {}, l1 = {}, l2 = {}; tau_hat2 = {tau_hat2}", l.l0, l.l1, l.l2);
    }
    out.write(&format!("{id}_summary.csv"), &render(|w| fit.table().write_csv(w))?)?;
    for (c, trace) in traces.iter().enumerate() {
        out.write(&format!("{id}_trace_chain{c}.csv"), &trace_csv(trace)?)?;
    }
    out.manifest.details = json!({
        "method": id,
        "n_chains": if fit.pip.is_some() { opts.n_chains } else { 0 },
        "nde_hat": fit.nde_hat,
        "fit_seconds": fit.wall_seconds,
        "hyperparameters": fit.details,
    });
    let dir = out.dir.clone();
    let m = out.finish(&format!("{id}_manifest.json"))?;
    eprintln!("fit: {id} finished in {:.1} s -> {}", m.wall_seconds, dir.display());
    Ok(())
}

/// Rebuilds the structured report from the `id: context` strings of an
/// invariant error.
fn invariant_report(iteration: usize, failures: &[String]) -> InvariantReport {
    InvariantReport {
        iteration: Some(iteration),
        failures: failures
            .iter()
            .map(|f| {
                let (id, context) = f.split_once(": ").unwrap_or((f.as_str(), ""));
                InvariantFailure { id: id.to_string(), context: context.to_string() }
            })
            .collect(),
    }
}

/// Kept draws: the scalar series, then one 0/1 column per traced mediator.
fn trace_csv(t: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["draw".to_string()];
    header.extend(t.scalar_names.iter().cloned());
    header.extend(t.mediators.iter().map(|j| format!("active_{j}")));
    w.write_record(&header).map_err(Error::from)?;
    let len = t.scalars.first().map_or_else(|| t.indicators.first().map_or(0, Vec::len), Vec::len);
    for i in 0..len {
        let mut row = vec![i.to_string()];
        row.extend(t.scalars.iter().map(|s| s[i].to_string()));
        row.extend(t.indicators.iter().map(|s| s[i].to_string()));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("csv buffer: {e}")))
}
