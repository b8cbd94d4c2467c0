use medsel::gmm;
use medsel::ptg;
use medsel::randkit::RngStream;
use medsel::MediationDataset;
use serde_json::json;

use crate::args::{CalibrateArgs, Global};
use crate::error::{CliError, Result};
use crate::files;
use crate::manifest::{Manifest, OutputDir};

/// Prints the calibration as JSON; with `--out`, also writes `lambda.json`
/// and `calibrate_manifest.json`.
pub fn run(g: &Global, args: &CalibrateArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut rng = RngStream::new(seed, 0).rng();
    let mut inputs = Vec::new();
    let (tb, ta) = match (&args.data, args.tau_beta2) {
        (Some(path), _) => {
            let bytes = files::read(path)?;
            let data = MediationDataset::read_csv(bytes.as_slice())
                .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
            inputs.push(bytes);
            let psi0 = gmm::empirical_bayes_psi0(&data, &mut rng)?;
            (psi0[0], psi0[1])
        }
        (None, Some(tb)) => (tb, args.tau_alpha2.unwrap_or(tb)),
        (None, None) => return Err(CliError::Usage("give --tau-beta2 (and optionally --tau-alpha2) or --data".into())),
    };
    let cal = ptg::calibrate_lambda(tb, ta, args.target, args.draws, &mut rng)?;
    let result = json!({
        "tau_beta2": tb,
        "tau_alpha2": ta,
        "target": args.target,
        "draws": args.draws,
        "lambda": cal.lambda,
        "achieved": cal.achieved,
        "levels": cal.levels,
    });
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    print!("{text}");
    if let Some(dir) = &g.out {
        let mut manifest = Manifest::new("calibrate-lambda", seed, &(tb, ta, args.target, args.draws))?;
        for bytes in &inputs {
            manifest.input("data", bytes);
        }
        let mut out = OutputDir::create(dir, manifest)?;
        out.write("lambda.json", text.as_bytes())?;
        out.manifest.details = result;
        out.finish("calibrate_manifest.json")?;
    }
    Ok(())
}
