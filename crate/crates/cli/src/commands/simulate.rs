use medsel::simulate::SimulationConfig;
use serde_json::json;

use super::{config_path, out_dir};
use crate::args::Global;
use crate::error::{CliError, Result};
use crate::files::{check_schema, load_toml, render};
use crate::manifest::{Manifest, OutputDir};

/// Writes `data.csv`, `truth.csv`, the resolved `config.toml` and `manifest.json`.
pub fn run(g: &Global) -> Result<()> {
    let path = config_path(g, "simulation")?;
    let (mut cfg, raw): (SimulationConfig, _) = load_toml(&path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    check_schema(&path, cfg.problems())?;
    let mut manifest = Manifest::new("simulate", cfg.seed, &cfg)?;
    manifest.input("config", &raw);
    let mut out = OutputDir::create(out_dir(g)?, manifest)?;

    let (data, truth) = cfg.generate()?;
    out.write("data.csv", &render(|w| data.write_csv(w))?)?;
    out.write("truth.csv", &render(|w| truth.write_csv(w))?)?;
    let echo = toml::to_string(&cfg).map_err(|e| CliError::Usage(format!("config echo: {e}")))?;
    out.write("config.toml", echo.as_bytes())?;
    out.manifest.details = json!({ "n": data.n(), "p": data.p(), "n_active": truth.n_active() });
    let dir = out.dir.clone();
    out.finish("manifest.json")?;
    eprintln!(
        "simulate: n = {}, p = {}, {} active mediators -> {}",
        data.n(),
        data.p(),
        truth.n_active(),
        dir.display()
    );
    Ok(())
}
