mod calibrate;
mod evaluate;
mod fit;
mod replicate;
mod simulate;

use std::path::{Path, PathBuf};

use crate::args::{Cli, Command, Global};
use crate::error::{CliError, Result};

pub use evaluate::method_id_of;

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => simulate::run(g),
        Command::Fit(a) => fit::run(g, a),
        Command::Evaluate(a) => evaluate::run(g, a),
        Command::Replicate => replicate::run(g),
        Command::CalibrateLambda(a) => calibrate::run(g, a),
    }
}

fn out_dir(g: &Global) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| CliError::Usage("--out is required for this command".into()))
}

fn config_path(g: &Global, what: &str) -> Result<PathBuf> {
    g.config.clone().ok_or_else(|| CliError::Usage(format!("--config is required: a TOML {what} file")))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
