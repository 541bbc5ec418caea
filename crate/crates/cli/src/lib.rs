//! Command-line front end: argument parsing, configuration and one function per subcommand.

pub mod cli;
pub mod commands;
pub mod config;

use anyhow::{Context, Result};

use crate::cli::{Cli, Command};
use crate::config::Config;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(w) = cli.workers {
        cfg.runtime.workers = w;
    }
    if cfg.runtime.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.runtime.workers)
            .build_global()
            .context("cannot start worker pool")?;
    }
    match &cli.command {
        Command::Calibrate(a) => commands::calibrate(cfg, a),
        Command::Build(a) => commands::build(cfg, a),
        Command::Update(a) => commands::update(cfg, a),
        Command::Detect(a) => commands::detect_cmd(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Explain(a) => commands::explain(cfg, a),
    }
}
