//! Scenario-driven command-line front end for `oscdamp`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::CommandOutput;
pub use config::{Command, ScenarioConfig};
pub use error::CliError;

use output::{write_table, Header};

/// Read the configuration, run `cmd` and write its tables into `out`.
pub fn execute(cmd: Command, config: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
    let cfg = ScenarioConfig::parse(&text).map_err(CliError::Config)?;
    let result = commands::run(cmd, &cfg, seed)?;
    let header = Header {
        command: cmd.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.sha256(),
        rng: result.rng.clone(),
        seed: result.seed,
    };
    let mut written = Vec::new();
    for t in &result.tables {
        written.extend(write_table(out, &header, t, cfg.output.json).map_err(CliError::Io)?);
    }
    Ok(written)
}
