//! Config-driven runner for the twisted-ep experiments. The binary is a thin
//! wrapper around [`execute`].

pub mod config;
pub mod error;
pub mod run;

use std::path::Path;

pub use config::{Overrides, RunConfig};
pub use error::CliError;

/// Loads, overrides and resolves a config file.
pub fn prepare(path: &Path, overrides: &Overrides) -> Result<config::Resolved, CliError> {
    let mut cfg = config::load(path)?;
    cfg.apply(overrides);
    cfg.resolve()
}

/// `run`: executes the experiment and returns the artifact names.
pub fn execute(path: &Path, overrides: &Overrides) -> Result<(config::Resolved, Vec<String>), CliError> {
    let resolved = prepare(path, overrides)?;
    if let Some(n) = resolved.config.numerics.threads {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let artifacts = run::run(&resolved)?;
    Ok((resolved, artifacts))
}
