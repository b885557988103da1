//! The four subcommands. Each takes a loaded manifest, writes into its
//! `output_dir`, and returns the files written plus a one-line summary.

mod compare;
mod fit_eval;
mod kernel;
mod oracle;

use std::path::PathBuf;

pub use compare::{cmd_compare, read_accuracy_table};
pub use fit_eval::cmd_fit_eval;
pub use kernel::{cmd_kernel, KernelOptions};
pub use oracle::cmd_oracle;

use crate::error::CliResult;
use crate::manifest::Manifest;

/// Name of the resolved manifest written beside every run's outputs.
pub const RESOLVED_MANIFEST: &str = "manifest.resolved.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

fn log_manifest(manifest: &Manifest) -> CliResult<PathBuf> {
    let path = manifest.output_dir.join(RESOLVED_MANIFEST);
    crate::write_text(&path, &manifest.to_toml())?;
    Ok(path)
}
