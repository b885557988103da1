//! File formats, dataset loaders and the `ntk` command-line runner built on
//! `ntk-core`.
//!
//! Every command reads one TOML manifest, writes its results under the
//! manifest's `output_dir` together with the fully resolved manifest, and
//! is deterministic given the manifest seed.

pub mod data;
pub mod error;
pub mod formats;
pub mod inputs;
pub mod manifest;
pub mod model;
pub mod run;

use std::path::Path;

pub use error::{CliError, CliResult};
pub use manifest::Manifest;

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// CSV with a header row; floats should be formatted by the caller.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::data(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(path, e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
