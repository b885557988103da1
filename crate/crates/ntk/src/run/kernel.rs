use std::time::Instant;

use serde::Serialize;

use super::{log_manifest, RunOutcome};
use crate::error::CliResult;
use crate::formats::gram::{write_gram, write_gram_csv};
use crate::inputs::{kernel_grams, load_data};
use crate::manifest::{KernelSpec, Manifest};
use crate::model::{file_fingerprint, gram_fingerprint};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelOptions {
    /// Also write each Gram as CSV.
    pub csv: bool,
}

#[derive(Serialize)]
struct InputFingerprint {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct GramSidecar<'a> {
    kernel: &'a KernelSpec,
    train_samples: usize,
    test_samples: Option<usize>,
    inputs: Vec<InputFingerprint>,
    gram_sha256: String,
    cross_gram_sha256: Option<String>,
    wall_time_seconds: f64,
}

/// Train Gram (`gram.ntkg`) and, with a test split, the `train x test`
/// cross Gram (`cross.ntkg`), plus a JSON sidecar.
pub fn cmd_kernel(manifest: &Manifest, options: KernelOptions) -> CliResult<RunOutcome> {
    let spec = manifest.data()?;
    manifest.kernel.validate()?;
    let start = Instant::now();
    let data = load_data(spec)?;
    let test = data.test.as_ref().map(|t| &t.0);
    let (gram, cross) = kernel_grams(&manifest.kernel, &data.train, test)?;
    let elapsed = start.elapsed().as_secs_f64();

    let dir = &manifest.output_dir;
    let mut outputs = vec![log_manifest(manifest)?];
    let gram_path = dir.join("gram.ntkg");
    write_gram(&gram_path, &gram)?;
    outputs.push(gram_path);
    if let Some(c) = &cross {
        let p = dir.join("cross.ntkg");
        write_gram(&p, c)?;
        outputs.push(p);
    }
    if options.csv {
        let p = dir.join("gram.csv");
        write_gram_csv(&p, &gram)?;
        outputs.push(p);
        if let Some(c) = &cross {
            let p = dir.join("cross.csv");
            write_gram_csv(&p, c)?;
            outputs.push(p);
        }
    }
    let inputs = data
        .sources
        .iter()
        .filter(|p| p.is_file())
        .map(|p| Ok(InputFingerprint { path: p.display().to_string(), sha256: file_fingerprint(p)? }))
        .collect::<CliResult<_>>()?;
    let sidecar = GramSidecar {
        kernel: &manifest.kernel,
        train_samples: gram.rows(),
        test_samples: cross.as_ref().map(|c| c.cols()),
        inputs,
        gram_sha256: gram_fingerprint(&gram),
        cross_gram_sha256: cross.as_ref().map(gram_fingerprint),
        wall_time_seconds: elapsed,
    };
    let side = dir.join("gram.json");
    crate::write_json(&side, &sidecar)?;
    outputs.push(side);
    let summary = match &cross {
        Some(c) => {
            format!("{}x{} gram and {}x{} cross gram in {elapsed:.2}s", gram.rows(), gram.cols(), c.rows(), c.cols())
        }
        None => format!("{}x{} gram in {elapsed:.2}s", gram.rows(), gram.cols()),
    };
    Ok(RunOutcome { outputs, summary })
}
