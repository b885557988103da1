use ntk_core::harness::stats::accuracy;
use ntk_core::net::{train_gd, unit_pairs, width_sweep, NetConfig};
use ntk_core::ridge::one_hot;
use serde::Serialize;

use super::{log_manifest, RunOutcome};
use crate::error::{CliError, CliResult};
use crate::fmt_f64;
use crate::formats::tensor::write_raw;
use crate::inputs::load_data;
use crate::manifest::{Manifest, OracleSpec};

#[derive(Serialize)]
struct TrainSummary {
    width: usize,
    depth: usize,
    epochs: usize,
    final_loss: f64,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    weight_files: Vec<String>,
}

/// Finite-width network runs: the empirical-kernel width sweep, or plain
/// gradient-descent training with its loss trace and final weights.
pub fn cmd_oracle(manifest: &Manifest) -> CliResult<RunOutcome> {
    let spec = manifest.oracle.as_ref().ok_or_else(|| CliError::Usage("oracle needs an [oracle] section".into()))?;
    let dir = &manifest.output_dir;
    let mut outputs = vec![log_manifest(manifest)?];
    match spec {
        OracleSpec::WidthSweep { depth, widths, seeds, pairs, dim } => {
            if *dim == 0 || *pairs == 0 {
                return Err(CliError::Usage("width-sweep needs dim and pairs > 0".into()));
            }
            let inputs = unit_pairs(*pairs, *dim, manifest.seed);
            let points = width_sweep(&inputs, *depth, widths, *seeds, manifest.seed)?;
            let rows: Vec<Vec<String>> = points
                .iter()
                .map(|p| vec![p.width.to_string(), fmt_f64(p.per_seed_error), fmt_f64(p.seed_averaged_error)])
                .collect();
            let p = dir.join("width_sweep.csv");
            crate::write_csv(&p, &["width", "per_seed_error", "seed_averaged_error"], &rows)?;
            outputs.push(p);
            let last = points.last().expect("at least one width");
            Ok(RunOutcome {
                outputs,
                summary: format!("depth {depth}: relative error {:.4} at width {}", last.per_seed_error, last.width),
            })
        }
        OracleSpec::Train { width, depth, epochs, learning_rate, parameterization } => {
            let data = load_data(manifest.data()?)?;
            let classes = data.class_count();
            let x = data.train.vectors();
            let cfg = NetConfig {
                parameterization: *parameterization,
                learning_rate: *learning_rate,
                epochs: *epochs,
                outputs: classes,
                ..NetConfig::new(*depth, *width)
            };
            let trained = train_gd(&x, &one_hot(&data.train_labels, classes), &cfg, manifest.seed)?;
            let rows: Vec<Vec<String>> = trained
                .trace
                .iter()
                .map(|r| vec![r.epoch.to_string(), fmt_f64(r.loss), fmt_f64(r.train_accuracy)])
                .collect();
            let p = dir.join("loss_trace.csv");
            crate::write_csv(&p, &["epoch", "loss", "train_accuracy"], &rows)?;
            outputs.push(p);
            let mut weight_files = Vec::new();
            for (h, w) in trained.weights.matrices.iter().enumerate() {
                let name = format!("weights/layer{}.ntkt", h + 1);
                let p = dir.join(&name);
                let (r, c) = w.shape();
                write_raw(&p, 1, (1, r, c), (0..r).flat_map(|i| (0..c).map(move |j| w[(i, j)])))?;
                outputs.push(p);
                weight_files.push(name);
            }
            let train_accuracy = accuracy(&trained.predict(&x)?, &data.train_labels);
            let test_accuracy = match &data.test {
                Some((t, labels)) => Some(accuracy(&trained.predict(&t.vectors())?, labels)),
                None => None,
            };
            let final_loss = trained.trace.last().map_or(f64::NAN, |r| r.loss);
            let p = dir.join("summary.json");
            crate::write_json(
                &p,
                &TrainSummary {
                    width: *width,
                    depth: *depth,
                    epochs: *epochs,
                    final_loss,
                    train_accuracy,
                    test_accuracy,
                    weight_files,
                },
            )?;
            outputs.push(p);
            Ok(RunOutcome {
                outputs,
                summary: format!(
                    "trained width {width}: final loss {final_loss:.4e}, train accuracy {:.2}%",
                    100.0 * train_accuracy
                ),
            })
        }
    }
}
