//! CIFAR-10 "binary version": records of one label byte followed by
//! 3072 pixel bytes (1024 per channel, row-major, R then G then B).

use std::path::Path;

use ntk_core::cntk::ImageTensor;

use crate::error::{CliError, CliResult};

/// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
pub const CIFAR10_ENV: &str = "NTK_CIFAR10_DIR";

/// Per-channel `(mean, std)` of the `[0, 1]`-scaled pixels.
pub type ChannelStats = [(f64, f64); 3];

const SIDE: usize = 32;
const RECORD: usize = 1 + 3 * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarSplit {
    Train,
    Test,
}

/// Images scaled to `[0, 1]` and standardized with per-channel mean and
/// std from `stats` (`None` uses the loaded images' own statistics).
/// Returns the images, labels and the statistics used.
pub fn load_cifar10(
    dir: &Path,
    split: CifarSplit,
    stats: Option<ChannelStats>,
) -> CliResult<(Vec<ImageTensor>, Vec<usize>, ChannelStats)> {
    let files: Vec<String> = match split {
        CifarSplit::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        CifarSplit::Test => vec!["test_batch.bin".into()],
    };
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let path = dir.join(f);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(CliError::data(&path, format!("size {} is not a multiple of {RECORD}", bytes.len())));
        }
        for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
            if rec[0] > 9 {
                return Err(CliError::data(&path, format!("record {i}: label {} out of range", rec[0])));
            }
            labels.push(rec[0] as usize);
            raw.push(rec[1..].iter().map(|&b| b as f64 / 255.0).collect());
        }
    }
    let plane = SIDE * SIDE;
    let stats = stats.unwrap_or_else(|| {
        let mut s = [(0.0, 0.0); 3];
        for (c, st) in s.iter_mut().enumerate() {
            let n = (raw.len() * plane) as f64;
            let mean = raw.iter().map(|r| r[c * plane..(c + 1) * plane].iter().sum::<f64>()).sum::<f64>() / n;
            let var = raw
                .iter()
                .map(|r| r[c * plane..(c + 1) * plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
                .sum::<f64>()
                / n;
            *st = (mean, var.sqrt().max(1e-12));
        }
        s
    });
    let images = raw
        .into_iter()
        .map(|mut r| {
            for (c, (m, s)) in stats.iter().enumerate() {
                r[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = (*v - m) / s);
            }
            ImageTensor::new(3, SIDE, SIDE, r).map_err(CliError::from)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((images, labels, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..RECORD - 1).map(fill));
        r
    }

    #[test]
    fn reads_batches_and_standardizes_per_channel() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=5 {
            let mut bytes = record(i as u8, |p| (p % 7 * 30) as u8);
            bytes.extend(record(0, |p| (p / 1024 * 100) as u8));
            std::fs::write(dir.path().join(format!("data_batch_{i}.bin")), bytes).unwrap();
        }
        std::fs::write(dir.path().join("test_batch.bin"), record(9, |_| 255)).unwrap();
        let (train, labels, stats) = load_cifar10(dir.path(), CifarSplit::Train, None).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(labels, vec![1, 0, 2, 0, 3, 0, 4, 0, 5, 0]);
        assert_eq!(train[0].shape(), (3, 32, 32));
        let plane = 1024;
        for c in 0..3 {
            let vals: Vec<f64> = train.iter().flat_map(|t| t.values()[c * plane..(c + 1) * plane].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9, "channel {c}: {mean} {var}");
        }
        let (test, tl, same) = load_cifar10(dir.path(), CifarSplit::Test, Some(stats)).unwrap();
        assert_eq!((test.len(), tl), (1, vec![9]));
        assert_eq!(same, stats);
        assert_eq!(test[0].at(0, 0), (1.0 - stats[0].0) / stats[0].1);
    }

    #[test]
    fn damaged_batches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("test_batch.bin"), vec![0u8; RECORD - 1]).unwrap();
        let e = load_cifar10(dir.path(), CifarSplit::Test, None).unwrap_err().to_string();
        assert!(e.contains("test_batch.bin") && e.contains("multiple"), "{e}");
        std::fs::write(dir.path().join("test_batch.bin"), record(10, |_| 0)).unwrap();
        assert!(load_cifar10(dir.path(), CifarSplit::Test, None).unwrap_err().to_string().contains("label 10"));
        let e = load_cifar10(dir.path(), CifarSplit::Train, None).unwrap_err().to_string();
        assert!(e.contains("data_batch_1.bin"), "{e}");
    }
}
