use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{input_err, Result};
use crate::rng::{stream_id, stream_rng};

const KFOLD_STREAM: u64 = 0x006b_666f_6c64;
const TUNING_STREAM: u64 = 0x7475_6e65;

/// `(train, test)` index lists for one fold.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Shuffled `k`-fold partition of `0..n`; test folds differ in size by at
/// most one. Indices inside each list are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(input_err!("k-fold needs k >= 2, got {k}"));
    }
    if n < k {
        return Err(input_err!("cannot split {n} samples into {k} folds"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, KFOLD_STREAM));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push((train, test));
        start += size;
    }
    Ok(folds)
}

/// Class-balanced split of `train_indices` into fitting and validation
/// parts: each class is halved, the odd member going to the fitting part.
/// A single-member class goes entirely to fitting (with a warning).
pub fn tuning_split(train_indices: &[usize], labels: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let classes = train_indices.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = train_indices.iter().copied().filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() == 1 {
            log::warn!("class {c} has a single training member; it is used for fitting only");
        }
        members.shuffle(&mut stream_rng(seed, stream_id(&[TUNING_STREAM, c as u64])));
        let half = members.len().div_ceil(2);
        fit.extend_from_slice(&members[..half]);
        val.extend_from_slice(&members[half..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}
