//! Multi-dataset classifier comparison: Friedman rank, average accuracy,
//! P90/P95, percentage of maximum accuracy, and the Wilcoxon signed-rank
//! test.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::stats::{average_ranks, MeanStd};
use crate::error::{degenerate_err, input_err, Result};

/// Minimum absolute accuracy gap for one classifier to count as beating
/// another on a dataset.
pub const OUTPERFORM_MARGIN: f64 = 0.001;

/// Accuracies in `[0, 1]`; one row per dataset, one column per classifier.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccuracyTable {
    pub datasets: Vec<String>,
    pub classifiers: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AccuracyTable {
    pub fn new(datasets: Vec<String>, classifiers: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != datasets.len() {
            return Err(input_err!("{} rows for {} datasets", values.len(), datasets.len()));
        }
        if classifiers.is_empty() {
            return Err(input_err!("accuracy table has no classifier columns"));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != classifiers.len() {
                return Err(input_err!(
                    "row {i} ({}) has {} entries, expected {}",
                    datasets[i],
                    row.len(),
                    classifiers.len()
                ));
            }
            if let Some(j) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(input_err!("accuracy at row {i}, column {j} is {} (outside [0, 1])", row[j]));
            }
        }
        Ok(Self { datasets, classifiers, values })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}

/// Mean over datasets of each classifier's rank (1 = most accurate, ties
/// averaged).
pub fn friedman_rank(table: &AccuracyTable) -> Vec<f64> {
    let k = table.classifiers.len();
    let mut sums = vec![0.0; k];
    for row in &table.values {
        for (s, r) in sums.iter_mut().zip(average_ranks(row, true)) {
            *s += r;
        }
    }
    let n = table.values.len() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub classifiers: Vec<String>,
    pub friedman_rank: Vec<f64>,
    pub average_accuracy: Vec<MeanStd>,
    /// Fraction of datasets reaching at least 90% of the best accuracy.
    pub p90: Vec<f64>,
    pub p95: Vec<f64>,
    /// Mean and std of accuracy divided by the per-dataset best (fraction, not percent).
    pub pma: Vec<MeanStd>,
    /// Datasets left out of P90/P95/PMA because every classifier scored zero.
    pub excluded_datasets: Vec<String>,
}

pub fn accuracy_summaries(table: &AccuracyTable) -> MetricsReport {
    let k = table.classifiers.len();
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut excluded = Vec::new();
    for (name, row) in table.datasets.iter().zip(&table.values) {
        let best = row.iter().cloned().fold(0.0, f64::max);
        if best == 0.0 {
            log::warn!("dataset {name}: best accuracy is 0, excluded from P90/P95/PMA");
            excluded.push(name.clone());
            continue;
        }
        for (j, &a) in row.iter().enumerate() {
            ratios[j].push(a / best);
        }
    }
    let frac = |r: &[f64], t: f64| r.iter().filter(|&&x| x >= t).count() as f64 / r.len() as f64;
    MetricsReport {
        classifiers: table.classifiers.clone(),
        friedman_rank: friedman_rank(table),
        average_accuracy: (0..k).map(|j| MeanStd::of(&table.column(j))).collect(),
        p90: ratios.iter().map(|r| frac(r, 0.90)).collect(),
        p95: ratios.iter().map(|r| frac(r, 0.95)).collect(),
        pma: ratios.iter().map(|r| MeanStd::of(r)).collect(),
        excluded_datasets: excluded,
    }
}

/// `counts[a][b]` = datasets on which classifier `a` beats `b` by at least
/// [`OUTPERFORM_MARGIN`].
pub fn outperform_counts(table: &AccuracyTable) -> Vec<Vec<usize>> {
    let k = table.classifiers.len();
    let mut counts = vec![vec![0; k]; k];
    for row in &table.values {
        for a in 0..k {
            for b in 0..k {
                if row[a] - row[b] >= OUTPERFORM_MARGIN - 1e-12 {
                    counts[a][b] += 1;
                }
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WilcoxonResult {
    /// Signed rank sum `W⁺ − W⁻`; flips sign when the samples are swapped.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub z: f64,
    /// Two-sided, normal approximation with tie correction.
    pub p_value: f64,
}

pub const WILCOXON_MIN_PAIRS: usize = 6;

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(input_err!("paired samples differ in length: {} vs {}", a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(degenerate_err!("all paired differences are zero; the signed-rank test is undefined"));
    }
    if diffs.len() < WILCOXON_MIN_PAIRS {
        return Err(input_err!(
            "signed-rank test needs at least {WILCOXON_MIN_PAIRS} nonzero differences, got {}",
            diffs.len()
        ));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs, false);
    let (mut w_plus, mut w_minus) = (0.0, 0.0);
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > 0.0 {
            w_plus += r;
        } else {
            w_minus += r;
        }
    }
    let n = diffs.len() as f64;
    // tie groups of the absolute differences
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let statistic = w_plus - w_minus;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0 - tie_term / 12.0;
    let z = if var > 0.0 { statistic / libm::sqrt(var) } else { 0.0 };
    let p_value = libm::erfc(z.abs() / core::f64::consts::SQRT_2).min(1.0);
    Ok(WilcoxonResult { statistic, w_plus, w_minus, n: diffs.len(), z, p_value })
}
