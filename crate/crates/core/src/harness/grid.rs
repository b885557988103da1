//! Hyperparameter search and cross-validation for NTK + SVM on tabular data.
//!
//! Tuning follows the hold-out scheme: the whole dataset is split once into
//! class-balanced fitting and validation halves, every grid point is scored
//! on that split, and the winner is then evaluated by k-fold
//! cross-validation.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::dataset::TabularDataset;
use super::split::{kfold_split, tuning_split};
use super::stats::{accuracy, MeanStd};
use crate::error::{degenerate_err, input_err, Error, Result};
use crate::gram::GramMatrix;
use crate::kernel::{gram_matrix, KernelConfig};
use crate::par;
use crate::svm::{one_vs_rest_fit, ClassWeights, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub kernel: KernelConfig,
    pub cost: f64,
}

impl GridPoint {
    /// Lexicographic preference used to break accuracy ties: shallower,
    /// fewer fixed layers, smaller cost.
    fn preference(&self, other: &Self) -> Ordering {
        self.kernel
            .depth
            .cmp(&other.kernel.depth)
            .then(self.kernel.fixed_layers.cmp(&other.kernel.fixed_layers))
            .then(self.cost.total_cmp(&other.cost))
    }
}

/// `C = 10^e` for `e` in `-2..=4`.
pub fn uci_costs() -> Vec<f64> {
    (-2..=4).map(|e| libm::pow(10.0, e as f64)).collect()
}

/// The 15 kernels of [`KernelConfig::uci_grid`] crossed with [`uci_costs`].
pub fn uci_grid() -> Vec<GridPoint> {
    let costs = uci_costs();
    KernelConfig::uci_grid()
        .into_iter()
        .flat_map(|kernel| costs.iter().map(move |&cost| GridPoint { kernel, cost }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridEntry {
    pub point: GridPoint,
    /// Validation accuracy, or the reason the point could not be fitted.
    pub outcome: core::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_accuracy: f64,
    pub table: Vec<GridEntry>,
}

fn distinct_kernels(grid: &[GridPoint]) -> Vec<KernelConfig> {
    let mut kernels: Vec<KernelConfig> = Vec::new();
    for p in grid {
        if !kernels.contains(&p.kernel) {
            kernels.push(p.kernel);
        }
    }
    kernels
}

fn full_gram(dataset: &TabularDataset, kernel: &KernelConfig) -> Result<GramMatrix> {
    gram_matrix(&dataset.features, None, kernel)
}

/// Fits one-vs-rest SVM on `train` and returns accuracy on `test`.
pub fn svm_holdout_accuracy(
    gram: &GramMatrix,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    cost: f64,
) -> Result<f64> {
    let train_gram = gram.select(train, train);
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = one_vs_rest_fit(&train_gram, &train_labels, cost, ClassWeights::BALANCED, DEFAULT_TOL)?;
    let cross = gram.select(train, test);
    let pred = model.predict(&cross)?;
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&pred, &truth))
}

/// Scores every grid point on one class-balanced tuning split of the
/// dataset and returns the best (ties broken by smaller `L`, then `L'`,
/// then `C`).
pub fn grid_search(dataset: &TabularDataset, grid: &[GridPoint], seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(input_err!("hyperparameter grid is empty"));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (fit, val) = tuning_split(&all, &dataset.labels, seed);
    if val.is_empty() {
        return Err(degenerate_err!("tuning split left no validation samples"));
    }
    let kernels = distinct_kernels(grid);
    let grams: Vec<Result<GramMatrix>> = kernels.iter().map(|k| full_gram(dataset, k)).collect();
    let outcomes = par::map_slice(grid, |point| {
        let k = kernels.iter().position(|k| *k == point.kernel).expect("kernel listed");
        let gram = grams[k].as_ref().map_err(Error::clone)?;
        svm_holdout_accuracy(gram, &dataset.labels, &fit, &val, point.cost)
    });
    let table: Vec<GridEntry> = grid
        .iter()
        .zip(outcomes)
        .map(|(&point, r)| GridEntry { point, outcome: r.map_err(|e| alloc::format!("{e}")) })
        .collect();

    let mut best: Option<(GridPoint, f64)> = None;
    for entry in &table {
        if let Ok(acc) = entry.outcome {
            let better = match best {
                None => true,
                Some((bp, ba)) => acc > ba || (acc == ba && entry.point.preference(&bp) == Ordering::Less),
            };
            if better {
                best = Some((entry.point, acc));
            }
        }
    }
    match best {
        Some((best, best_accuracy)) => Ok(GridSearchResult { best, best_accuracy, table }),
        None => {
            let causes: Vec<String> = table.iter().filter_map(|e| e.outcome.clone().err()).collect();
            Err(degenerate_err!("every grid point failed: {}", causes.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossValidation {
    pub point: GridPoint,
    pub fold_accuracies: Vec<f64>,
    pub summary: MeanStd,
}

/// k-fold test accuracy of one grid point.
pub fn cross_validate(dataset: &TabularDataset, point: &GridPoint, folds: usize, seed: u64) -> Result<CrossValidation> {
    let gram = full_gram(dataset, &point.kernel)?;
    let splits = kfold_split(dataset.len(), folds, seed)?;
    let fold_accuracies =
        par::map_slice(&splits, |(train, test)| svm_holdout_accuracy(&gram, &dataset.labels, train, test, point.cost))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
    Ok(CrossValidation { point: *point, summary: MeanStd::of(&fold_accuracies), fold_accuracies })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UciReport {
    pub dataset: String,
    pub search: GridSearchResult,
    pub cv: CrossValidation,
}

/// Tune on the hold-out split, then report k-fold accuracy of the winner.
pub fn uci_protocol(dataset: &TabularDataset, grid: &[GridPoint], folds: usize, seed: u64) -> Result<UciReport> {
    let search = grid_search(dataset, grid, seed)?;
    let cv = cross_validate(dataset, &search.best, folds, seed)?;
    Ok(UciReport { dataset: dataset.name.clone(), search, cv })
}
