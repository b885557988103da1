use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{input_err, Result};

/// Numeric features with integer class labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl TabularDataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(input_err!("dataset has no rows"));
        }
        if features.len() != labels.len() {
            return Err(input_err!("{} feature rows but {} labels", features.len(), labels.len()));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(input_err!("dataset has no feature columns"));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(input_err!("row {i} has {} features, expected {d}", row.len()));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(input_err!("row {i} column {j} is not a finite number"));
            }
        }
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = alloc::vec![false; class_count];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(input_err!("class {c} has no members"));
        }
        Ok(Self { name: name.into(), features, labels, class_count })
    }

    /// Builds a dataset from raw label strings, numbering classes in order
    /// of first appearance. Returns the dataset and the label names.
    pub fn from_named_labels<S: AsRef<str>>(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        raw_labels: &[S],
    ) -> Result<(Self, Vec<String>)> {
        let mut names: Vec<String> = Vec::new();
        let labels = raw_labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                match names.iter().position(|n| n == l) {
                    Some(i) => i,
                    None => {
                        names.push(l.to_string());
                        names.len() - 1
                    }
                }
            })
            .collect();
        Ok((Self::new(name, features, labels)?, names))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Rescales every column to zero mean and unit population variance;
    /// constant columns are centred only.
    pub fn standardize_columns(&mut self) {
        let n = self.len() as f64;
        for j in 0..self.dim() {
            let mean = self.features.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = self.features.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            for row in &mut self.features {
                row[j] -= mean;
                if sd > 0.0 {
                    row[j] /= sd;
                }
            }
        }
    }

    pub fn rows(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.features[i].clone()).collect()
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}
