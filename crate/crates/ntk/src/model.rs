//! JSON model documents tied to the Gram they were trained on.

use std::path::Path;

use ntk_core::svm::OneVsRest;
use ntk_core::GramMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::manifest::KernelSpec;

/// SHA-256 over the shape and little-endian values of a Gram.
pub fn gram_fingerprint(gram: &GramMatrix) -> String {
    let mut h = Sha256::new();
    h.update((gram.rows() as u64).to_le_bytes());
    h.update((gram.cols() as u64).to_le_bytes());
    for v in gram.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn file_fingerprint(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kernel: KernelSpec,
    /// Class indices in the order the training labels first appeared.
    pub classifier: OneVsRest,
    pub training_fingerprint: String,
}

impl ModelDocument {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::data(path, e.to_string()))?;
        crate::write_text(path, &text)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))
    }

    /// Checks that `train_gram` is the Gram this model was fitted on.
    pub fn verify(&self, train_gram: &GramMatrix) -> CliResult<()> {
        let got = gram_fingerprint(train_gram);
        if got != self.training_fingerprint {
            return Err(CliError::Invalid(format!(
                "training Gram fingerprint {got} does not match the model's {}",
                self.training_fingerprint
            )));
        }
        Ok(())
    }

    /// Predicted classes for a `train x test` cross Gram.
    pub fn predict(&self, train_gram: &GramMatrix, cross_gram: &GramMatrix) -> CliResult<Vec<usize>> {
        self.verify(train_gram)?;
        Ok(self.classifier.predict(cross_gram)?)
    }
}
