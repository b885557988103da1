//! Experiment manifests (TOML). Relative paths resolve against the
//! manifest's directory.

use std::path::{Path, PathBuf};

use ntk_core::cntk::CntkConfig;
use ntk_core::kernel::{KernelConfig, Variant, RELU_C_SIGMA};
use ntk_core::net::Parameterization;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn one() -> usize {
    1
}
fn three() -> usize {
    3
}
fn four() -> usize {
    4
}
fn yes() -> bool {
    true
}
fn c_sigma() -> f64 {
    RELU_C_SIGMA
}
fn output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Root of every random stream in the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub data: Option<DataSpec>,
    pub protocol: Option<ProtocolSpec>,
    pub compare: Option<CompareSpec>,
    pub oracle: Option<OracleSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Ntk,
    Nngp,
    Cntk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub kind: KernelKind,
    /// Hidden layers of the dense kernels.
    #[serde(default = "one")]
    pub depth: usize,
    #[serde(default)]
    pub fixed_layers: usize,
    #[serde(default)]
    pub conv_layers: usize,
    #[serde(default = "three")]
    pub filter_size: usize,
    #[serde(default = "c_sigma")]
    pub c_sigma: f64,
    /// Rescale to unit self-similarity after computing the Gram.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::Ntk,
            depth: 1,
            fixed_layers: 0,
            conv_layers: 0,
            filter_size: 3,
            c_sigma: RELU_C_SIGMA,
            normalize: false,
        }
    }
}

impl KernelSpec {
    pub fn dense(&self) -> KernelConfig {
        KernelConfig {
            depth: self.depth,
            fixed_layers: self.fixed_layers,
            variant: if self.kind == KernelKind::Nngp { Variant::Nngp } else { Variant::Ntk },
            c_sigma: self.c_sigma,
        }
    }

    pub fn cntk(&self) -> CntkConfig {
        CntkConfig { filter_size: self.filter_size, c_sigma: self.c_sigma, ..CntkConfig::with_layers(self.conv_layers) }
    }

    pub fn validate(&self) -> CliResult<()> {
        match self.kind {
            KernelKind::Cntk => self.cntk().validate()?,
            _ => self.dense().validate()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Tabular CSV with a header row and one label column.
    Csv,
    /// `NTKTENS1` container; labels come from a separate file.
    Tensor,
    /// Flattened tensor rows under a `# shape C H W` line.
    TensorCsv,
    /// CIFAR-10 binary batches in `path` (a directory).
    Cifar10,
    /// Built-in balance-scale table.
    BalanceScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub format: DataFormat,
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// One label per line, for `tensor` inputs.
    pub labels: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Label column name (or index without a header); defaults to the last.
    pub label_column: Option<String>,
    #[serde(default = "yes")]
    pub header: bool,
    /// Z-score every feature column using training statistics.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Ridge,
    Svm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSpec {
    /// Hold-out tuning over the kernel/cost grid, then k-fold CV.
    UciCv {
        #[serde(default = "four")]
        folds: usize,
        /// Restrict the depth range of the default grid.
        max_depth: Option<usize>,
        costs: Option<Vec<f64>>,
    },
    /// Class-balanced `n`-sample training sets, repeated.
    ImageSubsample {
        n: usize,
        #[serde(default = "twenty")]
        repeats: usize,
        /// Evaluate on the first `test_subset` test images only.
        test_subset: Option<usize>,
        #[serde(default)]
        ridge: f64,
    },
    /// `k` positives and `19k` negatives per class, weighted SVM, mAP.
    Fewshot {
        #[serde(default = "one")]
        k: usize,
        #[serde(default = "ten")]
        repeats: usize,
        /// Classes used to choose C; default the first half.
        tuning_classes: Option<Vec<usize>>,
        costs: Option<Vec<f64>>,
    },
    /// Finite network against the kernel predictor on one fixed split,
    /// over several initialisation seeds.
    NnBaseline {
        #[serde(default = "four")]
        folds: usize,
        #[serde(default)]
        fold: usize,
        #[serde(default = "twenty")]
        seeds: usize,
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "one")]
        depth: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default)]
        parameterization: Parameterization,
        #[serde(default)]
        solver: Solver,
        #[serde(default = "default_cost")]
        cost: f64,
    },
}

fn ten() -> usize {
    10
}
fn twenty() -> usize {
    20
}
fn default_width() -> usize {
    ntk_core::net::DEFAULT_WIDTH
}
fn default_epochs() -> usize {
    ntk_core::net::DEFAULT_EPOCHS
}
fn default_lr() -> f64 {
    0.1
}
fn default_cost() -> f64 {
    1.0
}

impl ProtocolSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolSpec::UciCv { .. } => "uci-cv",
            ProtocolSpec::ImageSubsample { .. } => "image-subsample",
            ProtocolSpec::Fewshot { .. } => "fewshot",
            ProtocolSpec::NnBaseline { .. } => "nn-baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// CSV: `dataset,<classifier>,...` header, accuracies in `[0, 1]`.
    pub table: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Empirical vs closed-form NTK on random unit-norm pairs.
    WidthSweep {
        #[serde(default = "one")]
        depth: usize,
        #[serde(default = "default_widths")]
        widths: Vec<usize>,
        #[serde(default = "ten")]
        seeds: usize,
        #[serde(default = "ten")]
        pairs: usize,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Full-batch gradient descent on the manifest's data.
    Train {
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "one")]
        depth: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default)]
        parameterization: Parameterization,
    },
}

fn default_widths() -> Vec<usize> {
    vec![64, 256, 1024, 4096]
}
fn default_dim() -> usize {
    8
}

impl Manifest {
    /// Parses a manifest and resolves its relative paths against the
    /// manifest's directory. Malformed manifests are usage errors.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut m: Manifest = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.resolve_paths(base);
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.data {
            for p in [&mut d.path, &mut d.test_path, &mut d.labels, &mut d.test_labels].into_iter().flatten() {
                fix(p);
            }
        }
        if let Some(c) = &mut self.compare {
            fix(&mut c.table);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn data(&self) -> CliResult<&DataSpec> {
        self.data.as_ref().ok_or_else(|| CliError::Usage("manifest has no [data] section".into()))
    }
}
