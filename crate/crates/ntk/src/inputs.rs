//! Loading the manifest's data and turning it into Gram matrices.

use std::path::{Path, PathBuf};

use ntk_core::cntk::{cntk_gram, cntk_self_values, ImageTensor};
use ntk_core::kernel::{gram_matrix, normalize_gram, ntk_pair};
use ntk_core::GramMatrix;

use crate::data::{self, CifarSplit, CsvSchema, LabelColumn};
use crate::error::{CliError, CliResult};
use crate::formats::tensor::{read_tensor_csv, read_tensors};
use crate::manifest::{DataFormat, DataSpec, KernelKind, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Vectors(Vec<Vec<f64>>),
    Images(Vec<ImageTensor>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Vectors(v) => v.len(),
            Samples::Images(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        match self {
            Samples::Vectors(v) => Samples::Vectors(idx.iter().map(|&i| v[i].clone()).collect()),
            Samples::Images(v) => Samples::Images(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// Flattened rows (images in channel-major order).
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        match self {
            Samples::Vectors(v) => v.clone(),
            Samples::Images(v) => v.iter().map(|t| t.values().to_vec()).collect(),
        }
    }

    /// Vectors become `d x 1 x 1` images.
    pub fn images(&self) -> CliResult<Vec<ImageTensor>> {
        match self {
            Samples::Images(v) => Ok(v.clone()),
            Samples::Vectors(v) => v.iter().map(|x| ImageTensor::from_vector(x).map_err(CliError::from)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub name: String,
    pub train: Samples,
    pub train_labels: Vec<usize>,
    pub test: Option<(Samples, Vec<usize>)>,
    pub class_names: Vec<String>,
    /// Files read, for fingerprinting.
    pub sources: Vec<PathBuf>,
}

impl LoadedData {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn test(&self) -> CliResult<&(Samples, Vec<usize>)> {
        self.test.as_ref().ok_or_else(|| CliError::Usage("this protocol needs [data] test_path".into()))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("[data] needs {what}")))
}

type Numbered = (Vec<usize>, Vec<usize>, Vec<String>);

/// Numbers classes. Labels that are all non-negative integers keep their
/// values; anything else is numbered by first appearance.
fn number_labels(train: &[String], test: &[String]) -> Result<Numbered, String> {
    let all = || train.iter().chain(test);
    let numeric: Option<Vec<usize>> = all().map(|l| l.parse::<usize>().ok()).collect();
    if let Some(values) = numeric {
        let k = values.iter().max().map_or(0, |m| m + 1);
        let (a, b) = values.split_at(train.len());
        return Ok((a.to_vec(), b.to_vec(), (0..k).map(|c| c.to_string()).collect()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut index = |l: &String| match names.iter().position(|n| n == l) {
        Some(i) => i,
        None => {
            names.push(l.clone());
            names.len() - 1
        }
    };
    let a: Vec<usize> = train.iter().map(&mut index).collect();
    let b: Vec<usize> = test.iter().map(&mut index).collect();
    Ok((a, b, names))
}

fn csv_schema(spec: &DataSpec) -> CsvSchema {
    let label = match &spec.label_column {
        None => LabelColumn::Last,
        Some(name) => LabelColumn::Named(name.clone()),
    };
    CsvSchema { label, has_header: spec.header }
}

fn read_labels(path: Option<&Path>, count: usize, data_path: &Path) -> CliResult<Vec<String>> {
    let path = path.ok_or_else(|| {
        CliError::Usage(format!("{}: tensor files carry no labels; set [data] labels", data_path.display()))
    })?;
    let labels = data::load_label_file(path)?;
    if labels.len() != count {
        return Err(CliError::data(path, format!("{} labels for {count} tensors", labels.len())));
    }
    Ok(labels)
}

fn load_split(spec: &DataSpec, path: &Path, labels: Option<&Path>) -> CliResult<(Samples, Vec<String>)> {
    match spec.format {
        DataFormat::Csv => {
            let (x, y) = data::read_csv_rows(path, &csv_schema(spec))?;
            Ok((Samples::Vectors(x), y))
        }
        DataFormat::Tensor => {
            let t = read_tensors(path)?;
            let y = read_labels(labels, t.len(), path)?;
            Ok((Samples::Images(t), y))
        }
        DataFormat::TensorCsv => {
            let (t, y) = read_tensor_csv(path)?;
            let y = match (y, labels) {
                (Some(y), None) => y,
                (_, Some(_)) | (None, None) => read_labels(labels, t.len(), path)?,
            };
            Ok((Samples::Images(t), y))
        }
        DataFormat::Cifar10 | DataFormat::BalanceScale => unreachable!("handled by load_data"),
    }
}

pub fn load_data(spec: &DataSpec) -> CliResult<LoadedData> {
    match spec.format {
        DataFormat::BalanceScale => {
            let ds = data::balance_scale()?;
            let names = ["B", "R", "L"].iter().map(|s| s.to_string()).collect();
            return Ok(LoadedData {
                name: ds.name,
                train: Samples::Vectors(ds.features),
                train_labels: ds.labels,
                test: None,
                class_names: names,
                sources: Vec::new(),
            });
        }
        DataFormat::Cifar10 => {
            let dir = required(&spec.path, "path (the CIFAR-10 directory)")?;
            let (train, train_labels, stats) = data::load_cifar10(dir, CifarSplit::Train, None)?;
            let (test, test_labels, _) = data::load_cifar10(dir, CifarSplit::Test, Some(stats))?;
            return Ok(LoadedData {
                name: "cifar10".into(),
                train: Samples::Images(train),
                train_labels,
                test: Some((Samples::Images(test), test_labels)),
                class_names: (0..10).map(|c| c.to_string()).collect(),
                sources: vec![dir.to_path_buf()],
            });
        }
        _ => {}
    }
    let path = required(&spec.path, "path")?;
    let (mut train, train_raw) = load_split(spec, path, spec.labels.as_deref())?;
    let mut sources = vec![path.to_path_buf()];
    let mut test = None;
    if let Some(tp) = &spec.test_path {
        test = Some(load_split(spec, tp, spec.test_labels.as_deref())?);
        sources.push(tp.clone());
    }
    let test_raw: Vec<String> = test.as_ref().map(|t| t.1.clone()).unwrap_or_default();
    let (train_labels, test_labels, class_names) =
        number_labels(&train_raw, &test_raw).map_err(|e| CliError::data(path, e))?;
    let mut test = test.map(|(s, _)| (s, test_labels));
    if let Some((t, _)) = &test {
        let dim = |s: &Samples| match s {
            Samples::Vectors(v) => v[0].len(),
            Samples::Images(v) => v[0].values().len(),
        };
        if dim(t) != dim(&train) {
            return Err(CliError::data(
                path,
                format!("train samples have {} values, test samples {}", dim(&train), dim(t)),
            ));
        }
    }
    if spec.standardize {
        standardize(&mut train, test.as_mut().map(|t| &mut t.0), path)?;
    }
    let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok(LoadedData { name, train, train_labels, test, class_names, sources })
}

/// Column z-scores with training statistics; constant columns are only
/// centred.
fn standardize(train: &mut Samples, test: Option<&mut Samples>, path: &Path) -> CliResult<()> {
    let Samples::Vectors(rows) = train else {
        return Err(CliError::data(path, "standardize applies to tabular data only"));
    };
    let n = rows.len() as f64;
    let d = rows[0].len();
    let stats: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect();
    let apply = |rows: &mut Vec<Vec<f64>>| {
        for r in rows {
            for (v, (m, s)) in r.iter_mut().zip(&stats) {
                *v -= m;
                if *s > 0.0 {
                    *v /= s;
                }
            }
        }
    };
    apply(rows);
    if let Some(Samples::Vectors(t)) = test {
        apply(t);
    }
    Ok(())
}

/// Raw kernel between two sample sets (`b = None` for the symmetric Gram).
pub fn raw_gram(spec: &KernelSpec, a: &Samples, b: Option<&Samples>) -> CliResult<GramMatrix> {
    spec.validate()?;
    Ok(match spec.kind {
        KernelKind::Cntk => {
            let ia = a.images()?;
            let ib = b.map(Samples::images).transpose()?;
            cntk_gram(&ia, ib.as_deref(), &spec.cntk())?
        }
        _ => {
            let va = a.vectors();
            let vb = b.map(Samples::vectors);
            gram_matrix(&va, vb.as_deref(), &spec.dense())?
        }
    })
}

/// Kernel value of each sample with itself.
pub fn self_values(spec: &KernelSpec, a: &Samples) -> CliResult<Vec<f64>> {
    Ok(match spec.kind {
        KernelKind::Cntk => cntk_self_values(&a.images()?, &spec.cntk())?,
        _ => {
            let cfg = spec.dense();
            a.vectors().iter().map(|x| ntk_pair(x, x, &cfg)).collect::<Result<_, _>>()?
        }
    })
}

/// Train Gram and optional `train x test` cross Gram, normalized to unit
/// self-similarity when the kernel spec asks for it.
pub fn kernel_grams(
    spec: &KernelSpec,
    train: &Samples,
    test: Option<&Samples>,
) -> CliResult<(GramMatrix, Option<GramMatrix>)> {
    let g = raw_gram(spec, train, None)?;
    let cross = test.map(|t| raw_gram(spec, train, Some(t))).transpose()?;
    if !spec.normalize {
        return Ok((g, cross));
    }
    let diag = g.diagonal();
    match (cross, test) {
        (Some(c), Some(t)) => {
            let (g, c) = normalize_gram(&g, &c, &diag, &self_values(spec, t)?)?;
            Ok((g, Some(c)))
        }
        _ => {
            let empty = GramMatrix::zeros(g.rows(), 0);
            let (g, _) = normalize_gram(&g, &empty, &diag, &[])?;
            Ok((g, None))
        }
    }
}
