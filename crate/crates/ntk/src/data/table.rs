use std::path::Path;

use ntk_core::harness::TabularDataset;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    /// Header name, or a zero-based index when the file has no header.
    Named(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub label: LabelColumn,
    pub has_header: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { label: LabelColumn::Last, has_header: true }
    }
}

/// Numeric features plus one label column. Labels are arbitrary strings,
/// numbered in order of first appearance.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> CliResult<TabularDataset> {
    let (features, raw_labels) = read_csv_rows(path, schema)?;
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let (ds, _) = TabularDataset::from_named_labels(name, features, &raw_labels)
        .map_err(|e| CliError::data(path, e.to_string()))?;
    Ok(ds)
}

/// Feature rows and raw label strings, before class numbering.
pub fn read_csv_rows(path: &Path, schema: &CsvSchema) -> CliResult<(Vec<Vec<f64>>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Option<Vec<String>> = if schema.has_header {
        Some(reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut label_idx: Option<usize> = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        // data rows are numbered from 1, after the header if there is one
        let row = r + 1 + usize::from(schema.has_header);
        let width = record.len();
        let li = match label_idx {
            Some(i) => i,
            None => {
                let i = resolve_label(path, &schema.label, header.as_deref(), width)?;
                label_idx = Some(i);
                i
            }
        };
        if width < 2 {
            return Err(CliError::data(path, format!("row {row}: need at least one feature and a label")));
        }
        let mut x = Vec::with_capacity(width - 1);
        for (c, cell) in record.iter().enumerate() {
            if c == li {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => x.push(v),
                _ => {
                    let col = header
                        .as_ref()
                        .and_then(|h| h.get(c))
                        .map_or_else(|| format!("{}", c + 1), |n| format!("{} ({n})", c + 1));
                    return Err(CliError::data(
                        path,
                        format!("row {row}, column {col}: '{cell}' is not a finite number"),
                    ));
                }
            }
        }
        features.push(x);
        raw_labels.push(record[li].to_string());
    }
    if features.is_empty() {
        return Err(CliError::data(path, "no data rows"));
    }
    if let Some(i) = features.iter().position(|f| f.len() != features[0].len()) {
        return Err(CliError::data(
            path,
            format!("data row {} has {} features, expected {}", i + 1, features[i].len(), features[0].len()),
        ));
    }
    Ok((features, raw_labels))
}

fn resolve_label(path: &Path, label: &LabelColumn, header: Option<&[String]>, width: usize) -> CliResult<usize> {
    let idx = match label {
        LabelColumn::Last => width.checked_sub(1),
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Named(name) => match header {
            Some(h) => h.iter().position(|c| c == name),
            None => name.parse::<usize>().ok(),
        },
    };
    match idx {
        Some(i) if i < width => Ok(i),
        _ => Err(CliError::data(path, format!("label column {label:?} not found among {width} columns"))),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::data(path, e.to_string())
    }
}

/// One label per non-empty line.
pub fn load_label_file(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}
