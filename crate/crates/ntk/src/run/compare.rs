use std::path::Path;

use ntk_core::harness::metrics::{
    accuracy_summaries, outperform_counts, wilcoxon_signed_rank, AccuracyTable, MetricsReport,
};
use serde::Serialize;

use super::{log_manifest, RunOutcome};
use crate::error::{CliError, CliResult};
use crate::fmt_f64;
use crate::manifest::Manifest;

/// `dataset,<classifier>,...` header, one row per dataset, accuracies as
/// fractions in `[0, 1]`.
pub fn read_accuracy_table(path: &Path) -> CliResult<AccuracyTable> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| CliError::data(path, e.to_string()))?.clone();
    let classifiers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if classifiers.len() < 2 {
        return Err(CliError::data(path, format!("need at least 2 classifier columns, found {}", classifiers.len())));
    }
    let mut datasets = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CliError::data(path, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(CliError::data(
                path,
                format!("row {row} has {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        datasets.push(rec[0].to_string());
        let vals = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>().map_err(|_| {
                    CliError::data(
                        path,
                        format!("row {row}, column {} ({}): {f:?} is not a number", j + 2, classifiers[j]),
                    )
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        values.push(vals);
    }
    if datasets.is_empty() {
        return Err(CliError::data(path, "no data rows"));
    }
    AccuracyTable::new(datasets, classifiers, values).map_err(|e| CliError::data(path, e.to_string()))
}

#[derive(Serialize)]
struct CompareReport<'a> {
    datasets: usize,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
    /// `outperform[a][b]`: datasets where `a` beats `b` by at least 0.1%.
    outperform: Vec<Vec<usize>>,
}

/// Table-1-style metrics and the pairwise signed-rank tests.
pub fn cmd_compare(manifest: &Manifest) -> CliResult<RunOutcome> {
    let spec = manifest.compare.as_ref().ok_or_else(|| CliError::Usage("compare needs a [compare] section".into()))?;
    let table = read_accuracy_table(&spec.table)?;
    let metrics = accuracy_summaries(&table);
    let mut outputs = vec![log_manifest(manifest)?];

    let p = manifest.output_dir.join("metrics.json");
    crate::write_json(
        &p,
        &CompareReport { datasets: table.datasets.len(), metrics: &metrics, outperform: outperform_counts(&table) },
    )?;
    outputs.push(p);

    let k = table.classifiers.len();
    let mut rows = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let mut row = vec![table.classifiers[a].clone(), table.classifiers[b].clone()];
            match wilcoxon_signed_rank(&table.column(a), &table.column(b)) {
                Ok(w) => row.extend([
                    w.n.to_string(),
                    fmt_f64(w.w_plus),
                    fmt_f64(w.w_minus),
                    fmt_f64(w.statistic),
                    fmt_f64(w.z),
                    fmt_f64(w.p_value),
                    String::new(),
                ]),
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(e.to_string());
                }
            }
            rows.push(row);
        }
    }
    let p = manifest.output_dir.join("wilcoxon.csv");
    crate::write_csv(&p, &["a", "b", "n", "w_plus", "w_minus", "statistic", "z", "p_value", "error"], &rows)?;
    outputs.push(p);

    let best = (0..k)
        .min_by(|&i, &j| metrics.friedman_rank[i].total_cmp(&metrics.friedman_rank[j]))
        .expect("at least two classifiers");
    Ok(RunOutcome {
        outputs,
        summary: format!(
            "{} classifiers on {} datasets; best Friedman rank {} ({:.2})",
            k,
            table.datasets.len(),
            table.classifiers[best],
            metrics.friedman_rank[best]
        ),
    })
}
