//! The UCI balance-scale data. The original file is the complete
//! enumeration of left/right weights and distances in `1..=5`, labelled by
//! which side tips, so it can be regenerated exactly.

use std::path::Path;

use ntk_core::harness::TabularDataset;

use super::table::{load_csv, CsvSchema, LabelColumn};
use crate::error::CliResult;

/// Points at a local copy of `balance-scale.data` to use instead of the
/// regenerated table.
pub const BALANCE_SCALE_ENV: &str = "NTK_BALANCE_SCALE";

/// All 625 rows in the original order (`L`, `B`, `R` labels), features
/// standardized per column.
pub fn balance_scale() -> CliResult<TabularDataset> {
    let mut ds = match std::env::var_os(BALANCE_SCALE_ENV) {
        Some(p) => {
            let schema = CsvSchema { label: LabelColumn::Index(0), has_header: false };
            load_csv(Path::new(&p), &schema)?
        }
        None => generate(),
    };
    ds.name = "balance-scale".into();
    ds.standardize_columns();
    Ok(ds)
}

fn generate() -> TabularDataset {
    let mut features = Vec::with_capacity(625);
    let mut labels = Vec::with_capacity(625);
    for lw in 1..=5 {
        for ld in 1..=5 {
            for rw in 1..=5 {
                for rd in 1..=5 {
                    let (left, right) = (lw * ld, rw * rd);
                    labels.push(match left.cmp(&right) {
                        std::cmp::Ordering::Greater => "L",
                        std::cmp::Ordering::Equal => "B",
                        std::cmp::Ordering::Less => "R",
                    });
                    features.push(vec![lw as f64, ld as f64, rw as f64, rd as f64]);
                }
            }
        }
    }
    TabularDataset::from_named_labels("balance-scale", features, &labels).expect("generated table is valid").0
}
