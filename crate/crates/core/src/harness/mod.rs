//! Evaluation protocols and comparison statistics.

pub mod dataset;
pub mod episodes;
pub mod grid;
pub mod metrics;
pub mod split;
pub mod stats;

pub use dataset::TabularDataset;
pub use metrics::{accuracy_summaries, friedman_rank, wilcoxon_signed_rank, AccuracyTable, MetricsReport};
pub use stats::MeanStd;
