//! Dataset loaders.

mod balance;
mod cifar;
mod table;

pub use balance::{balance_scale, BALANCE_SCALE_ENV};
pub use cifar::{load_cifar10, ChannelStats, CifarSplit, CIFAR10_ENV};
pub use table::{load_csv, load_label_file, read_csv_rows, CsvSchema, LabelColumn};
