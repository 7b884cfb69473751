//! Tables with typed columns, normalized matrices, bundled datasets and
//! synthetic data generators.

pub mod matrix;
pub mod synth;
pub mod table;

use std::path::PathBuf;

pub use matrix::{to_matrix, Matrix, NormKind, Normalization};
pub use synth::{column_subsets, load_corpus, make_blobs, make_chart_corpus, save_corpus, TableLabels};
pub use table::{infer_type, Column, ColumnType, DataTable, LoadOptions};

use crate::error::Result;

pub const DATA_DIR_ENV: &str = "VIZATTACK_DATA_DIR";

/// Directory holding `wine.csv` and `gapminder.csv`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")))
}

/// 178 wines, 13 attributes, `cultivar` label column (1..=3).
pub fn load_wine() -> Result<DataTable> {
    DataTable::load_csv(
        &data_dir().join("wine.csv"),
        &LoadOptions {
            name: Some("wine".into()),
            label_columns: vec!["cultivar".into()],
        },
    )
}

pub fn load_gapminder() -> Result<DataTable> {
    DataTable::load_csv(
        &data_dir().join("gapminder.csv"),
        &LoadOptions {
            name: Some("gapminder".into()),
            label_columns: vec![],
        },
    )
}
