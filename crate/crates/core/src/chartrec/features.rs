use serde::{Deserialize, Serialize};

use crate::datatable::{Column, ColumnType, DataTable};
use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 16;
pub const COLUMN_INDEX: usize = 0;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "column_idx_normed",
    "dataType_quantitative",
    "dataType_nominal",
    "dataType_temporal",
    "ratio_negative",
    "ratio_missing",
    "std_normalized",
    "skewness",
    "cardinality_ratio",
    "cardinality_log",
    "min_slog",
    "max_slog",
    "mean_position",
    "monotonicity",
    "name_hash_0",
    "name_hash_1",
];

/// Cardinality at which `cardinality_log` reaches 1.
const CARDINALITY_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnFeatures(pub [f64; FEATURE_COUNT]);

impl ColumnFeatures {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }
}

/// Signed logarithm scaled so that ±10⁶ maps near ±1.4.
fn slog(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p() / 10.0
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.to_lowercase().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Numeric readings of a column: parsed values for quantitative and
/// temporal columns, parseable cells otherwise.
fn numeric(column: &Column) -> Vec<f64> {
    match column.kind() {
        ColumnType::Nominal => column.numeric_cells(),
        _ => column.values().to_vec(),
    }
}

/// Features of `column` sitting at position `index` of `width` columns.
pub fn column_features(column: &Column, index: usize, width: usize) -> ColumnFeatures {
    let mut f = [0.0; FEATURE_COUNT];
    let n = column.len().max(1) as f64;
    f[COLUMN_INDEX] = index as f64 / width as f64;
    match column.kind() {
        ColumnType::Quantitative => f[1] = 1.0,
        ColumnType::Nominal => f[2] = 1.0,
        ColumnType::Temporal => f[3] = 1.0,
    }
    let values = numeric(column);
    f[4] = values.iter().filter(|&&v| v < 0.0).count() as f64 / n;
    f[5] = column.missing_count() as f64 / n;
    let card = column.cardinality() as f64;
    f[8] = card / n;
    f[9] = (card.ln_1p() / CARDINALITY_SCALE.ln_1p()).min(1.0);
    if !values.is_empty() {
        let m = values.len() as f64;
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let range = hi - lo;
        f[10] = slog(lo);
        f[11] = slog(hi);
        if range > 0.0 {
            let sd = var.sqrt();
            f[6] = sd / range;
            let skew = values.iter().map(|v| ((v - mean) / sd).powi(3)).sum::<f64>() / m;
            f[7] = (skew / 2.0).tanh();
            f[12] = (mean - lo) / range;
        }
        let (mut up, mut down) = (0usize, 0usize);
        for w in values.windows(2) {
            if w[1] > w[0] {
                up += 1;
            } else if w[1] < w[0] {
                down += 1;
            }
        }
        if up + down > 0 {
            f[13] = (2.0 * up as f64 / (up + down) as f64 - 1.0).abs();
        }
    }
    let h = fnv1a(column.name());
    f[14] = (h & 0xffff) as f64 / 65535.0 * 2.0 - 1.0;
    f[15] = ((h >> 16) & 0xffff) as f64 / 65535.0 * 2.0 - 1.0;
    ColumnFeatures(f)
}

/// One feature vector per column, in table order.
pub fn featurize(table: &DataTable) -> Result<Vec<ColumnFeatures>> {
    if table.width() == 0 || table.rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let w = table.width();
    Ok(table
        .columns()
        .enumerate()
        .map(|(i, c)| column_features(c, i, w))
        .collect())
}
