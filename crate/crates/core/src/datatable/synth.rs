//! Seeded synthetic data: Gaussian blobs for projector tests and a
//! labeled corpus of small tables for the chart recommender.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Normalization};
use super::table::{Column, DataTable, LoadOptions};
use crate::chartrec::oracle::{rule_oracle, ChartType, ColumnProfile, Verdict};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// `k` isotropic Gaussian clusters in `d` dimensions with centroids at
/// least `6 × spread` apart. Points are assigned round-robin to clusters.
pub fn make_blobs(k: usize, n: usize, d: usize, spread: f64, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    if k == 0 || n < k || d == 0 || !(spread > 0.0) {
        return Err(Error::BadParameters(format!(
            "make_blobs(k={k}, n={n}, d={d}, spread={spread})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let box_half = 10.0 * spread * (k as f64).max(2.0);
    let min_sep = 6.0 * spread;
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while centroids.len() < k {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::BadParameters("could not separate centroids".into()));
        }
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-box_half..box_half)).collect();
        let ok = centroids.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_sep
        });
        if ok {
            centroids.push(c);
        }
    }
    let noise = Normal::new(0.0, spread).expect("spread is positive");
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label);
        for &c in &centroids[label] {
            values.push(c + noise.sample(&mut rng));
        }
    }
    let data = Tensor::matrix(n, d, values)?;
    let attributes = (0..d).map(|j| format!("x{j}")).collect();
    Ok((
        Matrix {
            data,
            attributes,
            norm: Normalization::identity(d),
        },
        labels,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetLabel {
    pub columns: Vec<String>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Oracle labels for one corpus table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLabels {
    /// Chart type the table was generated around; the table always contains
    /// a subset the oracle labels with it.
    pub anchor: ChartType,
    /// Columns of the anchor chart, in table order.
    #[serde(default)]
    pub anchor_columns: Vec<String>,
    pub subsets: Vec<SubsetLabel>,
}

impl TableLabels {
    pub fn is_anchor(&self, columns: &[String]) -> bool {
        let mut a: Vec<&String> = self.anchor_columns.iter().collect();
        let mut b: Vec<&String> = columns.iter().collect();
        a.sort_unstable();
        b.sort_unstable();
        !a.is_empty() && a == b
    }
}

/// Every column subset of size 1..=3 in table order.
pub fn column_subsets(width: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..width {
        out.push(vec![a]);
    }
    for a in 0..width {
        for b in a + 1..width {
            out.push(vec![a, b]);
        }
    }
    for a in 0..width {
        for b in a + 1..width {
            for c in b + 1..width {
                out.push(vec![a, b, c]);
            }
        }
    }
    out
}

pub fn label_table(table: &DataTable, anchor: ChartType, anchor_columns: Vec<String>) -> TableLabels {
    let profiles: Vec<ColumnProfile> = table.columns().map(ColumnProfile::of).collect();
    let subsets = column_subsets(table.width())
        .into_iter()
        .map(|s| {
            let prof: Vec<ColumnProfile> = s.iter().map(|&i| profiles[i]).collect();
            SubsetLabel {
                columns: s.iter().map(|&i| table.column_at(i).name().to_string()).collect(),
                verdict: rule_oracle(&prof),
            }
        })
        .collect();
    TableLabels {
        anchor,
        anchor_columns,
        subsets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Quant,
    Temporal,
    NominalPie,
    NominalBar,
    NominalWide,
}

const QUANT_NAMES: &[&str] = &[
    "price", "sales", "count", "score", "weight", "height", "revenue", "temperature", "rate",
    "amount", "profit", "distance", "duration", "income", "age", "value", "ratio", "pressure",
    "population", "expectancy", "fertility", "speed", "volume", "cost",
];
const TEMPORAL_NAMES: &[&str] = &["year", "date", "period", "time", "day", "season_start"];
const NOMINAL_NAMES: &[&str] = &[
    "category", "region", "type", "group", "brand", "segment", "status", "class", "country",
    "city", "name", "product", "team", "department", "label", "code",
];
const WORDS: &[&str] = &[
    "alpha", "bravo", "cedar", "delta", "ember", "fjord", "grove", "harbor", "iris", "juniper",
    "kelp", "lumen", "maple", "north", "onyx", "pine", "quartz", "river", "sierra", "tundra",
    "umber", "vale", "willow", "xenon", "yarrow", "zephyr",
];

fn column_name(kind: Kind, rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.2) {
        return format!("field_{}", rng.gen_range(0..100));
    }
    let pool = match kind {
        Kind::Quant => QUANT_NAMES,
        Kind::Temporal => TEMPORAL_NAMES,
        _ => NOMINAL_NAMES,
    };
    pool.choose(rng).unwrap().to_string()
}

fn category_names(count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words: Vec<&str> = WORDS.to_vec();
    words.shuffle(rng);
    (0..count)
        .map(|i| {
            let w = words[i % words.len()];
            if i < words.len() {
                w.to_string()
            } else {
                format!("{w}_{}", i / words.len())
            }
        })
        .collect()
}

fn format_number(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn gen_column(kind: Kind, rows: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    match kind {
        Kind::Quant => {
            let decimals = *[0usize, 1, 2, 3].choose(rng).unwrap();
            let scale = 10f64.powf(rng.gen_range(-1.0..4.0));
            let shift = if rng.gen_bool(0.3) { -scale * rng.gen_range(0.2..1.5) } else { 0.0 };
            let dist = rng.gen_range(0..5);
            let mut trend = 0.0;
            let step = if dist == 4 { scale / rows as f64 } else { 0.0 };
            (0..rows)
                .map(|_| {
                    let base = match dist {
                        0 => Normal::new(scale, scale * 0.3).unwrap().sample(rng),
                        1 => rng.gen_range(0.0..scale),
                        2 => scale * (Normal::new(0.0, 0.8).unwrap().sample(rng) as f64).exp(),
                        3 => rng.gen_range(0..6) as f64 * (scale / 5.0).max(1.0).round(),
                        _ => {
                            trend += step;
                            trend + Normal::new(0.0, scale * 0.05).unwrap().sample(rng)
                        }
                    };
                    format_number(base + shift, decimals)
                })
                .collect()
        }
        Kind::Temporal => {
            let iso = rng.gen_bool(0.3);
            let repeats = if rng.gen_bool(0.4) { rng.gen_range(2..6) } else { 1 };
            let start = rng.gen_range(1900..2000);
            let stride = *[1, 1, 5, 10].choose(rng).unwrap();
            let distinct = rows.div_ceil(repeats);
            (0..rows)
                .map(|i| {
                    // grouped layouts repeat the whole time axis per group
                    let t = if repeats > 1 { i % distinct } else { i };
                    if iso {
                        let d = chrono::NaiveDate::from_ymd_opt(start, 1, 1).unwrap()
                            + chrono::Duration::days((t * stride) as i64);
                        d.format("%Y-%m-%d").to_string()
                    } else {
                        (start + (t * stride) as i32).clamp(1000, 2999).to_string()
                    }
                })
                .collect()
        }
        Kind::NominalPie | Kind::NominalBar | Kind::NominalWide => {
            let card = match kind {
                Kind::NominalPie => rng.gen_range(2..=6),
                Kind::NominalBar => rng.gen_range(7..=12),
                _ => rng.gen_range(20..=80).min(rows),
            };
            let cats = category_names(card, rng);
            // every category appears at least once
            let mut cells: Vec<String> = (0..rows).map(|i| cats[i % card].clone()).collect();
            cells.shuffle(rng);
            cells
        }
    }
}

fn anchor_kinds(anchor: ChartType) -> Vec<Kind> {
    match anchor {
        ChartType::Scatter => vec![Kind::Quant, Kind::Quant],
        ChartType::Line => vec![Kind::Temporal, Kind::Quant],
        ChartType::Bar => vec![Kind::NominalBar, Kind::Quant],
        ChartType::Area => vec![Kind::Quant],
        ChartType::Pie => vec![Kind::NominalPie],
    }
}

fn filler_kind(rng: &mut ChaCha8Rng) -> Kind {
    match rng.gen_range(0..10) {
        0..=3 => Kind::Quant,
        4 => Kind::Temporal,
        5 | 6 => Kind::NominalPie,
        7 => Kind::NominalBar,
        _ => Kind::NominalWide,
    }
}

/// Share of tables laid out with the anchor chart's columns first.
pub const CONVENTIONAL_LAYOUT: f64 = 0.8;

fn generate_table(index: usize, anchor: ChartType, rng: &mut ChaCha8Rng) -> Result<(DataTable, Vec<String>)> {
    loop {
        let rows = rng.gen_range(20..=200);
        let mut kinds: Vec<(Kind, bool)> = anchor_kinds(anchor).into_iter().map(|k| (k, true)).collect();
        let width = rng.gen_range(kinds.len().max(2)..=6);
        let mut fillers: Vec<(Kind, bool)> = (kinds.len()..width).map(|_| (filler_kind(rng), false)).collect();
        if rng.gen_bool(CONVENTIONAL_LAYOUT) {
            fillers.shuffle(rng);
            kinds.extend(fillers);
        } else {
            kinds.extend(fillers);
            kinds.shuffle(rng);
        }
        let mut used = std::collections::HashSet::new();
        let mut columns = Vec::with_capacity(width);
        let mut anchor_columns = Vec::new();
        for (kind, is_anchor) in kinds {
            let mut name = column_name(kind, rng);
            while !used.insert(name.clone()) {
                name = format!("{name}_{}", used.len());
            }
            if is_anchor {
                anchor_columns.push(name.clone());
            }
            columns.push(Column::new(name, gen_column(kind, rows, rng)));
        }
        let table = DataTable::new(format!("corpus_{index:04}"), columns)?;
        let profiles: Vec<ColumnProfile> = anchor_columns
            .iter()
            .map(|n| table.column(n).map(ColumnProfile::of))
            .collect::<Result<_>>()?;
        // generated quantitative data can occasionally be read as years
        if rule_oracle(&profiles) == Verdict::Chart(anchor) {
            return Ok((table, anchor_columns));
        }
    }
}

/// `count` random tables, each built around one chart type (cycled in
/// order so classes stay balanced), labeled by the rule oracle.
pub fn make_chart_corpus(count: usize, seed: u64) -> Result<Vec<(DataTable, TableLabels)>> {
    if count == 0 {
        return Err(Error::BadParameters("empty corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let anchor = ChartType::ALL[i % ChartType::ALL.len()];
            let (table, anchor_columns) = generate_table(i, anchor, &mut rng)?;
            let labels = label_table(&table, anchor, anchor_columns);
            Ok((table, labels))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    #[serde(flatten)]
    labels: TableLabels,
}

/// Writes `dir/<table>.csv` for every table plus `dir/labels.json`.
pub fn save_corpus(corpus: &[(DataTable, TableLabels)], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::with_capacity(corpus.len());
    for (table, labels) in corpus {
        let file = format!("{}.csv", table.name());
        table.save_csv(&dir.join(&file))?;
        manifest.push(ManifestEntry {
            file,
            labels: labels.clone(),
        });
    }
    let path = dir.join("labels.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(dir: &Path) -> Result<Vec<(DataTable, TableLabels)>> {
    let path = dir.join("labels.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    manifest
        .into_iter()
        .map(|m| {
            let table = DataTable::load_csv(&dir.join(&m.file), &LoadOptions::default())?;
            Ok((table, m.labels))
        })
        .collect()
}
