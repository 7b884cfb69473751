use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, COLUMN_INDEX, FEATURE_COUNT, FEATURE_NAMES};
use super::model::{RecModel, CHART_CLASSES};
use super::oracle::Verdict;
use super::recommend::{recommend, RecEntry};
use super::train::oracle_verdict;
use crate::datatable::{Column, ColumnType, DataTable, Matrix};
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::drattacks::{full_mask, invert_to_target, AdversarialInput, InversionConfig, Verifier};
use crate::error::{Error, Result};
use crate::paradr::{distance, BBox, Point, ProjectionOracle, Projector};

fn top1(model: &RecModel, table: &DataTable) -> Result<RecEntry> {
    Ok(recommend(model, table, 1)?.entries.remove(0))
}

// ---------------------------------------------------------------- blank cell

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlankCellOutcome {
    pub column: String,
    pub row: usize,
    pub original_cell: String,
    pub type_before: ColumnType,
    pub type_after: ColumnType,
    pub before: RecEntry,
    pub after: RecEntry,
    /// Oracle verdict on the new top-1 subset, judged on the unedited table.
    pub oracle_after: Verdict,
    pub trials: usize,
    #[serde(skip)]
    pub table: Option<DataTable>,
}

/// Blank single cells of quantitative columns until the top-1
/// recommendation changes to a subset the rule oracle does not label with
/// the recommended chart.
///
/// The oracle judges the unedited table: a blank cell changes how a column
/// is read, not what it measures.
///
/// Candidates alternate over the quantitative columns in table order; rows
/// within each column are visited in a seeded random order.
pub fn blank_cell_attack(model: &RecModel, table: &DataTable, budget: usize, seed: u64) -> Result<BlankCellOutcome> {
    let quant: Vec<usize> = (0..table.width())
        .filter(|&i| table.column_at(i).kind() == ColumnType::Quantitative)
        .collect();
    if quant.is_empty() {
        return Err(Error::NoQuantitativeColumn);
    }
    let before = top1(model, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<Vec<usize>> = quant
        .iter()
        .map(|_| {
            let mut rows: Vec<usize> = (0..table.rows()).collect();
            rows.shuffle(&mut rng);
            rows
        })
        .collect();
    let total = quant.len() * table.rows();
    for trial in 0..budget.min(total) {
        let k = trial % quant.len();
        let row = orders[k][trial / quant.len()];
        let col = table.column_at(quant[k]);
        let edited = table.set_cell(col.name(), row, "")?;
        let after = top1(model, &edited)?;
        if after.same_choice(&before) {
            continue;
        }
        let verdict = oracle_verdict(table, &after.indices);
        if verdict != Verdict::Chart(after.chart) {
            return Ok(BlankCellOutcome {
                column: col.name().to_string(),
                row,
                original_cell: col.raw()[row].clone(),
                type_before: col.kind(),
                type_after: edited.column_at(quant[k]).kind(),
                before,
                after,
                oracle_after: verdict,
                trials: trial + 1,
                table: Some(edited),
            });
        }
    }
    Err(Error::NoSuccessWithinBudget)
}

// ----------------------------------------------------------------- gradients

/// Gradients of `−set score` and `−logit[top chart]` with respect to every
/// feature of every column in the entry, in entry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGradients {
    pub columns: Vec<String>,
    pub set: Vec<[f64; FEATURE_COUNT]>,
    pub chart: Vec<[f64; FEATURE_COUNT]>,
}

impl FeatureGradients {
    /// Largest absolute gradient of each feature over columns and heads.
    pub fn magnitudes(&self) -> [f64; FEATURE_COUNT] {
        let mut m = [0.0f64; FEATURE_COUNT];
        for row in self.set.iter().chain(&self.chart) {
            for (slot, g) in m.iter_mut().zip(row) {
                *slot = slot.max(g.abs());
            }
        }
        m
    }

    /// Feature names by descending magnitude; ties keep feature order.
    pub fn ranking(&self) -> Vec<(&'static str, f64)> {
        let m = self.magnitudes();
        let mut idx: Vec<usize> = (0..FEATURE_COUNT).collect();
        idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
        idx.into_iter().map(|i| (FEATURE_NAMES[i], m[i])).collect()
    }

    pub fn rank_of(&self, feature: usize) -> usize {
        self.ranking()
            .iter()
            .position(|(n, _)| *n == FEATURE_NAMES[feature])
            .expect("known feature")
    }
}

fn input_gradients(model: &RecModel, seq: &[[f64; FEATURE_COUNT]], chart: Option<usize>) -> Result<Vec<[f64; FEATURE_COUNT]>> {
    let mut g = Graph::new();
    let mut inputs = HashMap::new();
    let xs: Vec<NodeId> = seq
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let name = format!("x{t}");
            inputs.insert(name.clone(), Tensor::row(f.to_vec()).expect("finite features"));
            g.input(name)
        })
        .collect();
    let nodes = model.build(&mut g, &xs, 1);
    match chart {
        None => {
            g.scale(nodes.set_score, -1.0);
        }
        Some(c) => {
            let mut pick = vec![0.0; CHART_CLASSES];
            pick[c] = -1.0;
            let sel = g.constant(Tensor::matrix(CHART_CLASSES, 1, pick)?);
            g.matmul(nodes.logits, sel);
        }
    }
    g.forward(&inputs)?;
    let grads = g.backward(&Tensor::scalar(1.0)?)?;
    Ok(xs
        .iter()
        .map(|&x| {
            let mut row = [0.0; FEATURE_COUNT];
            if let Some(t) = grads.get(x) {
                row.copy_from_slice(t.values());
            }
            row
        })
        .collect())
}

pub fn feature_gradients(model: &RecModel, table: &DataTable, entry: &RecEntry) -> Result<FeatureGradients> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    let feats = featurize(table)?;
    if let Some(&i) = entry.indices.iter().find(|&&i| i >= feats.len()) {
        return Err(Error::BadParameters(format!("column index {i}")));
    }
    let seq: Vec<[f64; FEATURE_COUNT]> = entry.indices.iter().map(|&i| feats[i].0).collect();
    Ok(FeatureGradients {
        columns: entry.columns.clone(),
        set: input_gradients(model, &seq, None)?,
        chart: input_gradients(model, &seq, Some(entry.chart.index()))?,
    })
}

// ------------------------------------------------------------ column shuffle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShuffleConfig {
    /// Widths up to this are searched exhaustively.
    pub exhaustive_width: usize,
    /// Random permutations tried on wider tables.
    pub samples: usize,
    /// Search only when `column_idx_normed` ranks within this many features.
    pub index_rank_gate: Option<usize>,
    pub seed: u64,
}

impl Default for ShuffleConfig {
    fn default() -> Self {
        Self {
            exhaustive_width: 5,
            samples: 1000,
            index_rank_gate: Some(3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleOutcome {
    pub ranking: Vec<(String, f64)>,
    /// 0-based rank of `column_idx_normed`.
    pub index_rank: usize,
    /// Column `i` of the shuffled table is column `permutation[i]` of the input.
    pub permutation: Vec<usize>,
    pub before: RecEntry,
    pub after: RecEntry,
    pub permutations_tried: usize,
    pub gradients: FeatureGradients,
}

/// Permutations of `0..n` in lexicographic order, identity first.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
        p.swap(i, j);
        p[i + 1..].reverse();
    }
    out
}

fn candidate_orders(width: usize, config: &ShuffleConfig) -> Vec<Vec<usize>> {
    if width <= config.exhaustive_width {
        return permutations(width).into_iter().skip(1).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let identity: Vec<usize> = (0..width).collect();
    (0..config.samples)
        .map(|_| {
            let mut p = identity.clone();
            p.shuffle(&mut rng);
            p
        })
        .filter(|p| *p != identity)
        .collect()
}

/// Reorder columns so that the top-1 recommendation changes.
pub fn column_shuffle_attack(model: &RecModel, table: &DataTable, config: &ShuffleConfig) -> Result<ShuffleOutcome> {
    if table.width() < 2 {
        return Err(Error::SingleColumn);
    }
    let before = top1(model, table)?;
    let gradients = feature_gradients(model, table, &before)?;
    let index_rank = gradients.rank_of(COLUMN_INDEX);
    let ranking: Vec<(String, f64)> = gradients.ranking().into_iter().map(|(n, v)| (n.to_string(), v)).collect();
    if let Some(gate) = config.index_rank_gate {
        if index_rank >= gate {
            return Err(Error::NoFlippingPermutation);
        }
    }
    for (tried, order) in candidate_orders(table.width(), config).into_iter().enumerate() {
        let shuffled = table.permute_columns(&order)?;
        let after = top1(model, &shuffled)?;
        if !after.same_choice(&before) {
            return Ok(ShuffleOutcome {
                ranking,
                index_rank,
                permutation: order,
                before,
                after,
                permutations_tried: tried + 1,
                gradients,
            });
        }
    }
    Err(Error::NoFlippingPermutation)
}

// ------------------------------------------------------------------ pipeline

pub const PIPELINE_GRID: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Magnitudes; each is used with both signs on both axes.
    pub grid: Vec<f64>,
    pub inversion: InversionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: PIPELINE_GRID.to_vec(),
            inversion: InversionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub candidate: Point,
    pub candidates_tried: usize,
    pub before: RecEntry,
    /// Top-1 after appending the candidate itself.
    pub planned: RecEntry,
    /// Top-1 after appending the target's placement of the crafted instance.
    pub end_to_end: RecEntry,
    pub end_to_end_flip: bool,
    pub crafted: AdversarialInput,
    /// Crafted instance in raw units.
    pub crafted_raw: Vec<f64>,
    /// Target-side distance over the embedding bbox diagonal.
    pub relative_error: f64,
    pub within_tolerance: bool,
}

fn cell(v: f64) -> String {
    format!("{v}")
}

/// Two-column table `x`, `y` of embedding coordinates.
pub fn points_table(name: &str, points: &[Point]) -> Result<DataTable> {
    let xs = points.iter().map(|p| cell(p[0])).collect();
    let ys = points.iter().map(|p| cell(p[1])).collect();
    DataTable::new(name, vec![Column::new("x", xs), Column::new("y", ys)])
}

/// Candidate points over the signed grid, by ascending norm then coordinates.
pub fn grid_candidates(grid: &[f64]) -> Vec<Point> {
    let mut axis: Vec<f64> = grid.iter().flat_map(|&g| [g, -g]).filter(|v| *v != 0.0).collect();
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    let mut out: Vec<Point> = axis.iter().flat_map(|&x| axis.iter().map(move |&y| [x, y])).collect();
    out.sort_by(|a, b| {
        (a[0].hypot(a[1]))
            .total_cmp(&b[0].hypot(b[1]))
            .then(a[0].total_cmp(&b[0]))
            .then(a[1].total_cmp(&b[1]))
    });
    out
}

/// Find one appended 2D point that flips the recommendation for the
/// projected table, craft a raw instance landing there through the
/// substitute, and re-check the flip through the target.
pub fn pipeline_attack(
    data: &Matrix,
    target: &dyn ProjectionOracle,
    sub: &Projector,
    model: &RecModel,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    let n = data.data.rows();
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        points.push(
            target
                .query(data.data.row_slice(i))
                .map_err(|e| Error::OracleFailure(e.to_string()))?,
        );
    }
    let table = points_table("projection", &points)?;
    let before = top1(model, &table)?;
    let mut chosen = None;
    for (k, c) in grid_candidates(&config.grid).into_iter().enumerate() {
        let t = table.append_row(&[cell(c[0]), cell(c[1])])?;
        let after = top1(model, &t)?;
        if !after.same_choice(&before) {
            chosen = Some((c, k + 1, after));
            break;
        }
    }
    let (candidate, tried, planned) = chosen.ok_or(Error::NoCandidateFound)?;

    let bbox = BBox::of(&points).ok_or(Error::EmptyTable)?;
    let verifier = Verifier { target, bbox };
    let base = (0..n)
        .min_by(|&a, &b| distance(points[a], candidate).total_cmp(&distance(points[b], candidate)))
        .expect("non-empty data");
    let crafted = invert_to_target(
        sub,
        &verifier,
        candidate,
        data.data.row_slice(base),
        &full_mask(data.width()),
        &config.inversion,
    )?;
    if crafted.crafted.iter().any(|v| !v.is_finite()) {
        return Err(Error::InversionFailed("non-finite instance".into()));
    }
    let achieved = crafted.achieved;
    let e2e_table = table.append_row(&[cell(achieved[0]), cell(achieved[1])])?;
    let end_to_end = top1(model, &e2e_table)?;
    let relative_error = distance(achieved, candidate) / bbox.diagonal();
    Ok(PipelineOutcome {
        candidate,
        candidates_tried: tried,
        end_to_end_flip: !end_to_end.same_choice(&before),
        within_tolerance: crafted.success == Some(true),
        crafted_raw: data.norm.denormalize_row(&crafted.crafted)?,
        crafted,
        before,
        planned,
        end_to_end,
        relative_error,
    })
}
