use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{column_features, ColumnFeatures};
use super::model::{RecConfig, RecModel, CHART_CLASSES};
use super::oracle::{verdict_utility, ChartType, Verdict};
use crate::datatable::synth::SubsetLabel;
use crate::datatable::{column_subsets, DataTable, TableLabels};
use crate::diffcore::{Adam, AdamConfig, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Below this many tables training proceeds with a warning.
pub const SMALL_CORPUS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Present every training table under a fresh random column order each epoch.
    pub shuffle_columns: bool,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for RecTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: 3e-3,
            shuffle_columns: false,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Held-out quality of a recommender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecEvaluation {
    /// Chart-type accuracy over oracle-accepted subsets.
    pub chart_accuracy: f64,
    /// Area under the ROC curve of the set score, accepted vs rejected.
    pub set_auc: f64,
    pub accepted: usize,
    pub rejected: usize,
}

pub struct TrainedRec {
    pub model: RecModel,
    pub evaluation: RecEvaluation,
    pub loss_trace: Vec<f64>,
    pub train_tables: Vec<usize>,
    pub heldout_tables: Vec<usize>,
}

struct Sample {
    seq: Vec<ColumnFeatures>,
    utility: f64,
    chart: Option<ChartType>,
}

/// Samples of one table whose columns are presented in `order`
/// (`order[p]` is the original index of the column shown at position `p`).
fn table_samples(table: &DataTable, labels: &TableLabels, order: &[usize]) -> Vec<Sample> {
    let w = table.width();
    let mut position = vec![0; w];
    for (p, &c) in order.iter().enumerate() {
        position[c] = p;
    }
    let feats: Vec<ColumnFeatures> = (0..w)
        .map(|c| column_features(table.column_at(c), position[c], w))
        .collect();
    column_subsets(w)
        .into_iter()
        .zip(&labels.subsets)
        .map(|(subset, label)| {
            let mut cols = subset.clone();
            cols.sort_by_key(|&c| position[c]);
            Sample {
                seq: cols.iter().map(|&c| feats[c]).collect(),
                utility: target_utility(labels, label),
                chart: label.verdict.chart(),
            }
        })
        .collect()
}

/// Set-scorer target: the anchor chart's columns score 1; other accepted
/// subsets get half their oracle utility.
pub fn target_utility(labels: &TableLabels, label: &SubsetLabel) -> f64 {
    if labels.is_anchor(&label.columns) {
        1.0
    } else {
        0.5 * verdict_utility(label.verdict, label.columns.len())
    }
}

fn identity(w: usize) -> Vec<usize> {
    (0..w).collect()
}

/// Per-batch loss: BCE of the set score against utility plus cross-entropy
/// of the chart type over accepted subsets.
fn batch_step(model: &mut RecModel, adam: &mut Adam, batch: &[&Sample]) -> Result<f64> {
    let b = batch.len();
    let len = batch[0].seq.len();
    let mut g = Graph::new();
    let mut inputs = HashMap::new();
    let xs: Vec<NodeId> = (0..len)
        .map(|t| {
            let name = format!("x{t}");
            let rows: Vec<Vec<f64>> = batch.iter().map(|s| model.prepare(&s.seq[t]).to_vec()).collect();
            inputs.insert(name.clone(), Tensor::from_rows(&rows).expect("rectangular"));
            g.input(name)
        })
        .collect();
    let nodes = model.build(&mut g, &xs, b);

    let util: Vec<f64> = batch.iter().map(|s| s.utility).collect();
    let t = g.constant(Tensor::matrix(b, 1, util.clone())?);
    let not_t = g.constant(Tensor::matrix(b, 1, util.iter().map(|u| 1.0 - u).collect())?);
    let ls = g.log_sigmoid(nodes.set_score);
    let neg = g.scale(nodes.set_score, -1.0);
    let lns = g.log_sigmoid(neg);
    let pos_term = g.mul(ls, t);
    let neg_term = g.mul(lns, not_t);
    let both = g.add(pos_term, neg_term);
    let bce = g.sum_all(both);
    let mut loss = g.scale(bce, -1.0 / b as f64);

    let accepted = batch.iter().filter(|s| s.chart.is_some()).count();
    if accepted > 0 {
        let mut onehot = vec![0.0; b * CHART_CLASSES];
        for (i, s) in batch.iter().enumerate() {
            if let Some(c) = s.chart {
                onehot[i * CHART_CLASSES + c.index()] = 1.0;
            }
        }
        let oh = g.constant(Tensor::matrix(b, CHART_CLASSES, onehot)?);
        let lsm = g.log_softmax(nodes.logits);
        let picked = g.mul(lsm, oh);
        let ce = g.sum_all(picked);
        let ce = g.scale(ce, -1.0 / accepted as f64);
        loss = g.add(loss, ce);
    }

    g.forward(&inputs)?;
    let value = g.value(loss).expect("forwarded").values()[0];
    if !value.is_finite() {
        return Err(Error::NonFiniteValue("recommender loss".into()));
    }
    let mut grads = g.backward(&Tensor::scalar(1.0)?)?;
    let gs: Vec<Tensor> = nodes
        .params
        .iter()
        .map(|&id| grads.take(id).expect("parameter gradient"))
        .collect();
    let refs: Vec<&Tensor> = gs.iter().collect();
    adam.step(model.params_mut(), &refs);
    Ok(value)
}

/// Split table indices into (train, held-out), seeded.
pub fn split_tables(count: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let held = ((count as f64) * holdout_fraction).round() as usize;
    let held = held.min(count.saturating_sub(1));
    let train = idx.split_off(held);
    let mut heldout = idx;
    let mut train = train;
    train.sort_unstable();
    heldout.sort_unstable();
    (train, heldout)
}

/// Train the recommender on a labeled corpus.
pub fn train_rec(
    corpus: &[(DataTable, TableLabels)],
    config: RecConfig,
    hyper: &RecTrainConfig,
) -> Result<TrainedRec> {
    if corpus.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(0.0..1.0).contains(&hyper.holdout_fraction) || hyper.batch_size == 0 {
        return Err(Error::BadParameters("holdout fraction or batch size".into()));
    }
    if corpus.len() < SMALL_CORPUS {
        warn!("training recommender on only {} tables", corpus.len());
    }
    let (train_idx, held_idx) = split_tables(corpus.len(), hyper.holdout_fraction, hyper.seed);
    let mut model = RecModel::init(config)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: hyper.learning_rate,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let fixed: Vec<Vec<Sample>> = if hyper.shuffle_columns {
        Vec::new()
    } else {
        train_idx
            .iter()
            .map(|&i| table_samples(&corpus[i].0, &corpus[i].1, &identity(corpus[i].0.width())))
            .collect()
    };
    let mut loss_trace = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let fresh: Vec<Vec<Sample>>;
        let samples: &[Vec<Sample>] = if hyper.shuffle_columns {
            fresh = train_idx
                .iter()
                .map(|&i| {
                    let mut order = identity(corpus[i].0.width());
                    order.shuffle(&mut rng);
                    table_samples(&corpus[i].0, &corpus[i].1, &order)
                })
                .collect();
            &fresh
        } else {
            &fixed
        };
        let mut by_len: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
        for s in samples.iter().flatten() {
            by_len.entry(s.seq.len()).or_default().push(s);
        }
        let mut batches: Vec<Vec<&Sample>> = Vec::new();
        for group in by_len.values_mut() {
            group.shuffle(&mut rng);
            batches.extend(group.chunks(hyper.batch_size).map(|c| c.to_vec()));
        }
        batches.shuffle(&mut rng);
        let (mut total, mut weight) = (0.0, 0.0);
        for batch in &batches {
            let l = batch_step(&mut model, &mut adam, batch)
                .map_err(|_| Error::DivergedLoss { epoch })?;
            total += l * batch.len() as f64;
            weight += batch.len() as f64;
        }
        let mean = total / weight.max(1.0);
        if !mean.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        loss_trace.push(mean);
        if (epoch + 1) % (hyper.epochs / 10).max(1) == 0 {
            log::info!("recommender epoch {}/{} loss {mean:.5}", epoch + 1, hyper.epochs);
        }
    }
    model.trained = true;
    let held: Vec<(DataTable, TableLabels)> = held_idx.iter().map(|&i| corpus[i].clone()).collect();
    let evaluation = evaluate(&model, &held)?;
    Ok(TrainedRec {
        model,
        evaluation,
        loss_trace,
        train_tables: train_idx,
        heldout_tables: held_idx,
    })
}

/// Mann-Whitney estimate of P(score(pos) > score(neg)), ties counted half.
pub fn auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let p = positive.len() as f64;
    (rank_sum - p * (p + 1.0) / 2.0) / (p * negative.len() as f64)
}

/// Held-out metrics with tables in their stored column order.
pub fn evaluate(model: &RecModel, tables: &[(DataTable, TableLabels)]) -> Result<RecEvaluation> {
    let (mut correct, mut accepted) = (0usize, 0usize);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (table, labels) in tables {
        for s in table_samples(table, labels, &identity(table.width())) {
            let out = model.evaluate(&s.seq)?;
            match s.chart {
                Some(c) => {
                    accepted += 1;
                    if out.top_chart().0 == c {
                        correct += 1;
                    }
                    pos.push(out.set_score);
                }
                None => neg.push(out.set_score),
            }
        }
    }
    Ok(RecEvaluation {
        chart_accuracy: if accepted == 0 {
            f64::NAN
        } else {
            correct as f64 / accepted as f64
        },
        set_auc: auc(&pos, &neg),
        accepted,
        rejected: neg.len(),
    })
}

/// Oracle verdict for a subset of `table` given by column indices.
pub fn oracle_verdict(table: &DataTable, indices: &[usize]) -> Verdict {
    let profiles: Vec<_> = indices
        .iter()
        .map(|&i| super::oracle::ColumnProfile::of(table.column_at(i)))
        .collect();
    super::oracle::rule_oracle(&profiles)
}
