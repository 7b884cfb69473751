use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{ColumnFeatures, COLUMN_INDEX, FEATURE_COUNT};
use super::oracle::ChartType;
use crate::diffcore::{Dense, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

pub const CHART_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecConfig {
    /// Recurrent state width per direction.
    pub hidden: usize,
    /// Width of the chart-type head's hidden layer.
    pub type_hidden: usize,
    /// Feed zero in place of `column_idx_normed`.
    pub ablate_column_index: bool,
    pub seed: u64,
}

impl Default for RecConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            type_hidden: 32,
            ablate_column_index: false,
            seed: 0,
        }
    }
}

/// Minimal gated unit:
/// `f = σ(x·Wf + h·Uf + bf)`, `c = tanh(x·Wh + (f⊙h)·Uh + bh)`, `h' = h + f⊙(c − h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MguCell {
    pub wf: Tensor,
    pub uf: Tensor,
    pub bf: Tensor,
    pub wh: Tensor,
    pub uh: Tensor,
    pub bh: Tensor,
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect())
        .expect("finite init")
}

impl MguCell {
    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            wf: uniform(input, hidden, rng),
            uf: uniform(hidden, hidden, rng),
            bf: Tensor::zeros(1, hidden),
            wh: uniform(input, hidden, rng),
            uh: uniform(hidden, hidden, rng),
            bh: Tensor::zeros(1, hidden),
        }
    }

    fn tensors(&self) -> [&Tensor; 6] {
        [&self.wf, &self.uf, &self.bf, &self.wh, &self.uh, &self.bh]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.wf,
            &mut self.uf,
            &mut self.bf,
            &mut self.wh,
            &mut self.uh,
            &mut self.bh,
        ]
    }

    fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = affine2(x, &self.wf, h, &self.uf, &self.bf)
            .into_iter()
            .map(crate::diffcore::graph::sigmoid)
            .collect();
        let fh: Vec<f64> = f.iter().zip(h).map(|(a, b)| a * b).collect();
        let c = affine2(x, &self.wh, &fh, &self.uh, &self.bh);
        h.iter()
            .zip(f.iter().zip(c))
            .map(|(&h, (&f, c))| h + f * (c.tanh() - h))
            .collect()
    }
}

/// `x·W + h·U + b` for row vectors.
fn affine2(x: &[f64], w: &Tensor, h: &[f64], u: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut out = b.values().to_vec();
    accumulate(&mut out, x, w);
    accumulate(&mut out, h, u);
    out
}

fn accumulate(out: &mut [f64], x: &[f64], w: &Tensor) {
    let c = w.cols();
    let wv = w.values();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            let row = &wv[i * c..(i + 1) * c];
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += xi * wij;
            }
        }
    }
}

fn dense(x: &[f64], layer: &Dense) -> Vec<f64> {
    let mut out = layer.bias.values().to_vec();
    accumulate(&mut out, x, &layer.weight);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiEncoder {
    pub forward: MguCell,
    pub backward: MguCell,
}

impl BiEncoder {
    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            forward: MguCell::init(input, hidden, rng),
            backward: MguCell::init(input, hidden, rng),
        }
    }

    /// Final forward state followed by final backward state.
    fn encode(&self, seq: &[[f64; FEATURE_COUNT]]) -> Vec<f64> {
        let hidden = self.forward.bf.cols();
        let mut hf = vec![0.0; hidden];
        for x in seq {
            hf = self.forward.step(x, &hf);
        }
        let mut hb = vec![0.0; hidden];
        for x in seq.iter().rev() {
            hb = self.backward.step(x, &hb);
        }
        hf.extend(hb);
        hf
    }
}

/// Column-set scorer plus chart-type classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecModel {
    pub config: RecConfig,
    pub set_encoder: BiEncoder,
    /// `2·hidden → 1`
    pub set_head: Dense,
    pub type_encoder: BiEncoder,
    /// `2·hidden → type_hidden`, ReLU
    pub type_hidden: Dense,
    /// `type_hidden → 5`
    pub type_out: Dense,
    /// Set once weights come from training or a saved model.
    pub trained: bool,
}

/// Outputs of both heads for one column sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutputs {
    pub set_score: f64,
    pub logits: [f64; CHART_CLASSES],
    pub probabilities: [f64; CHART_CLASSES],
}

impl HeadOutputs {
    pub fn top_chart(&self) -> (ChartType, f64) {
        let mut best = 0;
        for k in 1..CHART_CLASSES {
            if self.probabilities[k] > self.probabilities[best] {
                best = k;
            }
        }
        (ChartType::from_index(best), self.probabilities[best])
    }
}

/// Graph handles for a batch run through both heads.
pub struct RecNodes {
    /// `B × 1`
    pub set_score: NodeId,
    /// `B × 5`
    pub logits: NodeId,
    /// Parameter leaves in [`RecModel::params`] order.
    pub params: Vec<NodeId>,
}

fn dense_layer(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Dense {
    Dense {
        weight: uniform(input, output, rng),
        bias: Tensor::zeros(1, output),
    }
}

impl RecModel {
    /// Seeded random initialization; `trained` is false.
    pub fn init(config: RecConfig) -> Result<Self> {
        if config.hidden == 0 || config.type_hidden == 0 {
            return Err(Error::InvalidSpec("recommender widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h2 = 2 * config.hidden;
        Ok(Self {
            config,
            set_encoder: BiEncoder::init(FEATURE_COUNT, config.hidden, &mut rng),
            set_head: dense_layer(h2, 1, &mut rng),
            type_encoder: BiEncoder::init(FEATURE_COUNT, config.hidden, &mut rng),
            type_hidden: dense_layer(h2, config.type_hidden, &mut rng),
            type_out: dense_layer(config.type_hidden, CHART_CLASSES, &mut rng),
            trained: false,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = Vec::new();
        v.extend(self.set_encoder.forward.tensors());
        v.extend(self.set_encoder.backward.tensors());
        v.extend([&self.set_head.weight, &self.set_head.bias]);
        v.extend(self.type_encoder.forward.tensors());
        v.extend(self.type_encoder.backward.tensors());
        v.extend([&self.type_hidden.weight, &self.type_hidden.bias]);
        v.extend([&self.type_out.weight, &self.type_out.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        v.extend(self.set_encoder.forward.tensors_mut());
        v.extend(self.set_encoder.backward.tensors_mut());
        v.extend([&mut self.set_head.weight, &mut self.set_head.bias]);
        v.extend(self.type_encoder.forward.tensors_mut());
        v.extend(self.type_encoder.backward.tensors_mut());
        v.extend([&mut self.type_hidden.weight, &mut self.type_hidden.bias]);
        v.extend([&mut self.type_out.weight, &mut self.type_out.bias]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Set every parameter to zero.
    pub fn zero_parameters(&mut self) {
        for t in self.params_mut() {
            *t = Tensor::zeros(t.rows(), t.cols());
        }
    }

    /// Feature vector as the network sees it.
    pub fn prepare(&self, f: &ColumnFeatures) -> [f64; FEATURE_COUNT] {
        let mut v = f.0;
        if self.config.ablate_column_index {
            v[COLUMN_INDEX] = 0.0;
        }
        v
    }

    /// Graph-free evaluation of one column sequence.
    pub fn evaluate(&self, seq: &[ColumnFeatures]) -> Result<HeadOutputs> {
        if seq.is_empty() {
            return Err(Error::NotEnoughColumns);
        }
        let xs: Vec<[f64; FEATURE_COUNT]> = seq.iter().map(|f| self.prepare(f)).collect();
        let set_score = dense(&self.set_encoder.encode(&xs), &self.set_head)[0];
        let hidden: Vec<f64> = dense(&self.type_encoder.encode(&xs), &self.type_hidden)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let out = dense(&hidden, &self.type_out);
        let mut logits = [0.0; CHART_CLASSES];
        logits.copy_from_slice(&out);
        let lse = crate::diffcore::graph::log_sum_exp(&logits);
        let mut probabilities = [0.0; CHART_CLASSES];
        for k in 0..CHART_CLASSES {
            probabilities[k] = (logits[k] - lse).exp();
        }
        if !set_score.is_finite() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("recommender output".into()));
        }
        Ok(HeadOutputs {
            set_score,
            logits,
            probabilities,
        })
    }

    /// Place both heads into `g`; `xs[t]` is the `B × F` input at step `t`.
    pub fn build(&self, g: &mut Graph, xs: &[NodeId], batch: usize) -> RecNodes {
        const CELL: [&str; 6] = ["wf", "uf", "bf", "wh", "uh", "bh"];
        let mut names = Vec::new();
        for prefix in ["set_f_", "set_b_"] {
            names.extend(CELL.iter().map(|n| format!("{prefix}{n}")));
        }
        names.extend(["set_head_w".to_string(), "set_head_b".to_string()]);
        for prefix in ["type_f_", "type_b_"] {
            names.extend(CELL.iter().map(|n| format!("{prefix}{n}")));
        }
        names.extend(["type_hidden_w", "type_hidden_b", "type_out_w", "type_out_b"].map(String::from));
        let params: Vec<NodeId> = names
            .into_iter()
            .zip(self.params())
            .map(|(name, t)| g.param(name, t.clone()))
            .collect();
        let cell = |at: usize| -> [NodeId; 6] { std::array::from_fn(|k| params[at + k]) };
        let (sf, sb) = (cell(0), cell(6));
        let sh = [params[12], params[13]];
        let (tf, tb) = (cell(14), cell(20));
        let th = [params[26], params[27]];
        let to = [params[28], params[29]];
        let hidden = self.config.hidden;
        let mask = if self.config.ablate_column_index {
            let mut m = vec![1.0; FEATURE_COUNT];
            m[COLUMN_INDEX] = 0.0;
            Some(g.constant(Tensor::matrix(1, FEATURE_COUNT, m).expect("mask")))
        } else {
            None
        };
        let xs: Vec<NodeId> = xs
            .iter()
            .map(|&x| match mask {
                Some(m) => {
                    let ones = g.constant(Tensor::filled(batch, 1, 1.0));
                    let full = g.matmul(ones, m);
                    g.mul(x, full)
                }
                None => x,
            })
            .collect();

        let run = |g: &mut Graph, cell: &[NodeId; 6], order: &mut dyn Iterator<Item = NodeId>| {
            let mut h = g.constant(Tensor::zeros(batch, hidden));
            for x in order {
                let a = g.matmul(x, cell[0]);
                let b = g.matmul(h, cell[1]);
                let z = g.add(a, b);
                let z = g.add_row(z, cell[2]);
                let f = g.sigmoid(z);
                let fh = g.mul(f, h);
                let a = g.matmul(x, cell[3]);
                let b = g.matmul(fh, cell[4]);
                let z = g.add(a, b);
                let z = g.add_row(z, cell[5]);
                let c = g.tanh(z);
                let diff = g.sub(c, h);
                let step = g.mul(f, diff);
                h = g.add(h, step);
            }
            h
        };
        let encode = |g: &mut Graph, fwd: &[NodeId; 6], bwd: &[NodeId; 6]| {
            let hf = run(g, fwd, &mut xs.iter().copied());
            let hb = run(g, bwd, &mut xs.iter().rev().copied());
            g.concat_cols(hf, hb)
        };
        let es = encode(g, &sf, &sb);
        let s = g.matmul(es, sh[0]);
        let set_score = g.add_row(s, sh[1]);
        let et = encode(g, &tf, &tb);
        let z = g.matmul(et, th[0]);
        let z = g.add_row(z, th[1]);
        let z = g.relu(z);
        let z = g.matmul(z, to[0]);
        let logits = g.add_row(z, to[1]);
        RecNodes {
            set_score,
            logits,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: RecModel = serde_json::from_str(&text)?;
        m.trained = true;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn seq(n: usize, seed: u64) -> Vec<ColumnFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| ColumnFeatures(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
            .collect()
    }

    fn graph_outputs(m: &RecModel, s: &[ColumnFeatures]) -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let xs: Vec<NodeId> = (0..s.len()).map(|t| g.input(format!("x{t}"))).collect();
        let nodes = m.build(&mut g, &xs, 1);
        let both = g.concat_cols(nodes.set_score, nodes.logits);
        let inputs: HashMap<String, Tensor> = s
            .iter()
            .enumerate()
            .map(|(t, f)| (format!("x{t}"), Tensor::row(f.0.to_vec()).unwrap()))
            .collect();
        let _ = both;
        let out = g.forward(&inputs).unwrap();
        (out.values()[0], out.values()[1..].to_vec())
    }

    #[test]
    fn graph_matches_direct_evaluation() {
        for ablate in [false, true] {
            let m = RecModel::init(RecConfig {
                ablate_column_index: ablate,
                seed: 3,
                ..Default::default()
            })
            .unwrap();
            for len in 1..=3 {
                let s = seq(len, len as u64);
                let direct = m.evaluate(&s).unwrap();
                let (score, logits) = graph_outputs(&m, &s);
                assert!((score - direct.set_score).abs() < 1e-12);
                for k in 0..CHART_CLASSES {
                    assert!((logits[k] - direct.logits[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = RecModel::init(RecConfig::default()).unwrap();
        let out = m.evaluate(&seq(3, 9)).unwrap();
        let total: f64 = out.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(out.probabilities.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn ablation_ignores_column_index() {
        let m = RecModel::init(RecConfig {
            ablate_column_index: true,
            ..Default::default()
        })
        .unwrap();
        let mut s = seq(2, 4);
        let a = m.evaluate(&s).unwrap();
        s[0].0[COLUMN_INDEX] = 0.77;
        assert_eq!(a, m.evaluate(&s).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let m = RecModel::init(RecConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rec.json");
        m.save(&p).unwrap();
        let back = RecModel::load(&p).unwrap();
        assert!(back.trained);
        assert_eq!(back.params(), m.params());
    }
}
