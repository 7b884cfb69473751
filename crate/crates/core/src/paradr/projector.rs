use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, Point};
use super::neighbors::NeighborGraph;
use crate::datatable::{Matrix, Normalization};
use crate::diffcore::io::{self as mlp_io, HeaderSidecar};
use crate::diffcore::{Activation, Adam, AdamConfig, Graph, Mlp, MlpSpec, Tensor};
use crate::error::{Error, Result};

/// Low-dimensional similarity curve `q = 1/(1 + a·d^(2b))`, min_dist ≈ 0.1.
pub const CURVE_A: f64 = 1.577;
pub const CURVE_B: f64 = 0.895;
pub const DEFAULT_K: usize = 15;
pub const NEGATIVE_RATE: usize = 5;
/// Floor on squared embedding distances inside the loss.
const LOSS_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Substitute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorConfig {
    pub epochs: usize,
    /// Positive edges per minibatch.
    pub batch_size: usize,
    pub negative_rate: usize,
    pub learning_rate: f64,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 512,
            negative_rate: NEGATIVE_RATE,
            learning_rate: 2e-3,
            a: CURVE_A,
            b: CURVE_B,
            seed: 0,
        }
    }
}

/// Stored next to the parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorMeta {
    pub role: Role,
    pub attributes: Vec<String>,
    pub normalization: Normalization,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    header: HeaderSidecar,
    projector: ProjectorMeta,
}

/// Black-box access to a 2D projection of normalized rows.
pub trait ProjectionOracle {
    fn input_width(&self) -> usize;
    fn query(&self, row: &[f64]) -> Result<Point>;
}

/// Adapts a closure into a [`ProjectionOracle`].
pub struct FnOracle<F> {
    width: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<Point>> FnOracle<F> {
    pub fn new(width: usize, f: F) -> Self {
        Self { width, f }
    }
}

impl<F: Fn(&[f64]) -> Result<Point>> ProjectionOracle for FnOracle<F> {
    fn input_width(&self) -> usize {
        self.width
    }

    fn query(&self, row: &[f64]) -> Result<Point> {
        if row.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                found: row.len(),
            });
        }
        (self.f)(row)
    }
}

/// Trained mapping from `d` attributes to two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    mlp: Mlp,
    meta: ProjectorMeta,
}

impl Projector {
    pub fn new(mlp: Mlp, meta: ProjectorMeta) -> Result<Self> {
        if mlp.spec().output_width() != 2 {
            return Err(Error::InvalidSpec("projector output width must be 2".into()));
        }
        if meta.normalization.width() != mlp.spec().input_width() {
            return Err(Error::WidthMismatch {
                expected: mlp.spec().input_width(),
                found: meta.normalization.width(),
            });
        }
        Ok(Self { mlp, meta })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn meta(&self) -> &ProjectorMeta {
        &self.meta
    }

    pub fn role(&self) -> Role {
        self.meta.role
    }

    pub fn width(&self) -> usize {
        self.mlp.spec().input_width()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.meta.normalization
    }

    /// Project raw-unit rows.
    pub fn project(&self, raw: &Tensor) -> Result<Tensor> {
        let x = self.meta.normalization.normalize(raw)?;
        self.mlp.forward(&x)
    }

    pub fn project_row(&self, raw: &[f64]) -> Result<Point> {
        let x = self.meta.normalization.normalize_row(raw)?;
        self.project_normalized_row(&x)
    }

    pub fn project_normalized(&self, x: &Tensor) -> Result<Tensor> {
        self.mlp.forward(x)
    }

    pub fn project_normalized_row(&self, x: &[f64]) -> Result<Point> {
        let y = self.mlp.forward_row(x)?;
        Ok([y[0], y[1]])
    }

    /// Coordinates of `x` (normalized) and `∂ Σ seed·y / ∂x` for one row.
    pub fn gradient(&self, x: &[f64], seed: Point) -> Result<(Point, Vec<f64>)> {
        let xt = Tensor::row(x.to_vec())?;
        let (y, gx) = self.mlp.input_gradient(&xt, &Tensor::row(seed.to_vec())?)?;
        Ok(([y.values()[0], y.values()[1]], gx.into_values()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, mlp_io::encode(&self.mlp)).map_err(|e| Error::io(path, e))?;
        let side = Sidecar {
            header: mlp_io::sidecar(&self.mlp),
            projector: self.meta.clone(),
        };
        let side_path = mlp_io::sidecar_path(path);
        let text = serde_json::to_string_pretty(&side)?;
        fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mlp = mlp_io::decode(&bytes)?;
        let side_path = mlp_io::sidecar_path(path);
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        if side.header != mlp_io::sidecar(&mlp) {
            return Err(Error::BadModelFile("sidecar does not match parameters".into()));
        }
        Self::new(mlp, side.projector)
    }
}

impl ProjectionOracle for Projector {
    fn input_width(&self) -> usize {
        self.width()
    }

    fn query(&self, row: &[f64]) -> Result<Point> {
        self.project_normalized_row(row)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedProjector {
    pub projector: Projector,
    /// Training rows projected after the last update.
    pub embedding: Embedding,
    pub initial_loss: f64,
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
}

/// `13 → 100 → 100 → 100 → 2` with ReLU for width 13.
pub fn default_spec(d: usize, seed: u64) -> MlpSpec {
    MlpSpec {
        widths: vec![d, 100, 100, 100, 2],
        activation: Activation::Relu,
        seed,
    }
}

fn batch_loss_graph(
    g: &mut Graph,
    y: crate::diffcore::NodeId,
    pairs: &[(usize, usize)],
    negatives: &[(usize, usize)],
    a: f64,
    b: f64,
) -> crate::diffcore::NodeId {
    let curve = |g: &mut Graph, from: Vec<usize>, to: Vec<usize>| {
        let h = g.gather_rows(y, from);
        let t = g.gather_rows(y, to);
        let diff = g.sub(h, t);
        let sq = g.mul(diff, diff);
        let d2 = g.sum_rows(sq);
        let d2 = g.add_scalar(d2, LOSS_EPS);
        let pw = g.powf(d2, b);
        g.scale(pw, a)
    };
    // −log q = log(1 + a·d^2b)
    let apw = curve(g, pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect());
    let one_plus = g.add_scalar(apw, 1.0);
    let attract = g.log(one_plus);
    let attract = g.sum_all(attract);
    // −log(1 − q) = log(1 + a·d^2b) − log(a·d^2b)
    let npw = curve(
        g,
        negatives.iter().map(|p| p.0).collect(),
        negatives.iter().map(|p| p.1).collect(),
    );
    let one_plus = g.add_scalar(npw, 1.0);
    let l1 = g.log(one_plus);
    let l2 = g.log(npw);
    let repel = g.sub(l1, l2);
    let repel = g.sum_all(repel);
    let total = g.add(attract, repel);
    g.scale(total, 1.0 / pairs.len() as f64)
}

fn pair_terms(y: &Tensor, i: usize, j: usize, a: f64, b: f64) -> (f64, f64) {
    let d2 = (y.get(i, 0) - y.get(j, 0)).powi(2) + (y.get(i, 1) - y.get(j, 1)).powi(2) + LOSS_EPS;
    let apw = a * d2.powf(b);
    let attract = apw.ln_1p();
    (attract, attract - apw.ln())
}

/// Weighted cross-entropy over every edge with a fixed seeded negative set.
fn evaluation_loss(
    mlp: &Mlp,
    x: &Tensor,
    edges: &[(usize, usize, f64)],
    negatives: &[usize],
    rate: usize,
    a: f64,
    b: f64,
) -> Result<f64> {
    let y = mlp.forward(x)?;
    let mut total = 0.0;
    let mut weight = 0.0;
    for (e, &(i, j, w)) in edges.iter().enumerate() {
        let mut l = pair_terms(&y, i, j, a, b).0;
        for &k in &negatives[e * rate..(e + 1) * rate] {
            l += pair_terms(&y, i, k, a, b).1;
        }
        total += w * l;
        weight += w;
    }
    Ok(total / weight.max(f64::MIN_POSITIVE))
}

/// Fit an MLP so that its embedding of `data` preserves `graph`.
///
/// Each epoch keeps every undirected edge with probability equal to its
/// membership weight, orients it randomly and pairs it with
/// `negative_rate` uniformly drawn negatives.
pub fn train_projector(
    data: &Matrix,
    graph: &NeighborGraph,
    spec: &MlpSpec,
    config: &ProjectorConfig,
) -> Result<TrainedProjector> {
    spec.validate()?;
    let x = &data.data;
    let n = x.rows();
    if spec.input_width() != data.width() {
        return Err(Error::WidthMismatch {
            expected: spec.input_width(),
            found: data.width(),
        });
    }
    if spec.output_width() != 2 {
        return Err(Error::InvalidSpec("projector output width must be 2".into()));
    }
    if graph.len() != n {
        return Err(Error::ShapeMismatch("graph vs data rows".into()));
    }
    let edges = graph.edges();
    if edges.is_empty() {
        return Err(Error::DegenerateData);
    }
    let (a, b, rate) = (config.a, config.b, config.negative_rate.max(1));
    let mut mlp = Mlp::init(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eval_negatives: Vec<usize> = (0..edges.len() * rate).map(|_| rng.gen_range(0..n)).collect();
    let initial_loss = evaluation_loss(&mlp, x, &edges, &eval_negatives, rate, a, b)?;
    if !initial_loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: 0 });
    }
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(adam, mlp.params());
    let inputs = HashMap::from([("x".to_string(), x.clone())]);
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut sampled: Vec<(usize, usize)> = Vec::new();
        for &(i, j, w) in &edges {
            if rng.gen::<f64>() < w {
                sampled.push(if rng.gen::<bool>() { (i, j) } else { (j, i) });
            }
        }
        if sampled.is_empty() {
            let (i, j, _) = edges[rng.gen_range(0..edges.len())];
            sampled.push((i, j));
        }
        sampled.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in sampled.chunks(config.batch_size.max(1)) {
            let negatives: Vec<(usize, usize)> = chunk
                .iter()
                .flat_map(|&(i, _)| (0..rate).map(move |_| i))
                .map(|i| (i, rng.gen_range(0..n)))
                .collect();
            let mut g = Graph::new();
            let xin = g.input("x");
            let nodes = mlp.build(&mut g, xin, "");
            batch_loss_graph(&mut g, nodes.output, chunk, &negatives, a, b);
            let value = match g.forward(&inputs) {
                Ok(v) => v.values()[0],
                Err(Error::NonFiniteValue(_)) => return Err(Error::DivergedLoss { epoch }),
                Err(e) => return Err(e),
            };
            let grads = g.backward(&Tensor::scalar(1.0)?)?;
            let grad_refs: Vec<&Tensor> = nodes
                .params
                .iter()
                .flat_map(|(w, b)| [grads.get(*w).unwrap(), grads.get(*b).unwrap()])
                .collect();
            opt.step(mlp.params_mut(), &grad_refs);
            sum += value;
            batches += 1;
        }
        let mean = sum / batches as f64;
        if !mean.is_finite() || mlp.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss { epoch });
        }
        loss_trace.push(mean);
        if (epoch + 1) % (config.epochs / 10).max(1) == 0 {
            log::info!("projector epoch {}/{} loss {mean:.5}", epoch + 1, config.epochs);
        }
    }
    let final_loss = evaluation_loss(&mlp, x, &edges, &eval_negatives, rate, a, b)
        .map_err(|_| Error::DivergedLoss { epoch: config.epochs })?;
    if !final_loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: config.epochs });
    }
    let meta = ProjectorMeta {
        role: Role::Target,
        attributes: data.attributes.clone(),
        normalization: data.norm.clone(),
        k: graph.k(),
        a,
        b,
        seed: config.seed,
    };
    let projector = Projector::new(mlp, meta)?;
    let embedding = Embedding::from_tensor(&projector.project_normalized(x)?, None)?;
    Ok(TrainedProjector {
        projector,
        embedding,
        initial_loss,
        loss_trace,
        final_loss,
    })
}
