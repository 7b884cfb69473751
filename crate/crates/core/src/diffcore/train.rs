use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::mlp::{Mlp, MlpSpec};
use super::optim::{Adam, AdamConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Added under square roots so distances stay differentiable at zero.
pub const DISTANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean of squared element errors.
    MeanSquared,
    /// Mean per-row Euclidean distance between prediction and target.
    MeanDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub mlp: Mlp,
    /// Full-data loss before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Full-data loss after the last update.
    pub final_loss: f64,
}

/// Append the scalar loss of `pred` against input `target` to `g`.
pub fn loss_node(g: &mut Graph, loss: Loss, pred: NodeId, target: NodeId) -> NodeId {
    let diff = g.sub(pred, target);
    let sq = g.mul(diff, diff);
    match loss {
        Loss::MeanSquared => g.mean_all(sq),
        Loss::MeanDistance => {
            let d2 = g.sum_rows(sq);
            let d2 = g.add_scalar(d2, DISTANCE_EPS);
            let d = g.sqrt(d2);
            g.mean_all(d)
        }
    }
}

pub fn evaluate_loss(mlp: &Mlp, loss: Loss, x: &Tensor, y: &Tensor) -> Result<f64> {
    let pred = mlp.forward(x)?;
    if !pred.same_shape(y) {
        return Err(Error::ShapeMismatch("prediction vs target".into()));
    }
    Ok(match loss {
        Loss::MeanSquared => {
            pred.zip_map(y, |a, b| (a - b) * (a - b)).sum() / pred.len().max(1) as f64
        }
        Loss::MeanDistance => {
            let mut total = 0.0;
            for r in 0..pred.rows() {
                let d2: f64 = pred
                    .row_slice(r)
                    .iter()
                    .zip(y.row_slice(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                total += (d2 + DISTANCE_EPS).sqrt();
            }
            total / pred.rows().max(1) as f64
        }
    })
}

/// Supervised minibatch training from the seeded initialization of `spec`.
pub fn train(spec: &MlpSpec, loss: Loss, x: &Tensor, y: &Tensor, config: &TrainConfig) -> Result<Trained> {
    let mlp = Mlp::init(spec)?;
    train_from(mlp, loss, x, y, config)
}

/// Same as [`train`] but continuing from existing parameters.
pub fn train_from(mut mlp: Mlp, loss: Loss, x: &Tensor, y: &Tensor, config: &TrainConfig) -> Result<Trained> {
    let spec = mlp.spec().clone();
    if x.cols() != spec.input_width() {
        return Err(Error::WidthMismatch {
            expected: spec.input_width(),
            found: x.cols(),
        });
    }
    if y.cols() != spec.output_width() || y.rows() != x.rows() {
        return Err(Error::ShapeMismatch("targets do not match inputs".into()));
    }
    let n = x.rows();
    let initial_loss = evaluate_loss(&mlp, loss, x, y)?;
    if !initial_loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(config.adam, mlp.params());
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.max(1);
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let xb = gather(x, chunk);
            let yb = gather(y, chunk);
            let mut g = Graph::new();
            let xin = g.input("x");
            let yin = g.input("y");
            let nodes = mlp.build(&mut g, xin, "");
            loss_node(&mut g, loss, nodes.output, yin);
            let inputs = HashMap::from([("x".to_string(), xb), ("y".to_string(), yb)]);
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
        let mean = sum / batches.max(1) as f64;
        if !mean.is_finite() || mlp.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss { epoch });
        }
        loss_trace.push(mean);
        if (epoch + 1) % (config.epochs / 10).max(1) == 0 {
            log::info!("mlp epoch {}/{} loss {mean:.5}", epoch + 1, config.epochs);
        }
    }
    let final_loss = evaluate_loss(&mlp, loss, x, y)?;
    if !final_loss.is_finite() {
        return Err(Error::DivergedLoss {
            epoch: config.epochs,
        });
    }
    Ok(Trained {
        mlp,
        initial_loss,
        loss_trace,
        final_loss,
    })
}

pub(crate) fn gather(t: &Tensor, rows: &[usize]) -> Tensor {
    let c = t.cols();
    let mut out = Vec::with_capacity(rows.len() * c);
    for &r in rows {
        out.extend_from_slice(t.row_slice(r));
    }
    Tensor::from_parts(rows.len(), c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::mlp::Activation;

    fn line_data() -> (Tensor, Tensor) {
        let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        (
            Tensor::matrix(100, 1, xs).unwrap(),
            Tensor::matrix(100, 1, ys).unwrap(),
        )
    }

    /// Closed-form least squares slope and intercept for the same data.
    fn least_squares(x: &Tensor, y: &Tensor) -> (f64, f64) {
        let n = x.rows() as f64;
        let mx = x.sum() / n;
        let my = y.sum() / n;
        let sxy: f64 = x.values().iter().zip(y.values()).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.values().iter().map(|a| (a - mx) * (a - mx)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    }

    #[test]
    fn fits_a_line() {
        let (x, y) = line_data();
        let (slope, intercept) = least_squares(&x, &y);
        let oracle_mse: f64 = x
            .values()
            .iter()
            .zip(y.values())
            .map(|(a, b)| (slope * a + intercept - b).powi(2))
            .sum::<f64>()
            / 100.0;
        assert!(oracle_mse < 1e-20);

        let spec = MlpSpec::new(vec![1, 1], Activation::Identity, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 10,
            seed: 1,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
        };
        let trained = train(&spec, Loss::MeanSquared, &x, &y, &cfg).unwrap();
        assert!(trained.final_loss < 1e-3, "mse {}", trained.final_loss);
        assert!(trained.final_loss < trained.initial_loss);
        let w = trained.mlp.layers()[0].weight.values()[0];
        assert!((w - slope).abs() < 0.05);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (x, y) = line_data();
        let spec = MlpSpec::new(vec![1, 8, 1], Activation::Tanh, 11).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let trained = train(&spec, Loss::MeanSquared, &x, &y, &cfg).unwrap();
        assert_eq!(trained.mlp, Mlp::init(&spec).unwrap());
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (x, y) = line_data();
        let spec = MlpSpec::new(vec![1, 8, 1], Activation::Relu, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 7,
            seed: 2,
            ..Default::default()
        };
        let a = train(&spec, Loss::MeanSquared, &x, &y, &cfg).unwrap();
        let b = train(&spec, Loss::MeanSquared, &x, &y, &cfg).unwrap();
        let bits = |m: &Mlp| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.mlp), bits(&b.mlp));
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let x = Tensor::matrix(4, 1, vec![1e160, 2e160, 3e160, 4e160]).unwrap();
        let y = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..Default::default()
        };
        let err = train(&spec, Loss::MeanSquared, &x, &y, &cfg).unwrap_err();
        assert!(matches!(err, Error::DivergedLoss { .. }), "{err:?}");
    }
}
