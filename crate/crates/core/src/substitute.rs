//! Model extraction: fit a projector that mimics observed placements.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datatable::Normalization;
use crate::diffcore::{train, Activation, AdamConfig, Loss, MlpSpec, Tensor, TrainConfig};
use crate::error::{Error, Result};
use crate::paradr::{distance, BBox, Point, ProjectionOracle, Projector, ProjectorMeta, Role};

pub const MIN_OBSERVATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TrainingData,
    Queried,
}

/// Paired raw-unit inputs and the coordinates the target produced for them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub inputs: Tensor,
    pub outputs: Tensor,
    pub provenance: Provenance,
}

impl ObservationSet {
    pub fn new(inputs: Tensor, outputs: Tensor, provenance: Provenance) -> Result<Self> {
        if inputs.rows() != outputs.rows() {
            return Err(Error::ShapeMismatch("observation row counts differ".into()));
        }
        if outputs.cols() != 2 {
            return Err(Error::WidthMismatch {
                expected: 2,
                found: outputs.cols(),
            });
        }
        if inputs.rows() < inputs.cols() + 1 {
            log::warn!(
                "{} observations for {} attributes; at least d+1 recommended",
                inputs.rows(),
                inputs.cols()
            );
        }
        Ok(Self {
            inputs,
            outputs,
            provenance,
        })
    }

    /// Observe `target` on raw-unit rows.
    pub fn observe(target: &Projector, inputs: Tensor, provenance: Provenance) -> Result<Self> {
        let outputs = target.project(&inputs)?;
        Self::new(inputs, outputs, provenance)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.inputs.cols()
    }

    pub fn output_points(&self) -> Vec<Point> {
        (0..self.len())
            .map(|i| [self.outputs.get(i, 0), self.outputs.get(i, 1)])
            .collect()
    }

    /// Concatenate rows; provenance is queried unless both are training data.
    pub fn merged(&self, other: &ObservationSet) -> Result<Self> {
        if self.width() != other.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                found: other.width(),
            });
        }
        let stack = |a: &Tensor, b: &Tensor| {
            let mut v = a.values().to_vec();
            v.extend_from_slice(b.values());
            Tensor::matrix(a.rows() + b.rows(), a.cols(), v)
        };
        let provenance = if self.provenance == Provenance::TrainingData && other.provenance == Provenance::TrainingData {
            Provenance::TrainingData
        } else {
            Provenance::Queried
        };
        Self::new(
            stack(&self.inputs, &other.inputs)?,
            stack(&self.outputs, &other.outputs)?,
            provenance,
        )
    }

    /// Header `a0..a{d-1},x,y`; one observation per row.
    pub fn to_csv_string(&self) -> String {
        let d = self.width();
        let mut s: Vec<String> = (0..d).map(|j| format!("a{j}")).collect();
        s.push("x".into());
        s.push("y".into());
        let mut out = s.join(",") + "\n";
        for i in 0..self.len() {
            let mut cells: Vec<String> = self.inputs.row_slice(i).iter().map(f64::to_string).collect();
            cells.extend(self.outputs.row_slice(i).iter().map(f64::to_string));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, provenance: Provenance) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let width = reader.headers()?.len();
        if width < 3 {
            return Err(Error::ShapeMismatch("need at least one input and two output columns".into()));
        }
        let (mut inputs, mut outputs, mut rows) = (Vec::new(), Vec::new(), 0usize);
        for record in reader.records() {
            let record = record?;
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::NonFiniteValue(format!("row {rows}: {cell:?}")))?;
                if j < width - 2 {
                    inputs.push(v);
                } else {
                    outputs.push(v);
                }
            }
            rows += 1;
        }
        Self::new(
            Tensor::matrix(rows, width - 2, inputs)?,
            Tensor::matrix(rows, 2, outputs)?,
            provenance,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstituteConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SubstituteConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Three 50-unit ReLU hidden layers.
pub fn default_substitute_spec(d: usize, seed: u64) -> MlpSpec {
    MlpSpec {
        widths: vec![d, 50, 50, 50, 2],
        activation: Activation::Relu,
        seed,
    }
}

/// Positional error statistics divided by a reference bbox diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
    pub diagonal: f64,
    pub probes: usize,
}

#[derive(Debug, Clone)]
pub struct FittedSubstitute {
    pub projector: Projector,
    /// Held-out error relative to the diagonal of all observed outputs.
    pub fidelity: Fidelity,
    pub heldout: Vec<usize>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
}

fn rows_of(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let mut v = Vec::with_capacity(idx.len() * t.cols());
    for &i in idx {
        v.extend_from_slice(t.row_slice(i));
    }
    Tensor::matrix(idx.len(), t.cols(), v)
}

/// Fit `spec` to `obs` under the mean per-instance Euclidean distance.
///
/// Inputs are normalized with `norm`, which becomes part of the returned
/// projector so it accepts the same raw rows as the target.
pub fn fit_substitute(
    obs: &ObservationSet,
    spec: &MlpSpec,
    norm: &Normalization,
    config: &SubstituteConfig,
) -> Result<FittedSubstitute> {
    spec.validate()?;
    if obs.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations(obs.len()));
    }
    if spec.output_width() != 2 {
        return Err(Error::InvalidSpec("substitute output width must be 2".into()));
    }
    if spec.input_width() != obs.width() || norm.width() != obs.width() {
        return Err(Error::WidthMismatch {
            expected: obs.width(),
            found: spec.input_width(),
        });
    }
    let x = norm.normalize(&obs.inputs)?;
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_hold = ((obs.len() as f64) * config.holdout_fraction.clamp(0.0, 0.9)).round() as usize;
    let (heldout, fit_rows) = order.split_at(n_hold);
    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        adam: AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    };
    let trained = train(
        spec,
        Loss::MeanDistance,
        &rows_of(&x, fit_rows)?,
        &rows_of(&obs.outputs, fit_rows)?,
        &train_cfg,
    )?;
    let meta = ProjectorMeta {
        role: Role::Substitute,
        attributes: (0..obs.width()).map(|j| format!("a{j}")).collect(),
        normalization: norm.clone(),
        k: 0,
        a: 0.0,
        b: 0.0,
        seed: config.seed,
    };
    let projector = Projector::new(trained.mlp, meta)?;
    let diagonal = BBox::of(&obs.output_points()).map(|b| b.diagonal()).unwrap_or(0.0);
    let probe = if heldout.is_empty() { fit_rows } else { heldout };
    let predicted = projector.project_normalized(&rows_of(&x, probe)?)?;
    let errors: Vec<f64> = probe
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            distance(
                [predicted.get(r, 0), predicted.get(r, 1)],
                [obs.outputs.get(i, 0), obs.outputs.get(i, 1)],
            )
        })
        .collect();
    Ok(FittedSubstitute {
        projector,
        fidelity: summarize(errors, diagonal),
        heldout: heldout.to_vec(),
        initial_loss: trained.initial_loss,
        final_loss: trained.final_loss,
        loss_trace: trained.loss_trace,
    })
}

fn summarize(mut errors: Vec<f64>, diagonal: f64) -> Fidelity {
    let scale = if diagonal > 0.0 { diagonal } else { 1.0 };
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let mean = errors.iter().sum::<f64>() / n.max(1) as f64;
    let p95 = if n == 0 {
        0.0
    } else {
        errors[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
    };
    Fidelity {
        mean: mean / scale,
        max: errors.last().copied().unwrap_or(0.0) / scale,
        p95: p95 / scale,
        diagonal,
        probes: n,
    }
}

/// Compare two oracles on normalized `probe` rows, scaled by `diagonal`.
pub fn fidelity_with_diagonal(
    sub: &dyn ProjectionOracle,
    target: &dyn ProjectionOracle,
    probe: &Tensor,
    diagonal: f64,
) -> Result<Fidelity> {
    for w in [sub.input_width(), target.input_width()] {
        if w != probe.cols() {
            return Err(Error::WidthMismatch {
                expected: w,
                found: probe.cols(),
            });
        }
    }
    let mut errors = Vec::with_capacity(probe.rows());
    for i in 0..probe.rows() {
        let row = probe.row_slice(i);
        errors.push(distance(sub.query(row)?, target.query(row)?));
    }
    Ok(summarize(errors, diagonal))
}

/// Compare two oracles on normalized `probe` rows; errors are divided by
/// the diagonal of the target's placements of the probe rows.
pub fn fidelity(sub: &dyn ProjectionOracle, target: &dyn ProjectionOracle, probe: &Tensor) -> Result<Fidelity> {
    if target.input_width() != probe.cols() {
        return Err(Error::WidthMismatch {
            expected: target.input_width(),
            found: probe.cols(),
        });
    }
    let placed: Vec<Point> = (0..probe.rows())
        .map(|i| target.query(probe.row_slice(i)))
        .collect::<Result<_>>()?;
    let diagonal = BBox::of(&placed).map(|b| b.diagonal()).unwrap_or(0.0);
    fidelity_with_diagonal(sub, target, probe, diagonal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paradr::FnOracle;

    fn linear_target() -> (ObservationSet, [[f64; 3]; 2]) {
        let w = [[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        let mut rows = Vec::new();
        for i in 0..60 {
            let t = i as f64;
            rows.push(vec![(t * 0.37).sin(), (t * 0.91).cos(), ((t * 1.3).sin() * 2.0)]);
        }
        let inputs = Tensor::from_rows(&rows).unwrap();
        let out: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| w.iter().map(|wr| wr.iter().zip(r).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let outputs = Tensor::from_rows(&out).unwrap();
        (ObservationSet::new(inputs, outputs, Provenance::Queried).unwrap(), w)
    }

    #[test]
    fn too_few_observations() {
        let obs = ObservationSet::new(Tensor::zeros(5, 2), Tensor::zeros(5, 2), Provenance::Queried).unwrap();
        let spec = MlpSpec::new(vec![2, 2], Activation::Identity, 0).unwrap();
        let err = fit_substitute(&obs, &spec, &Normalization::identity(2), &SubstituteConfig::default());
        assert!(matches!(err, Err(Error::TooFewObservations(5))));
    }

    #[test]
    fn identical_oracles_have_zero_error() {
        let f = FnOracle::new(2, |r: &[f64]| Ok([r[0] * 2.0, r[1]]));
        let probe = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let s = fidelity(&f, &f, &probe).unwrap();
        assert_eq!((s.mean, s.max, s.p95), (0.0, 0.0, 0.0));
    }

    #[test]
    fn translated_oracle_error_is_offset_over_diagonal() {
        let t = FnOracle::new(2, |r: &[f64]| Ok([r[0], r[1]]));
        let s = FnOracle::new(2, |r: &[f64]| Ok([r[0] + 3.0, r[1] + 4.0]));
        let probe = Tensor::from_rows(&[vec![0.0, 0.0], vec![6.0, 8.0], vec![1.0, 1.0]]).unwrap();
        let f = fidelity(&s, &t, &probe).unwrap();
        assert!((f.mean - 5.0 / 10.0).abs() < 1e-12);
        // doubling both leaves the normalized figure unchanged
        let t2 = FnOracle::new(2, |r: &[f64]| Ok([2.0 * r[0], 2.0 * r[1]]));
        let s2 = FnOracle::new(2, |r: &[f64]| Ok([2.0 * (r[0] + 3.0), 2.0 * (r[1] + 4.0)]));
        let f2 = fidelity(&s2, &t2, &probe).unwrap();
        assert!((f2.mean - f.mean).abs() < 1e-12);
    }

    /// Normal-equation least squares with an intercept column.
    fn least_squares(x: &Tensor, y: &Tensor) -> Vec<Vec<f64>> {
        let d = x.cols() + 1;
        let aug = |i: usize, j: usize| if j < d - 1 { x.get(i, j) } else { 1.0 };
        (0..y.cols())
            .map(|o| {
                let mut m = vec![vec![0.0; d + 1]; d];
                for i in 0..x.rows() {
                    for r in 0..d {
                        for c in 0..d {
                            m[r][c] += aug(i, r) * aug(i, c);
                        }
                        m[r][d] += aug(i, r) * y.get(i, o);
                    }
                }
                for p in 0..d {
                    let piv = (p..d).max_by(|&a, &b| m[a][p].abs().total_cmp(&m[b][p].abs())).unwrap();
                    m.swap(p, piv);
                    for r in 0..d {
                        if r != p {
                            let f = m[r][p] / m[p][p];
                            for c in p..=d {
                                m[r][c] -= f * m[p][c];
                            }
                        }
                    }
                }
                (0..d).map(|r| m[r][d] / m[r][r]).collect()
            })
            .collect()
    }

    #[test]
    fn recovers_linear_map() {
        let (obs, _) = linear_target();
        let w = least_squares(&obs.inputs, &obs.outputs);
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity, 1).unwrap();
        let cfg = SubstituteConfig {
            epochs: 3000,
            learning_rate: 1e-2,
            batch_size: 60,
            ..Default::default()
        };
        let fit = fit_substitute(&obs, &spec, &Normalization::identity(3), &cfg).unwrap();
        let layer = &fit.projector.mlp().layers()[0];
        for (o, wr) in w.iter().enumerate() {
            for (i, &c) in wr[..3].iter().enumerate() {
                assert!((layer.weight.get(i, o) - c).abs() < 1e-3, "w[{o}][{i}]");
            }
            assert!((layer.bias.values()[o] - wr[3]).abs() < 1e-3);
        }
        assert_eq!(fit.projector.role(), Role::Substitute);
    }

    #[test]
    fn csv_roundtrip() {
        let (obs, _) = linear_target();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        obs.save_csv(&p).unwrap();
        let back = ObservationSet::load_csv(&p, Provenance::Queried).unwrap();
        assert_eq!(back, obs);
    }
}
