use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{sigmoid, Graph, NodeId};
use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Tanh => 2,
            Activation::Identity => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Tanh,
            3 => Activation::Identity,
            t => return Err(Error::BadModelFile(format!("activation tag {t}"))),
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    fn node(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Tanh => g.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// Layer widths, hidden activation and initialization seed.
///
/// The output layer is always linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, seed: u64) -> Result<Self> {
        let spec = Self {
            widths,
            activation,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidSpec("at least two widths required".into()));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec("widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in × out`
    pub weight: Tensor,
    /// `1 × out`
    pub bias: Tensor,
}

/// A multilayer perceptron: spec plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Node handles created when an [`Mlp`] is placed into a [`Graph`].
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub output: NodeId,
    /// `(weight, bias)` per layer.
    pub params: Vec<(NodeId, NodeId)>,
}

impl Mlp {
    /// Uniform fan-in/fan-out initialization, biases zero.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let values = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Dense {
                    weight: Tensor::from_parts(fan_in, fan_out, values),
                    bias: Tensor::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.widths.len() - 1 {
            return Err(Error::InvalidSpec("layer count".into()));
        }
        for (l, w) in layers.iter().zip(spec.widths.windows(2)) {
            if l.weight.rows() != w[0] || l.weight.cols() != w[1] || l.bias.cols() != w[1] {
                return Err(Error::InvalidSpec("layer shape".into()));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// All parameter tensors in layer order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .into_iter()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.spec.parameter_count() {
            return Err(Error::ShapeMismatch("flat parameter length".into()));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("parameters".into()));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Add this network's parameters and ops to `g`, reading from `x`.
    pub fn build(&self, g: &mut Graph, x: NodeId, prefix: &str) -> MlpNodes {
        let mut h = x;
        let mut params = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(format!("{prefix}w{i}"), layer.weight.clone());
            let b = g.param(format!("{prefix}b{i}"), layer.bias.clone());
            let z = g.matmul(h, w);
            let z = g.add_row(z, b);
            h = if i < last {
                self.spec.activation.node(g, z)
            } else {
                z
            };
            params.push((w, b));
        }
        MlpNodes { output: h, params }
    }

    /// Graph-free batched inference.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.spec.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.spec.input_width(),
                found: x.cols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&h, &layer.weight)?;
            let c = z.cols();
            let bias = layer.bias.values();
            let act = self.spec.activation;
            for (k, v) in z.values_mut().iter_mut().enumerate() {
                *v += bias[k % c];
                if i < last {
                    *v = act.apply(*v);
                }
            }
            h = z;
        }
        if !h.is_finite() {
            return Err(Error::NonFiniteValue("mlp forward".into()));
        }
        Ok(h)
    }

    pub fn forward_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::row(row.to_vec())?;
        Ok(self.forward(&x)?.into_values())
    }

    /// Output and the gradient of `Σ seed ⊙ output` with respect to the input rows.
    pub fn input_gradient(&self, x: &Tensor, seed: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let xin = g.input("x");
        self.build(&mut g, xin, "");
        let out = g.forward(&HashMap::from([("x".to_string(), x.clone())]))?;
        let mut grads = g.backward(seed)?;
        Ok((out, grads.take(xin).expect("input leaf")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, 0).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], Activation::Relu, 0).is_err());
        assert!(MlpSpec::new(vec![3, 2], Activation::Relu, 0).is_ok());
    }

    #[test]
    fn paper_architecture_shape() {
        let spec = MlpSpec::new(vec![13, 100, 100, 100, 2], Activation::Relu, 1).unwrap();
        let mlp = Mlp::init(&spec).unwrap();
        let y = mlp.forward_row(&[0.5; 13]).unwrap();
        assert_eq!(y.len(), 2);
    }

    #[test]
    fn graph_and_direct_forward_agree() {
        let spec = MlpSpec::new(vec![4, 6, 3], Activation::Tanh, 9).unwrap();
        let mlp = Mlp::init(&spec).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.1, -0.2, 0.3, 0.9, 1.0, 2.0, -1.0, 0.0]).unwrap();
        let direct = mlp.forward(&x).unwrap();
        let (via_graph, _) = mlp.input_gradient(&x, &Tensor::zeros(2, 3)).unwrap();
        for (a, b) in direct.values().iter().zip(via_graph.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let spec = MlpSpec::new(vec![5, 7, 2], Activation::Relu, 42).unwrap();
        assert_eq!(Mlp::init(&spec).unwrap(), Mlp::init(&spec).unwrap());
        let other = MlpSpec { seed: 43, ..spec.clone() };
        assert_ne!(Mlp::init(&spec).unwrap(), Mlp::init(&other).unwrap());
    }

    #[test]
    fn zero_network_has_zero_input_gradient() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Identity, 0).unwrap();
        let mut mlp = Mlp::init(&spec).unwrap();
        let n = spec.parameter_count();
        mlp.set_flat_params(&vec![0.0; n]).unwrap();
        let x = Tensor::row(vec![1.0, -2.0, 3.0]).unwrap();
        let (_, gx) = mlp.input_gradient(&x, &Tensor::filled(1, 2, 1.0)).unwrap();
        assert!(gx.values().iter().all(|&v| v == 0.0));
    }
}
