//! Static computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order: an operation can only refer
//! to nodes that already exist, so the node list is acyclic by
//! construction. [`Graph::forward`] evaluates every node and caches the
//! values; [`Graph::backward`] walks the list in reverse and accumulates
//! adjoints into every leaf, inputs included.

use std::collections::HashMap;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Input(String),
    Param(String),
    Const,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a (r×c) + row (1×c)` broadcast over rows.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `a (r×c) * col (r×1)` broadcast over columns.
    MulCol(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Sqrt(NodeId),
    Powf(NodeId, f64),
    Recip(NodeId),
    LogSigmoid(NodeId),
    /// Row-wise log-softmax.
    LogSoftmax(NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatCols(NodeId, NodeId),
    /// Row sums, `r×c → r×1`.
    SumRows(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
}

impl Op {
    pub fn tag(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sqrt(_) => "sqrt",
            Op::Powf(..) => "powf",
            Op::Recip(_) => "recip",
            Op::LogSigmoid(_) => "log_sigmoid",
            Op::LogSoftmax(_) => "log_softmax",
            Op::GatherRows(..) => "gather_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SumRows(_) => "sum_rows",
            Op::SumAll(_) => "sum_all",
            Op::MeanAll(_) => "mean_all",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input(_) | Op::Param(_) | Op::Const)
    }
}

/// Every differentiable operation tag.
pub const DIFFERENTIABLE_TAGS: &[&str] = &[
    "matmul",
    "add",
    "add_row",
    "sub",
    "mul",
    "mul_col",
    "scale",
    "add_scalar",
    "relu",
    "sigmoid",
    "tanh",
    "log",
    "exp",
    "sqrt",
    "powf",
    "recip",
    "log_sigmoid",
    "log_softmax",
    "gather_rows",
    "concat_cols",
    "sum_rows",
    "sum_all",
    "mean_all",
];

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    forwarded: bool,
}

/// Adjoints of every leaf after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_node: HashMap<NodeId, Tensor>,
    names: HashMap<String, NodeId>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(&id)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.get(name).and_then(|id| self.by_node.get(id))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.by_node.remove(&id)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Option<Tensor>) -> NodeId {
        self.forwarded = false;
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        self.push(Op::Input(name.into()), None)
    }

    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.push(Op::Param(name.into()), Some(value))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, Some(value))
    }

    pub fn op(&mut self, op: Op) -> NodeId {
        assert!(!op.is_leaf(), "use input/param/constant for leaves");
        self.push(op, None)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Add(a, b))
    }
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        self.op(Op::AddRow(a, row))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Mul(a, b))
    }
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        self.op(Op::MulCol(a, col))
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.op(Op::Scale(a, c))
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.op(Op::AddScalar(a, c))
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Relu(a))
    }
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Sigmoid(a))
    }
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Tanh(a))
    }
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Log(a))
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Exp(a))
    }
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Sqrt(a))
    }
    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        self.op(Op::Powf(a, p))
    }
    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Recip(a))
    }
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        self.op(Op::LogSigmoid(a))
    }
    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        self.op(Op::LogSoftmax(a))
    }
    pub fn gather_rows(&mut self, a: NodeId, idx: Vec<usize>) -> NodeId {
        self.op(Op::GatherRows(a, idx))
    }
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::ConcatCols(a, b))
    }
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        self.op(Op::SumRows(a))
    }
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        self.op(Op::SumAll(a))
    }
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        self.op(Op::MeanAll(a))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    /// Cached value of a node after `forward` (or a leaf's bound value).
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].value.as_ref()
    }

    /// Replace the value of a parameter or constant leaf.
    pub fn set_value(&mut self, id: NodeId, value: Tensor) {
        self.forwarded = false;
        self.nodes[id.0].value = Some(value);
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0]
            .value
            .as_ref()
            .expect("operands are evaluated before their consumers")
    }

    /// Evaluate every node; returns the value of the last node.
    pub fn forward(&mut self, inputs: &HashMap<String, Tensor>) -> Result<Tensor> {
        if self.nodes.is_empty() {
            return Err(Error::ShapeMismatch("empty graph".into()));
        }
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op.clone();
            let value = match &op {
                Op::Input(name) => inputs
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::UnboundInput(name.clone()))?,
                Op::Param(name) => self.nodes[i]
                    .value
                    .clone()
                    .ok_or_else(|| Error::UnboundInput(name.clone()))?,
                Op::Const => self.nodes[i]
                    .value
                    .clone()
                    .ok_or_else(|| Error::UnboundInput("constant".into()))?,
                _ => self.eval(&op)?,
            };
            if !value.is_finite() {
                return Err(Error::NonFiniteValue(op.tag().into()));
            }
            self.nodes[i].value = Some(value);
        }
        self.forwarded = true;
        Ok(self.nodes.last().and_then(|n| n.value.clone()).unwrap())
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let same = |a: &Tensor, b: &Tensor, what: &str| -> Result<()> {
            if a.same_shape(b) {
                Ok(())
            } else {
                Err(Error::ShapeMismatch(format!(
                    "{what}: {}×{} vs {}×{}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                )))
            }
        };
        Ok(match op {
            Op::Input(_) | Op::Param(_) | Op::Const => unreachable!(),
            Op::MatMul(a, b) => matmul(self.val(*a), self.val(*b))?,
            Op::Add(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                same(a, b, "add")?;
                a.zip_map(b, |x, y| x + y)
            }
            Op::Sub(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                same(a, b, "sub")?;
                a.zip_map(b, |x, y| x - y)
            }
            Op::Mul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                same(a, b, "mul")?;
                a.zip_map(b, |x, y| x * y)
            }
            Op::AddRow(a, r) => {
                let (a, r) = (self.val(*a), self.val(*r));
                if r.rows() != 1 || r.cols() != a.cols() {
                    return Err(Error::ShapeMismatch(format!(
                        "add_row: {}×{} + {}×{}",
                        a.rows(),
                        a.cols(),
                        r.rows(),
                        r.cols()
                    )));
                }
                let c = a.cols();
                let rv = r.values();
                let mut out = a.values().to_vec();
                for (k, v) in out.iter_mut().enumerate() {
                    *v += rv[k % c];
                }
                Tensor::from_parts(a.rows(), c, out)
            }
            Op::MulCol(a, col) => {
                let (a, col) = (self.val(*a), self.val(*col));
                if col.cols() != 1 || col.rows() != a.rows() {
                    return Err(Error::ShapeMismatch("mul_col".into()));
                }
                let c = a.cols();
                let cv = col.values();
                let mut out = a.values().to_vec();
                for (k, v) in out.iter_mut().enumerate() {
                    *v *= cv[k / c];
                }
                Tensor::from_parts(a.rows(), c, out)
            }
            Op::Scale(a, s) => self.val(*a).map(|x| x * s),
            Op::AddScalar(a, s) => self.val(*a).map(|x| x + s),
            Op::Relu(a) => self.val(*a).map(|x| x.max(0.0)),
            Op::Sigmoid(a) => self.val(*a).map(sigmoid),
            Op::Tanh(a) => self.val(*a).map(f64::tanh),
            Op::Log(a) => self.val(*a).map(f64::ln),
            Op::Exp(a) => self.val(*a).map(f64::exp),
            Op::Sqrt(a) => self.val(*a).map(f64::sqrt),
            Op::Powf(a, p) => self.val(*a).map(|x| x.powf(*p)),
            Op::Recip(a) => self.val(*a).map(|x| 1.0 / x),
            Op::LogSigmoid(a) => self.val(*a).map(log_sigmoid),
            Op::LogSoftmax(a) => {
                let a = self.val(*a);
                let c = a.cols();
                let mut out = Vec::with_capacity(a.len());
                for r in 0..a.rows() {
                    let row = a.row_slice(r);
                    let lse = log_sum_exp(row);
                    out.extend(row.iter().map(|x| x - lse));
                }
                Tensor::from_parts(a.rows(), c, out)
            }
            Op::GatherRows(a, idx) => {
                let a = self.val(*a);
                let c = a.cols();
                let mut out = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    if i >= a.rows() {
                        return Err(Error::ShapeMismatch(format!(
                            "gather index {i} out of {} rows",
                            a.rows()
                        )));
                    }
                    out.extend_from_slice(a.row_slice(i));
                }
                Tensor::from_parts(idx.len(), c, out)
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.rows() != b.rows() {
                    return Err(Error::ShapeMismatch("concat_cols".into()));
                }
                let mut out = Vec::with_capacity(a.len() + b.len());
                for r in 0..a.rows() {
                    out.extend_from_slice(a.row_slice(r));
                    out.extend_from_slice(b.row_slice(r));
                }
                Tensor::from_parts(a.rows(), a.cols() + b.cols(), out)
            }
            Op::SumRows(a) => {
                let a = self.val(*a);
                let out = (0..a.rows()).map(|r| a.row_slice(r).iter().sum()).collect();
                Tensor::from_parts(a.rows(), 1, out)
            }
            Op::SumAll(a) => Tensor::from_parts(1, 1, vec![self.val(*a).sum()]),
            Op::MeanAll(a) => {
                let a = self.val(*a);
                Tensor::from_parts(1, 1, vec![a.sum() / a.len().max(1) as f64])
            }
        })
    }

    /// Propagate `seed` (the adjoint of the last node) back to every leaf.
    pub fn backward(&self, seed: &Tensor) -> Result<Gradients> {
        if !self.forwarded {
            return Err(Error::NoForwardPass);
        }
        let last = self.nodes.len() - 1;
        if !seed.same_shape(self.val(NodeId(last))) {
            return Err(Error::ShapeMismatch("seed gradient".into()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[last] = Some(seed.clone());

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = adj[i].take() else { continue };
            let op = &self.nodes[i].op;
            if op.is_leaf() {
                adj[i] = Some(g);
                continue;
            }
            let out = self.val(NodeId(i));
            for (target, grad) in self.local_grads(op, out, &g) {
                accumulate(&mut adj[target.0], grad);
            }
        }

        let mut by_node = HashMap::new();
        let mut names = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let name = match &node.op {
                Op::Input(n) | Op::Param(n) => n,
                _ => continue,
            };
            let v = self.val(NodeId(i));
            let grad = adj[i]
                .take()
                .unwrap_or_else(|| Tensor::zeros(v.rows(), v.cols()));
            names.insert(name.clone(), NodeId(i));
            by_node.insert(NodeId(i), grad);
        }
        Ok(Gradients { by_node, names })
    }

    fn local_grads(&self, op: &Op, out: &Tensor, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        match op {
            Op::Input(_) | Op::Param(_) | Op::Const => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                vec![(*a, matmul_nt(g, bv)), (*b, matmul_tn(av, g))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                vec![(*a, g.zip_map(bv, |x, y| x * y)), (*b, g.zip_map(av, |x, y| x * y))]
            }
            Op::AddRow(a, r) => {
                let c = g.cols();
                let mut rg = vec![0.0; c];
                for (k, v) in g.values().iter().enumerate() {
                    rg[k % c] += v;
                }
                vec![(*a, g.clone()), (*r, Tensor::from_parts(1, c, rg))]
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (self.val(*a), self.val(*col));
                let c = g.cols();
                let cvals = cv.values();
                let mut ga = g.values().to_vec();
                for (k, v) in ga.iter_mut().enumerate() {
                    *v *= cvals[k / c];
                }
                let mut gc = vec![0.0; g.rows()];
                for (k, (gv, x)) in g.values().iter().zip(av.values()).enumerate() {
                    gc[k / c] += gv * x;
                }
                vec![
                    (*a, Tensor::from_parts(g.rows(), c, ga)),
                    (*col, Tensor::from_parts(g.rows(), 1, gc)),
                ]
            }
            Op::Scale(a, s) => vec![(*a, g.map(|x| x * s))],
            Op::AddScalar(a, _) => vec![(*a, g.clone())],
            Op::Relu(a) => {
                let x = self.val(*a);
                vec![(*a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }))]
            }
            Op::Sigmoid(a) => vec![(*a, g.zip_map(out, |gv, s| gv * s * (1.0 - s)))],
            Op::Tanh(a) => vec![(*a, g.zip_map(out, |gv, t| gv * (1.0 - t * t)))],
            Op::Log(a) => vec![(*a, g.zip_map(self.val(*a), |gv, x| gv / x))],
            Op::Exp(a) => vec![(*a, g.zip_map(out, |gv, e| gv * e))],
            Op::Sqrt(a) => vec![(*a, g.zip_map(out, |gv, s| gv / (2.0 * s)))],
            Op::Powf(a, p) => {
                let x = self.val(*a);
                vec![(*a, g.zip_map(x, |gv, xv| gv * p * xv.powf(p - 1.0)))]
            }
            Op::Recip(a) => vec![(*a, g.zip_map(out, |gv, r| -gv * r * r))],
            Op::LogSigmoid(a) => {
                let x = self.val(*a);
                vec![(*a, g.zip_map(x, |gv, xv| gv * sigmoid(-xv)))]
            }
            Op::LogSoftmax(a) => {
                let c = g.cols();
                let mut ga = Vec::with_capacity(g.len());
                for r in 0..g.rows() {
                    let gr = g.row_slice(r);
                    let total: f64 = gr.iter().sum();
                    for (gv, y) in gr.iter().zip(out.row_slice(r)) {
                        ga.push(gv - y.exp() * total);
                    }
                }
                vec![(*a, Tensor::from_parts(g.rows(), c, ga))]
            }
            Op::GatherRows(a, idx) => {
                let src = self.val(*a);
                let c = src.cols();
                let mut ga = vec![0.0; src.len()];
                for (k, &i) in idx.iter().enumerate() {
                    for (dst, v) in ga[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *dst += v;
                    }
                }
                vec![(*a, Tensor::from_parts(src.rows(), c, ga))]
            }
            Op::ConcatCols(a, b) => {
                let ca = self.val(*a).cols();
                let cb = self.val(*b).cols();
                let mut ga = Vec::with_capacity(g.rows() * ca);
                let mut gb = Vec::with_capacity(g.rows() * cb);
                for r in 0..g.rows() {
                    let row = g.row_slice(r);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![
                    (*a, Tensor::from_parts(g.rows(), ca, ga)),
                    (*b, Tensor::from_parts(g.rows(), cb, gb)),
                ]
            }
            Op::SumRows(a) => {
                let src = self.val(*a);
                let c = src.cols();
                let gv = g.values();
                let ga = (0..src.len()).map(|k| gv[k / c]).collect();
                vec![(*a, Tensor::from_parts(src.rows(), c, ga))]
            }
            Op::SumAll(a) => {
                let src = self.val(*a);
                vec![(*a, Tensor::filled(src.rows(), src.cols(), g.values()[0]))]
            }
            Op::MeanAll(a) => {
                let src = self.val(*a);
                let v = g.values()[0] / src.len().max(1) as f64;
                vec![(*a, Tensor::filled(src.rows(), src.cols(), v))]
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(existing) => {
            for (e, g) in existing.values_mut().iter_mut().zip(grad.values()) {
                *e += g;
            }
        }
        None => *slot = Some(grad),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: usize, c: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(r, c, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let x = g.input("x");
        let w = g.param("w", t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        g.matmul(x, w);
        let inputs = HashMap::from([("x".to_string(), t(1, 2, &[3.0, 4.0]))]);
        let y = g.forward(&inputs).unwrap();
        assert_eq!(y.values(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 3, &[-1.0, 0.0, 2.0]));
        g.relu(x);
        let y = g.forward(&HashMap::new()).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.mul(x, x);
        let inputs = HashMap::from([("x".to_string(), Tensor::scalar(3.0).unwrap())]);
        g.forward(&inputs).unwrap();
        let grads = g.backward(&Tensor::scalar(1.0).unwrap()).unwrap();
        assert_eq!(grads.get(x).unwrap().values(), &[6.0]);
        assert_eq!(grads.by_name("x").unwrap().values(), &[6.0]);
    }

    #[test]
    fn backward_requires_forward() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.relu(x);
        assert!(matches!(
            g.backward(&Tensor::scalar(1.0).unwrap()),
            Err(Error::NoForwardPass)
        ));
    }

    #[test]
    fn shape_mismatch_and_nonfinite_are_reported() {
        let mut g = Graph::new();
        let a = g.constant(t(1, 2, &[1.0, 2.0]));
        let b = g.constant(t(1, 3, &[1.0, 2.0, 3.0]));
        g.add(a, b);
        assert!(matches!(g.forward(&HashMap::new()), Err(Error::ShapeMismatch(_))));

        let mut g = Graph::new();
        let a = g.constant(t(1, 1, &[-1.0]));
        g.log(a);
        assert!(matches!(g.forward(&HashMap::new()), Err(Error::NonFiniteValue(_))));
    }

    #[test]
    fn unbound_input() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.relu(x);
        assert!(matches!(g.forward(&HashMap::new()), Err(Error::UnboundInput(_))));
    }
}
