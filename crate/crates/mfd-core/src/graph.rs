//! Reverse-mode automatic differentiation over a flat tape of nodes.
//!
//! The graph is define-by-run: every operation eagerly computes its forward
//! value and appends a node recording the operation tag and input references.
//! Insertion order is therefore a topological order, and [`Graph::backward`]
//! visits nodes exactly once in reverse insertion order, accumulating
//! vector-Jacobian products into zero-initialized gradient buffers.
//!
//! All arithmetic is `f64` and strictly sequential, so gradients are
//! bit-reproducible for a fixed graph.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf { trainable: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    MatMul(NodeId, NodeId),
    /// Adds a length-M bias row to every row of an N x M matrix.
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Recip(NodeId),
    ScaleConst(NodeId, f64),
    AddConst(NodeId, #[allow(dead_code)] f64),
    /// Multiplies a tensor elementwise by a scalar node.
    ScaleByScalar(NodeId, NodeId),
    /// Elementwise max with a constant; gradient flows only where the input
    /// strictly exceeds the constant.
    MaxConst(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    /// All pairwise squared Euclidean distances between the rows of two
    /// matrices: out[i][j] = ||x_i - y_j||^2.
    PairwiseSqdist(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatRows(NodeId, NodeId),
    /// Mean negative log softmax probability of the true labels.
    SoftmaxCrossEntropy(NodeId, Vec<usize>),
    /// Mean cross-entropy against fixed target distributions (rows of
    /// `targets`); used for distillation losses.
    SoftCrossEntropy(NodeId, Tensor),
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Tensor,
}

/// Wengert-style tape holding values and gradients for every node.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node { op, value, grad });
        NodeId(self.nodes.len() - 1)
    }

    fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        self.val(id)
    }

    /// Gradient accumulated by the last [`Graph::backward`] call.
    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    /// Resets every gradient buffer to zero.
    /// Ids of all trainable leaves, in insertion order.
    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Leaf { trainable: true }))
            .map(NodeId)
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            for g in n.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Inserts a constant leaf: no gradient is reported for it, but one is
    /// still accumulated internally.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: false }, t)
    }

    /// Inserts a trainable leaf (a parameter).
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: true }, t)
    }

    /// True if the node is a trainable leaf.
    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { trainable: true })
    }

    // ── elementwise and linear ops ──────────────────────────────────────

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.val(a).shape() != self.val(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.val(a).shape(),
                self.val(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::from_vec(self.val(a).shape(), data)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::from_vec(self.val(a).shape(), data)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::from_vec(self.val(a).shape(), data)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let data = self.val(a).data().iter().map(|x| -x).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::Neg(a), t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for kk in 0..k {
                let aik = ta.data()[i * k + kk];
                let brow = &tb.data()[kk * m..(kk + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let t = Tensor::from_vec(&[n, m], out)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    /// `a` is N x M, `bias` is a length-M vector added to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.val(a), self.val(bias));
        if ta.shape().len() != 2 || tb.shape() != [ta.cols()] {
            return Err(Error::Shape(format!(
                "add_row: {:?} + bias {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, m) = (ta.rows(), ta.cols());
        let mut out = ta.data().to_vec();
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] += tb.data()[j];
            }
        }
        let t = Tensor::from_vec(&[n, m], out)?;
        Ok(self.push(Op::AddRow(a, bias), t))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self.val(a).data().iter().map(|x| x.max(0.0)).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::Relu(a), t)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let data = self.val(a).data().iter().map(|x| x.exp()).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::Exp(a), t)
    }

    /// Elementwise reciprocal. Zero inputs are a domain error.
    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        if self.val(a).data().iter().any(|x| *x == 0.0) {
            return Err(Error::Domain("recip of zero".into()));
        }
        let data = self.val(a).data().iter().map(|x| 1.0 / x).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data)?;
        Ok(self.push(Op::Recip(a), t))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.val(a).data().iter().map(|x| x * c).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::ScaleConst(a, c), t)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.val(a).data().iter().map(|x| x + c).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::AddConst(a, c), t)
    }

    /// Multiplies every element of `a` by the value of scalar node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.val(s).item().map_err(|_| {
            Error::Shape(format!("scale_by: scalar expected, got {:?}", self.val(s).shape()))
        })?;
        let data = self.val(a).data().iter().map(|x| x * sv).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data)?;
        Ok(self.push(Op::ScaleByScalar(a, s), t))
    }

    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.val(a).data().iter().map(|x| x.max(c)).collect();
        let t = Tensor::from_vec(self.val(a).shape(), data).unwrap();
        self.push(Op::MaxConst(a, c), t)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.val(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.val(a).len();
        if n == 0 {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s: f64 = self.val(a).data().iter().sum::<f64>() / n as f64;
        Ok(self.push(Op::Mean(a), Tensor::scalar(s)))
    }

    // ── structured ops ──────────────────────────────────────────────────

    /// Squared Euclidean distances between all row pairs of two matrices
    /// with a common column count. The result is exact for identical rows
    /// (the accumulation never cancels), so the diagonal of
    /// `pairwise_sqdist(x, x)` is exactly zero.
    pub fn pairwise_sqdist(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (tx, ty) = (self.val(x), self.val(y));
        if tx.shape().len() != 2 || ty.shape().len() != 2 || tx.cols() != ty.cols() {
            return Err(Error::Shape(format!(
                "pairwise_sqdist: {:?} vs {:?}",
                tx.shape(),
                ty.shape()
            )));
        }
        let (n, m, d) = (tx.rows(), ty.rows(), tx.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let xi = tx.row(i);
            for j in 0..m {
                let yj = ty.row(j);
                let mut s = 0.0;
                for k in 0..d {
                    let diff = xi[k] - yj[k];
                    s += diff * diff;
                }
                out[i * m + j] = s;
            }
        }
        let t = Tensor::from_vec(&[n, m], out)?;
        Ok(self.push(Op::PairwiseSqdist(x, y), t))
    }

    /// Selects rows of a matrix by index (repeats allowed).
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let ta = self.val(a);
        if ta.shape().len() != 2 {
            return Err(Error::Shape("gather_rows on non-matrix".into()));
        }
        if idx.is_empty() {
            return Err(Error::Shape("gather_rows with empty index set".into()));
        }
        let (n, m) = (ta.rows(), ta.cols());
        if let Some(bad) = idx.iter().find(|i| **i >= n) {
            return Err(Error::Shape(format!("gather_rows: row {bad} out of {n}")));
        }
        let mut out = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            out.extend_from_slice(ta.row(i));
        }
        let t = Tensor::from_vec(&[idx.len(), m], out)?;
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), t))
    }

    /// Stacks the rows of `a` above the rows of `b`.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = Tensor::vcat(self.val(a), self.val(b))?;
        Ok(self.push(Op::ConcatRows(a, b), t))
    }

    /// Mean negative log softmax probability of each row's label. Numerically
    /// stabilized by max subtraction, so the value is invariant (to rounding)
    /// under per-row logit shifts.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let t = self.val(logits);
        if t.shape().len() != 2 {
            return Err(Error::Shape("softmax_cross_entropy on non-matrix".into()));
        }
        let (n, m) = (t.rows(), t.cols());
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= m) {
            return Err(Error::Domain(format!("label {bad} out of range 0..{m}")));
        }
        let mut total = 0.0;
        for i in 0..n {
            let row = t.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let v = Tensor::scalar(total / n as f64);
        Ok(self.push(Op::SoftmaxCrossEntropy(logits, labels.to_vec()), v))
    }

    /// Mean cross-entropy of softmax(logits) rows against fixed target rows:
    /// (1/N) sum_i sum_j t_ij (lse_i - z_ij).
    pub fn soft_cross_entropy(&mut self, logits: NodeId, targets: Tensor) -> Result<NodeId> {
        let t = self.val(logits);
        if t.shape() != targets.shape() || t.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "soft_cross_entropy: logits {:?} vs targets {:?}",
                t.shape(),
                targets.shape()
            )));
        }
        let (n, m) = (t.rows(), t.cols());
        let mut total = 0.0;
        for i in 0..n {
            let row = t.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
            for j in 0..m {
                total += targets.get2(i, j) * (lse - row[j]);
            }
        }
        let v = Tensor::scalar(total / n as f64);
        Ok(self.push(Op::SoftCrossEntropy(logits, targets), v))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Runs reverse-mode accumulation from a scalar output node. All
    /// gradients are re-zeroed first, so repeated calls are idempotent.
    pub fn backward(&mut self, out: NodeId) -> Result<()> {
        if !self.val(out).is_scalar() {
            return Err(Error::Contract(format!(
                "backward from non-scalar node of shape {:?}",
                self.val(out).shape()
            )));
        }
        self.zero_grads();
        self.nodes[out.0].grad.data_mut()[0] = 1.0;

        for id in (0..=out.0).rev() {
            // Clone the upstream gradient so input gradients can be mutated
            // while it is read; nodes only reference earlier nodes.
            let g = self.nodes[id].grad.clone();
            if g.data().iter().all(|v| *v == 0.0) {
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf { .. } => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, g.data());
                    self.accumulate(b, g.data());
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, g.data());
                    let neg: Vec<f64> = g.data().iter().map(|v| -v).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.val(b).data())
                        .map(|(g, bv)| g * bv)
                        .collect();
                    let gb: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.val(a).data())
                        .map(|(g, av)| g * av)
                        .collect();
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::Neg(a) => {
                    let a = *a;
                    let ga: Vec<f64> = g.data().iter().map(|v| -v).collect();
                    self.accumulate(a, &ga);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (n, k) = (self.val(a).rows(), self.val(a).cols());
                    let m = self.val(b).cols();
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    {
                        let av = self.val(a).data();
                        let bv = self.val(b).data();
                        let gv = g.data();
                        for i in 0..n {
                            for kk in 0..k {
                                let mut s = 0.0;
                                for j in 0..m {
                                    s += gv[i * m + j] * bv[kk * m + j];
                                }
                                ga[i * k + kk] = s;
                            }
                        }
                        for i in 0..n {
                            for kk in 0..k {
                                let aik = av[i * k + kk];
                                for j in 0..m {
                                    gb[kk * m + j] += aik * gv[i * m + j];
                                }
                            }
                        }
                    }
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::AddRow(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    let (n, m) = (self.val(a).rows(), self.val(a).cols());
                    let mut gbias = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            gbias[j] += g.data()[i * m + j];
                        }
                    }
                    self.accumulate(a, g.data());
                    self.accumulate(bias, &gbias);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.val(a).data())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Exp(a) => {
                    let a = *a;
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[id].value.data())
                        .map(|(g, e)| g * e)
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Recip(a) => {
                    let a = *a;
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[id].value.data())
                        .map(|(g, r)| -g * r * r)
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::ScaleConst(a, c) => {
                    let (a, c) = (*a, *c);
                    let ga: Vec<f64> = g.data().iter().map(|v| v * c).collect();
                    self.accumulate(a, &ga);
                }
                Op::AddConst(a, _) => {
                    let a = *a;
                    self.accumulate(a, g.data());
                }
                Op::ScaleByScalar(a, s) => {
                    let (a, s) = (*a, *s);
                    let sv = self.val(s).data()[0];
                    let ga: Vec<f64> = g.data().iter().map(|v| v * sv).collect();
                    let gs: f64 = g
                        .data()
                        .iter()
                        .zip(self.val(a).data())
                        .map(|(g, av)| g * av)
                        .sum();
                    self.accumulate(a, &ga);
                    self.accumulate(s, &[gs]);
                }
                Op::MaxConst(a, c) => {
                    let (a, c) = (*a, *c);
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.val(a).data())
                        .map(|(g, x)| if *x > c { *g } else { 0.0 })
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let gs = g.data()[0];
                    let ga = vec![gs; self.val(a).len()];
                    self.accumulate(a, &ga);
                }
                Op::Mean(a) => {
                    let a = *a;
                    let gs = g.data()[0] / self.val(a).len() as f64;
                    let ga = vec![gs; self.val(a).len()];
                    self.accumulate(a, &ga);
                }
                Op::PairwiseSqdist(x, y) => {
                    let (x, y) = (*x, *y);
                    let (n, d) = (self.val(x).rows(), self.val(x).cols());
                    let m = self.val(y).rows();
                    let mut gx = vec![0.0; n * d];
                    let mut gy = vec![0.0; m * d];
                    {
                        let xv = self.val(x).data();
                        let yv = self.val(y).data();
                        let gv = g.data();
                        for i in 0..n {
                            for j in 0..m {
                                let gij = gv[i * m + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for k in 0..d {
                                    let diff = xv[i * d + k] - yv[j * d + k];
                                    gx[i * d + k] += 2.0 * gij * diff;
                                    gy[j * d + k] -= 2.0 * gij * diff;
                                }
                            }
                        }
                    }
                    self.accumulate(x, &gx);
                    self.accumulate(y, &gy);
                }
                Op::GatherRows(a, idx) => {
                    let a = *a;
                    let idx = idx.clone();
                    let m = self.val(a).cols();
                    let mut ga = vec![0.0; self.val(a).len()];
                    for (r, &i) in idx.iter().enumerate() {
                        for j in 0..m {
                            ga[i * m + j] += g.data()[r * m + j];
                        }
                    }
                    self.accumulate(a, &ga);
                }
                Op::ConcatRows(a, b) => {
                    let (a, b) = (*a, *b);
                    let na = self.val(a).len();
                    let ga = g.data()[..na].to_vec();
                    let gb = g.data()[na..].to_vec();
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::SoftmaxCrossEntropy(logits, labels) => {
                    let logits = *logits;
                    let labels = labels.clone();
                    let (n, m) = (self.val(logits).rows(), self.val(logits).cols());
                    let gs = g.data()[0] / n as f64;
                    let mut gl = vec![0.0; n * m];
                    for i in 0..n {
                        let row = self.val(logits).row(i);
                        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|z| (z - mx).exp()).sum();
                        for j in 0..m {
                            let p = (row[j] - mx).exp() / denom;
                            gl[i * m + j] =
                                gs * (p - if labels[i] == j { 1.0 } else { 0.0 });
                        }
                    }
                    self.accumulate(logits, &gl);
                }
                Op::SoftCrossEntropy(logits, targets) => {
                    let logits = *logits;
                    let targets = targets.clone();
                    let (n, m) = (self.val(logits).rows(), self.val(logits).cols());
                    let gs = g.data()[0] / n as f64;
                    let mut gl = vec![0.0; n * m];
                    for i in 0..n {
                        let row = self.val(logits).row(i);
                        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|z| (z - mx).exp()).sum();
                        let tsum: f64 = (0..m).map(|j| targets.get2(i, j)).sum();
                        for j in 0..m {
                            let p = (row[j] - mx).exp() / denom;
                            gl[i * m + j] = gs * (tsum * p - targets.get2(i, j));
                        }
                    }
                    self.accumulate(logits, &gl);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: &[f64]) {
        let buf = self.nodes[id.0].grad.data_mut();
        debug_assert_eq!(buf.len(), g.len());
        for (b, v) in buf.iter_mut().zip(g) {
            *b += v;
        }
    }
}

/// Central-difference gradient of a scalar function, the independent oracle
/// for every reverse-mode gradient in this crate.
///
/// `eps` must be positive; a non-finite function value is a numeric error.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("finite_diff_grad: eps = {eps} must be > 0")));
    }
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&probe)?;
        probe[i] = orig - eps;
        let fm = f(&probe)?;
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "finite_diff_grad: non-finite value at coordinate {i}"
            )));
        }
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    Ok(grad)
}
