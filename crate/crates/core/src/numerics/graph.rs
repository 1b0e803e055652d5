//! Define-by-run expression graph with reverse-mode differentiation.
//!
//! Nodes are appended in construction order, so parents always precede
//! children and the backward sweep is a single reverse pass over the arena.
//! The graph is rebuilt per forward pass; values are immutable once
//! produced.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Where a soft-threshold node takes its threshold from.
#[derive(Debug, Clone, Copy)]
pub enum XiSource {
    Const(f64),
    /// 1x1 node; receives a gradient, which makes the threshold learnable.
    Node(NodeId),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    ScaleConst(NodeId, f64),
    Relu(NodeId),
    RowSoftmax(NodeId),
    SoftThreshold(NodeId, XiSource),
    RmsNorm(NodeId, f64),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    ScaleByScalar(NodeId, NodeId),
    MseLoss {
        pred: NodeId,
        target: NodeId,
        mask: Option<NodeId>,
        count: f64,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    grad: Option<Matrix>,
}

#[derive(Debug, Default)]
pub struct ExprGraph {
    nodes: Vec<Node>,
    min_kink_distance: f64,
}

impl ExprGraph {
    pub fn new() -> Self {
        ExprGraph {
            nodes: Vec::new(),
            min_kink_distance: f64::INFINITY,
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value, grad: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Gradient of the last `backward` loss w.r.t. `id`, zeros if the node
    /// does not influence the loss.
    pub fn grad_or_zeros(&self, id: NodeId) -> Matrix {
        let n = &self.nodes[id.0];
        n.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()))
    }

    /// Smallest distance of any relu or soft-threshold input to its kink
    /// over every node built so far. Finite-difference harnesses reject
    /// samples where this is too small.
    pub fn min_kink_distance(&self) -> f64 {
        self.min_kink_distance
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.sub(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.hadamard(&self.nodes[b.0].value)?;
        Ok(self.push(Op::Hadamard(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.nodes[a.0].value.scale(factor)?;
        Ok(self.push(Op::ScaleConst(a, factor), value))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let input = &self.nodes[a.0].value;
        for &v in input.data() {
            let d = v.abs();
            if d < self.min_kink_distance {
                self.min_kink_distance = d;
            }
        }
        let value = input.relu();
        self.push(Op::Relu(a), value)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.row_softmax();
        self.push(Op::RowSoftmax(a), value)
    }

    pub fn soft_threshold(&mut self, a: NodeId, xi: XiSource) -> Result<NodeId> {
        let xi_value = match xi {
            XiSource::Const(v) => v,
            XiSource::Node(id) => self.nodes[id.0].value.item()?,
        };
        if xi_value < 0.0 {
            return Err(Error::InvalidParameter { what: "xi", value: xi_value });
        }
        let input = &self.nodes[a.0].value;
        for &v in input.data() {
            let d = (v.abs() - xi_value).abs();
            if d < self.min_kink_distance {
                self.min_kink_distance = d;
            }
        }
        let value = input.soft_threshold(xi_value)?;
        Ok(self.push(Op::SoftThreshold(a, xi), value))
    }

    pub fn rms_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        let value = self.nodes[a.0].value.rms_normalize(eps)?;
        Ok(self.push(Op::RmsNorm(a, eps), value))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.nodes[a.0].value.slice_rows(start, len)?;
        Ok(self.push(Op::SliceRows(a, start), value))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let value = self.nodes[a.0].value.slice_cols(start, len)?;
        Ok(self.push(Op::SliceCols(a, start), value))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mats: Vec<&Matrix> = parts.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = Matrix::concat_rows(&mats)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value))
    }

    /// Multiplies every entry of `a` by the single entry of the 1x1 node `s`.
    pub fn scale_by_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let factor = self.nodes[s.0].value.item()?;
        let value = self.nodes[a.0].value.scale(factor)?;
        Ok(self.push(Op::ScaleByScalar(a, s), value))
    }

    /// Mean squared error over unmasked entries; mask entries must be 0 or 1.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId, mask: Option<NodeId>) -> Result<NodeId> {
        let p = &self.nodes[pred.0].value;
        let t = &self.nodes[target.0].value;
        if p.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse_loss",
                left: p.shape(),
                right: t.shape(),
            });
        }
        let count = match mask {
            Some(m) => {
                let mv = &self.nodes[m.0].value;
                if mv.shape() != p.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "mse_loss mask",
                        left: p.shape(),
                        right: mv.shape(),
                    });
                }
                if !mv.data().iter().all(|&v| v == 0.0 || v == 1.0) {
                    return Err(Error::InvalidParameter { what: "mask entry", value: f64::NAN });
                }
                let c: f64 = mv.data().iter().sum();
                if c == 0.0 {
                    return Err(Error::DegenerateMask);
                }
                c
            }
            None => (p.rows() * p.cols()) as f64,
        };
        let mut acc = 0.0;
        match mask {
            Some(m) => {
                let mv = &self.nodes[m.0].value;
                for ((a, b), w) in p.data().iter().zip(t.data()).zip(mv.data()) {
                    let d = a - b;
                    acc += w * d * d;
                }
            }
            None => {
                for (a, b) in p.data().iter().zip(t.data()) {
                    let d = a - b;
                    acc += d * d;
                }
            }
        }
        let value = Matrix::scalar(acc / count)?;
        Ok(self.push(Op::MseLoss { pred, target, mask, count }, value))
    }

    /// Mean over rows of -log softmax(logits)[label].
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let l = &self.nodes[logits.0].value;
        if labels.len() != l.rows() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: l.shape(),
                right: (labels.len(), 1),
            });
        }
        let classes = l.cols();
        for &lab in labels {
            if lab >= classes {
                return Err(Error::LabelOutOfRange { label: lab, classes });
            }
        }
        let mut acc = 0.0;
        for (r, &lab) in labels.iter().enumerate() {
            let row = l.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            acc += lse - row[lab];
        }
        let value = Matrix::scalar(acc / labels.len() as f64)?;
        Ok(self.push(
            Op::CrossEntropy { logits, labels: labels.to_vec() },
            value,
        ))
    }

    /// Reverse sweep from a 1x1 loss node. Populates the gradient of every
    /// node that influences the loss; leaves off the path keep `None`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.nodes[loss.0].value.shape();
        if shape != (1, 1) {
            return Err(Error::NotScalar { rows: shape.0, cols: shape.1 });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Matrix::scalar(1.0)?);

        for idx in (0..=loss.0).rev() {
            let Some(g) = self.nodes[idx].grad.clone() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.nodes[b.0].value.transpose())?;
                    let db = self.nodes[a.0].value.transpose().matmul(&g)?;
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::Transpose(a) => {
                    self.accumulate(a, g.transpose())?;
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone())?;
                    self.accumulate(b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, g.clone())?;
                    self.accumulate(b, g.scale(-1.0)?)?;
                }
                Op::Hadamard(a, b) => {
                    let da = g.hadamard(&self.nodes[b.0].value)?;
                    let db = g.hadamard(&self.nodes[a.0].value)?;
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::ScaleConst(a, c) => {
                    self.accumulate(a, g.scale(c)?)?;
                }
                Op::Relu(a) => {
                    let input = &self.nodes[a.0].value;
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                        .collect();
                    self.accumulate(a, Matrix::from_vec(g.rows(), g.cols(), da)?)?;
                }
                Op::RowSoftmax(a) => {
                    let s = &self.nodes[idx].value;
                    let mut da = vec![0.0f64; s.rows() * s.cols()];
                    for r in 0..s.rows() {
                        let srow = s.row(r);
                        let grow = g.row(r);
                        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for ((d, &sv), &gv) in
                            da[r * s.cols()..(r + 1) * s.cols()].iter_mut().zip(srow).zip(grow)
                        {
                            *d = sv * (gv - dot);
                        }
                    }
                    self.accumulate(a, Matrix::from_vec(s.rows(), s.cols(), da)?)?;
                }
                Op::SoftThreshold(a, xi) => {
                    let xi_value = match xi {
                        XiSource::Const(v) => v,
                        XiSource::Node(id) => self.nodes[id.0].value.item()?,
                    };
                    let input = &self.nodes[a.0].value;
                    // pass-through where |x| > xi, zero elsewhere (kink
                    // included: this keeps exact zeros exactly zero)
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gv, &x)| if x.abs() > xi_value { gv } else { 0.0 })
                        .collect();
                    if let XiSource::Node(id) = xi {
                        let dxi: f64 = g
                            .data()
                            .iter()
                            .zip(input.data())
                            .map(|(&gv, &x)| if x.abs() > xi_value { -x.signum() * gv } else { 0.0 })
                            .sum();
                        self.accumulate(id, Matrix::scalar(dxi)?)?;
                    }
                    self.accumulate(a, Matrix::from_vec(g.rows(), g.cols(), da)?)?;
                }
                Op::RmsNorm(a, eps) => {
                    let input = &self.nodes[a.0].value;
                    let n = input.cols() as f64;
                    let mut da = vec![0.0f64; input.rows() * input.cols()];
                    for r in 0..input.rows() {
                        let xrow = input.row(r);
                        let grow = g.row(r);
                        let ms = xrow.iter().map(|v| v * v).sum::<f64>() / n;
                        let inv = 1.0 / (ms + eps).sqrt();
                        let dot: f64 = xrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let k = inv * inv * inv / n;
                        for ((d, &x), &gv) in da[r * input.cols()..(r + 1) * input.cols()]
                            .iter_mut()
                            .zip(xrow)
                            .zip(grow)
                        {
                            *d = inv * gv - k * dot * x;
                        }
                    }
                    self.accumulate(a, Matrix::from_vec(input.rows(), input.cols(), da)?)?;
                }
                Op::SliceRows(a, start) => {
                    let parent = &self.nodes[a.0].value;
                    let mut da = vec![0.0f64; parent.rows() * parent.cols()];
                    let w = parent.cols();
                    for r in 0..g.rows() {
                        da[(start + r) * w..(start + r + 1) * w].copy_from_slice(g.row(r));
                    }
                    self.accumulate(a, Matrix::from_vec(parent.rows(), parent.cols(), da)?)?;
                }
                Op::SliceCols(a, start) => {
                    let parent = &self.nodes[a.0].value;
                    let mut da = vec![0.0f64; parent.rows() * parent.cols()];
                    let w = parent.cols();
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            da[r * w + start + c] = g.get(r, c);
                        }
                    }
                    self.accumulate(a, Matrix::from_vec(parent.rows(), parent.cols(), da)?)?;
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let slice = g.slice_rows(offset, rows)?;
                        self.accumulate(p, slice)?;
                        offset += rows;
                    }
                }
                Op::ScaleByScalar(a, s) => {
                    let factor = self.nodes[s.0].value.item()?;
                    let da = g.scale(factor)?;
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(&gv, &av)| gv * av)
                        .sum();
                    self.accumulate(a, da)?;
                    self.accumulate(s, Matrix::scalar(ds)?)?;
                }
                Op::MseLoss { pred, target, mask, count } => {
                    let gscale = g.item()? * 2.0 / count;
                    let p = &self.nodes[pred.0].value;
                    let t = &self.nodes[target.0].value;
                    let dp: Vec<f64> = match mask {
                        Some(m) => {
                            let mv = &self.nodes[m.0].value;
                            p.data()
                                .iter()
                                .zip(t.data())
                                .zip(mv.data())
                                .map(|((&a, &b), &w)| gscale * w * (a - b))
                                .collect()
                        }
                        None => p
                            .data()
                            .iter()
                            .zip(t.data())
                            .map(|(&a, &b)| gscale * (a - b))
                            .collect(),
                    };
                    let dp = Matrix::from_vec(p.rows(), p.cols(), dp)?;
                    let dt = dp.scale(-1.0)?;
                    self.accumulate(pred, dp)?;
                    self.accumulate(target, dt)?;
                }
                Op::CrossEntropy { logits, labels } => {
                    let l = &self.nodes[logits.0].value;
                    let gscale = g.item()? / labels.len() as f64;
                    let sm = l.row_softmax();
                    let mut dl = sm.data().to_vec();
                    for (r, &lab) in labels.iter().enumerate() {
                        dl[r * l.cols() + lab] -= 1.0;
                    }
                    for v in dl.iter_mut() {
                        *v *= gscale;
                    }
                    self.accumulate(logits, Matrix::from_vec(l.rows(), l.cols(), dl)?)?;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Matrix) -> Result<()> {
        let node = &mut self.nodes[id.0];
        debug_assert_eq!(node.value.shape(), delta.shape());
        node.grad = Some(match node.grad.take() {
            Some(g) => g.add(&delta)?,
            None => delta,
        });
        Ok(())
    }
}
