use std::sync::Arc;

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitives understood by [`Graph::apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[r, k] · [k, c] → [r, c]`.
    MatMul,
    /// Elementwise sum; the second operand may be a `[1, c]` row broadcast
    /// over the rows of the first.
    Add,
    /// Elementwise product of equally shaped tensors.
    Mul,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    Tanh,
    Sigmoid,
    Exp,
    Log,
    /// Sum of all entries, shape `[1]`.
    Sum,
    /// `[r, c]` reduced along `axis`; rank-1 inputs reduce to `[1]`.
    LogSumExp { axis: usize },
    Scale(f64),
    /// Row lookup into a `[V, D]` table.
    EmbeddingLookup(Vec<usize>),
    /// Flat element gather, shape `[len]`.
    Gather(Vec<usize>),
    Transpose,
    Reshape(Vec<usize>),
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(NodeId, NodeId),
    Add { a: NodeId, b: NodeId, broadcast: bool },
    Mul(NodeId, NodeId),
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, end: usize },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sum(NodeId),
    LogSumExp { input: NodeId, axis: usize },
    Scale(NodeId, f64),
    Lookup { table: NodeId, ids: Vec<usize> },
    Gather { input: NodeId, idx: Vec<usize> },
    Transpose(NodeId),
    Reshape(NodeId),
    /// Scalar function with a precomputed gradient for each input.
    ScalarFn { inputs: Vec<NodeId>, grads: Vec<Tensor> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Arc<Tensor>,
    requires_grad: bool,
}

/// Record of primitive applications for one forward pass.
///
/// Nodes are appended in evaluation order, so parents always precede
/// their children. A graph can be differentiated once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    /// Leaf bound to a parameter; its gradient is accumulated by name.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        let value = store.shared(name)?;
        self.nodes.push(Node {
            op: Op::Param(name.to_string()),
            value,
            requires_grad: true,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Applies `op` to `inputs` and records the result.
    pub fn apply(&mut self, op: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        let arity = match op {
            Primitive::MatMul | Primitive::Add | Primitive::Mul => 2,
            Primitive::Concat { .. } => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Graph(format!(
                "{op:?} expects {arity} input(s), got {}",
                inputs.len()
            )));
        }
        match op {
            Primitive::MatMul => self.matmul(inputs[0], inputs[1]),
            Primitive::Add => self.add(inputs[0], inputs[1]),
            Primitive::Mul => self.mul(inputs[0], inputs[1]),
            Primitive::Concat { axis } => self.concat(inputs, axis),
            Primitive::Slice { axis, start, end } => self.slice(inputs[0], axis, start, end),
            Primitive::Tanh => Ok(self.tanh(inputs[0])),
            Primitive::Sigmoid => Ok(self.sigmoid(inputs[0])),
            Primitive::Exp => Ok(self.exp(inputs[0])),
            Primitive::Log => Ok(self.log(inputs[0])),
            Primitive::Sum => Ok(self.sum(inputs[0])),
            Primitive::LogSumExp { axis } => self.logsumexp(inputs[0], axis),
            Primitive::Scale(c) => Ok(self.scale(inputs[0], c)),
            Primitive::EmbeddingLookup(ids) => self.lookup(inputs[0], &ids),
            Primitive::Gather(idx) => self.gather(inputs[0], &idx),
            Primitive::Transpose => self.transpose(inputs[0]),
            Primitive::Reshape(shape) => self.reshape(inputs[0], &shape),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", av.shape(), bv.shape()),
            ));
        }
        let (r, k, c) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; r * c];
        matmul_acc(av.data(), bv.data(), &mut out, r, k, c);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![r, c], out), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if av.rank() == 2 && bv.shape() == [1, av.cols()] {
            true
        } else {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        };
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + if broadcast { bv.data()[i % c] } else { bv.data()[i] })
            .collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Op::Add { a, b, broadcast },
            Tensor::from_parts(shape, data),
            rg,
        ))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "elementwise-mul",
                format!("{:?} ⊙ {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let shape = av.shape().to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), Tensor::from_parts(shape, data), rg))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = self.value(inputs[0]);
        let rank = first.rank();
        let shapes: Vec<Vec<usize>> = inputs
            .iter()
            .map(|id| self.value(*id).shape().to_vec())
            .collect();
        let bad = || Error::shape("concat", format!("axis {axis} over {shapes:?}"));
        if shapes.iter().any(|s| s.len() != rank) || axis >= rank {
            return Err(bad());
        }
        let (shape, data) = if rank == 1 {
            let data: Vec<f64> = inputs
                .iter()
                .flat_map(|id| self.value(*id).data().iter().copied())
                .collect();
            (vec![data.len()], data)
        } else if axis == 0 {
            let c = shapes[0][1];
            if shapes.iter().any(|s| s[1] != c) {
                return Err(bad());
            }
            let data: Vec<f64> = inputs
                .iter()
                .flat_map(|id| self.value(*id).data().iter().copied())
                .collect();
            (vec![data.len() / c, c], data)
        } else {
            let r = shapes[0][0];
            if shapes.iter().any(|s| s[0] != r) {
                return Err(bad());
            }
            let total: usize = shapes.iter().map(|s| s[1]).sum();
            let mut data = Vec::with_capacity(r * total);
            for row in 0..r {
                for id in inputs {
                    data.extend_from_slice(self.value(*id).row(row));
                }
            }
            (vec![r, total], data)
        };
        let rg = self.rg(inputs);
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            Tensor::from_parts(shape, data),
            rg,
        ))
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(input);
        let extent = if v.rank() == 1 { v.len() } else { v.shape()[axis.min(1)] };
        if axis >= v.rank() || start >= end || end > extent {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {end}) along axis {axis} of {:?}", v.shape()),
            ));
        }
        let (shape, data) = if v.rank() == 1 {
            (vec![end - start], v.data()[start..end].to_vec())
        } else if axis == 0 {
            let c = v.cols();
            (vec![end - start, c], v.data()[start * c..end * c].to_vec())
        } else {
            let mut data = Vec::with_capacity(v.rows() * (end - start));
            for r in 0..v.rows() {
                data.extend_from_slice(&v.row(r)[start..end]);
            }
            (vec![v.rows(), end - start], data)
        };
        let rg = self.rg(&[input]);
        Ok(self.push(
            Op::Slice {
                input,
                axis,
                start,
                end,
            },
            Tensor::from_parts(shape, data),
            rg,
        ))
    }

    fn map_unary(&mut self, input: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(input);
        let data = v.data().iter().map(|x| f(*x)).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[input]);
        self.push(op, Tensor::from_parts(shape, data), rg)
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        self.map_unary(input, Op::Tanh(input), f64::tanh)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        self.map_unary(input, Op::Sigmoid(input), sigmoid)
    }

    pub fn exp(&mut self, input: NodeId) -> NodeId {
        self.map_unary(input, Op::Exp(input), f64::exp)
    }

    pub fn log(&mut self, input: NodeId) -> NodeId {
        self.map_unary(input, Op::Log(input), f64::ln)
    }

    pub fn scale(&mut self, input: NodeId, c: f64) -> NodeId {
        self.map_unary(input, Op::Scale(input, c), |x| c * x)
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total = self.value(input).data().iter().sum();
        let rg = self.rg(&[input]);
        self.push(Op::Sum(input), Tensor::scalar(total), rg)
    }

    pub fn logsumexp(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(input);
        let (shape, data) = match (v.rank(), axis) {
            (1, 0) => (vec![1], vec![super::logsumexp(v.data())]),
            (2, 1) => {
                let data: Vec<f64> = (0..v.rows()).map(|r| super::logsumexp(v.row(r))).collect();
                (vec![v.rows()], data)
            }
            (2, 0) => {
                let t = v.transpose();
                let data: Vec<f64> = (0..t.rows()).map(|r| super::logsumexp(t.row(r))).collect();
                (vec![t.rows()], data)
            }
            _ => {
                return Err(Error::shape(
                    "logsumexp-over-axis",
                    format!("axis {axis} of {:?}", v.shape()),
                ))
            }
        };
        let rg = self.rg(&[input]);
        Ok(self.push(
            Op::LogSumExp { input, axis },
            Tensor::from_parts(shape, data),
            rg,
        ))
    }

    pub fn lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let v = self.value(table);
        if v.rank() != 2 || ids.is_empty() {
            return Err(Error::shape(
                "embedding-lookup",
                format!("{} ids into {:?}", ids.len(), v.shape()),
            ));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::shape(
                "embedding-lookup",
                format!("id {bad} out of range for table {:?}", v.shape()),
            ));
        }
        let c = v.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            data.extend_from_slice(v.row(id));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            Tensor::from_parts(vec![ids.len(), c], data),
            rg,
        ))
    }

    pub fn gather(&mut self, input: NodeId, idx: &[usize]) -> Result<NodeId> {
        let v = self.value(input);
        if idx.is_empty() {
            return Err(Error::shape("gather", "empty index list"));
        }
        if let Some(bad) = idx.iter().find(|&&i| i >= v.len()) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} out of range for {:?}", v.shape()),
            ));
        }
        let data = idx.iter().map(|&i| v.data()[i]).collect();
        let rg = self.rg(&[input]);
        Ok(self.push(
            Op::Gather {
                input,
                idx: idx.to_vec(),
            },
            Tensor::from_parts(vec![idx.len()], data),
            rg,
        ))
    }

    pub fn transpose(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        if v.rank() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", v.shape())));
        }
        let t = v.transpose();
        let rg = self.rg(&[input]);
        Ok(self.push(Op::Transpose(input), t, rg))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(input);
        let t = Tensor::new(shape.to_vec(), v.data().to_vec())
            .map_err(|_| Error::shape("reshape", format!("{:?} → {shape:?}", v.shape())))?;
        let rg = self.rg(&[input]);
        Ok(self.push(Op::Reshape(input), t, rg))
    }

    /// Records a scalar computed outside the graph together with its
    /// gradient with respect to each input (same shapes as the inputs).
    pub fn scalar_fn(&mut self, inputs: &[NodeId], value: f64, grads: Vec<Tensor>) -> Result<NodeId> {
        if inputs.len() != grads.len() {
            return Err(Error::Graph(format!(
                "scalar function has {} inputs but {} gradients",
                inputs.len(),
                grads.len()
            )));
        }
        for (id, g) in inputs.iter().zip(&grads) {
            if self.value(*id).shape() != g.shape() {
                return Err(Error::shape(
                    "scalar-fn",
                    format!(
                        "input {:?} vs gradient {:?}",
                        self.value(*id).shape(),
                        g.shape()
                    ),
                ));
            }
        }
        let rg = self.rg(inputs);
        Ok(self.push(
            Op::ScalarFn {
                inputs: inputs.to_vec(),
                grads,
            },
            Tensor::scalar(value),
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss` into `store`'s gradient buffers.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        self.backward_into(loss, store.grads_mut())
    }

    /// Back-propagates from a scalar `loss`, accumulating into `out`.
    pub fn backward_into(&mut self, loss: NodeId, out: &mut Gradients) -> Result<()> {
        if self.consumed {
            return Err(Error::Graph(
                "backward already ran on this graph; build a new one".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        self.accumulate(&mut grads, out, loss, |g| g[0] += 1.0);

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (r, k, c) = (av.rows(), av.cols(), bv.cols());
                    self.accumulate(&mut grads, out, *a, |g| {
                        matmul_nt_acc(&upstream, bv.data(), g, r, c, k)
                    });
                    self.accumulate(&mut grads, out, *b, |g| {
                        matmul_tn_acc(av.data(), &upstream, g, r, k, c)
                    });
                }
                Op::Add { a, b, broadcast } => {
                    self.accumulate(&mut grads, out, *a, |g| add_into(g, &upstream));
                    if *broadcast {
                        let c = node.value.cols();
                        self.accumulate(&mut grads, out, *b, |g| {
                            for (i, u) in upstream.iter().enumerate() {
                                g[i % c] += u;
                            }
                        });
                    } else {
                        self.accumulate(&mut grads, out, *b, |g| add_into(g, &upstream));
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.accumulate(&mut grads, out, *a, |g| {
                        for ((gi, u), y) in g.iter_mut().zip(&upstream).zip(bv.data()) {
                            *gi += u * y;
                        }
                    });
                    self.accumulate(&mut grads, out, *b, |g| {
                        for ((gi, u), x) in g.iter_mut().zip(&upstream).zip(av.data()) {
                            *gi += u * x;
                        }
                    });
                }
                Op::Concat { inputs, axis } => {
                    let out_cols = node.value.cols();
                    let mut offset = 0;
                    for id in inputs {
                        let v = self.value(*id);
                        if v.rank() == 1 || *axis == 0 {
                            let len = v.len();
                            self.accumulate(&mut grads, out, *id, |g| {
                                add_into(g, &upstream[offset..offset + len])
                            });
                            offset += len;
                        } else {
                            let c = v.cols();
                            self.accumulate(&mut grads, out, *id, |g| {
                                for r in 0..v.rows() {
                                    let src = &upstream[r * out_cols + offset..r * out_cols + offset + c];
                                    add_into(&mut g[r * c..(r + 1) * c], src);
                                }
                            });
                            offset += c;
                        }
                    }
                }
                Op::Slice {
                    input,
                    axis,
                    start,
                    end,
                } => {
                    let v = self.value(*input);
                    if v.rank() == 1 {
                        self.accumulate(&mut grads, out, *input, |g| {
                            add_into(&mut g[*start..*end], &upstream)
                        });
                    } else if *axis == 0 {
                        let c = v.cols();
                        self.accumulate(&mut grads, out, *input, |g| {
                            add_into(&mut g[start * c..end * c], &upstream)
                        });
                    } else {
                        let (c, w) = (v.cols(), end - start);
                        self.accumulate(&mut grads, out, *input, |g| {
                            for r in 0..v.rows() {
                                add_into(&mut g[r * c + start..r * c + end], &upstream[r * w..(r + 1) * w]);
                            }
                        });
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    self.accumulate(&mut grads, out, *x, |g| {
                        for ((gi, u), yi) in g.iter_mut().zip(&upstream).zip(y) {
                            *gi += u * (1.0 - yi * yi);
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    self.accumulate(&mut grads, out, *x, |g| {
                        for ((gi, u), yi) in g.iter_mut().zip(&upstream).zip(y) {
                            *gi += u * yi * (1.0 - yi);
                        }
                    });
                }
                Op::Exp(x) => {
                    let y = node.value.data();
                    self.accumulate(&mut grads, out, *x, |g| {
                        for ((gi, u), yi) in g.iter_mut().zip(&upstream).zip(y) {
                            *gi += u * yi;
                        }
                    });
                }
                Op::Log(x) => {
                    let xv = self.value(*x).data();
                    self.accumulate(&mut grads, out, *x, |g| {
                        for ((gi, u), xi) in g.iter_mut().zip(&upstream).zip(xv) {
                            *gi += u / xi;
                        }
                    });
                }
                Op::Sum(x) => {
                    let u = upstream[0];
                    self.accumulate(&mut grads, out, *x, |g| g.iter_mut().for_each(|gi| *gi += u));
                }
                Op::LogSumExp { input, axis } => {
                    let xv = self.value(*input);
                    let y = node.value.data();
                    let c = xv.cols();
                    self.accumulate(&mut grads, out, *input, |g| {
                        for (i, (gi, xi)) in g.iter_mut().zip(xv.data()).enumerate() {
                            // Output slot that entry i reduces into.
                            let o = match (xv.rank(), axis) {
                                (1, _) => 0,
                                (_, 1) => i / c,
                                _ => i % c,
                            };
                            if y[o] > f64::NEG_INFINITY && *xi > f64::NEG_INFINITY {
                                *gi += upstream[o] * (xi - y[o]).exp();
                            }
                        }
                    });
                }
                Op::Scale(x, c) => {
                    self.accumulate(&mut grads, out, *x, |g| {
                        for (gi, u) in g.iter_mut().zip(&upstream) {
                            *gi += c * u;
                        }
                    });
                }
                Op::Lookup { table, ids } => {
                    let c = node.value.cols();
                    self.accumulate(&mut grads, out, *table, |g| {
                        for (row, &id) in ids.iter().enumerate() {
                            add_into(&mut g[id * c..(id + 1) * c], &upstream[row * c..(row + 1) * c]);
                        }
                    });
                }
                Op::Gather { input, idx } => {
                    self.accumulate(&mut grads, out, *input, |g| {
                        for (&i, u) in idx.iter().zip(&upstream) {
                            g[i] += u;
                        }
                    });
                }
                Op::Transpose(x) => {
                    let t = Tensor::from_parts(node.value.shape().to_vec(), upstream.clone()).transpose();
                    self.accumulate(&mut grads, out, *x, |g| add_into(g, t.data()));
                }
                Op::Reshape(x) => {
                    self.accumulate(&mut grads, out, *x, |g| add_into(g, &upstream));
                }
                Op::ScalarFn { inputs, grads: local } => {
                    let u = upstream[0];
                    for (id, lg) in inputs.iter().zip(local) {
                        self.accumulate(&mut grads, out, *id, |g| {
                            for (gi, l) in g.iter_mut().zip(lg.data()) {
                                *gi += u * l;
                            }
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        out: &mut Gradients,
        target: NodeId,
        f: impl FnOnce(&mut [f64]),
    ) {
        let node = &self.nodes[target.0];
        if !node.requires_grad {
            return;
        }
        let len = node.value.len();
        match &node.op {
            Op::Param(name) => f(out.buffer_mut(name, len)),
            _ => f(grads[target.0].get_or_insert_with(|| vec![0.0; len])),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
