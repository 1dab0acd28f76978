use alloc::vec::Vec;

use super::ops::{self, check_probability, dropout_mask, gelu_grad};
use super::{ParamId, ParamStore, Real, Tensor, TensorError};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    Gelu(NodeId),
    Tanh(NodeId),
    Dropout(NodeId, Vec<T>),
    Embedding(NodeId, Vec<u32>),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    SelectRow(NodeId, usize),
    StackRows(Vec<NodeId>),
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    Sum(NodeId),
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

/// A recording tape over a read-only parameter store.
///
/// Nodes are appended in evaluation order, so reverse creation order is a
/// valid topological order for the backward sweep. Dropout masks are drawn
/// from a ChaCha8 stream seeded at construction.
pub struct Graph<'s, T> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
    rng: Rng,
}

impl<'s, T: Real> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>, seed: u64) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: alloc::vec![None; store.len()],
            rng: rng_for(seed, &[0x7A9E]),
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.store.value(*p),
            (_, Some(v)) => v,
            (_, None) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(
        &mut self,
        op: Op<T>,
        value: Tensor<T>,
        name: &'static str,
    ) -> Result<NodeId, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId, TensorError> {
        self.push(Op::Input, value, "input")
    }

    /// Node for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::transpose(self.value(a))?;
        self.push(Op::Transpose(a), v, "transpose")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::add(self.value(a), self.value(b))?;
        self.push(Op::Add(a, b), v, "add")
    }

    /// `x + row` with `row` broadcast over every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::bias_add(self.value(x), self.value(row))?;
        self.push(Op::AddRow(x, row), v, "bias_add")
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, TensorError> {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v, "scale")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let rank = self.value(a).shape().len().max(1);
        let v = ops::softmax(self.value(a), rank - 1)?;
        self.push(Op::Softmax(a), v, "softmax")
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: T,
    ) -> Result<NodeId, TensorError> {
        let out = ops::layer_norm_full(self.value(x), self.value(gain), self.value(bias), eps)?;
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat: out.xhat,
                inv_std: out.inv_std,
            },
            out.out,
            "layer_norm",
        )
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::gelu(self.value(a))?;
        self.push(Op::Gelu(a), v, "gelu")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = ops::tanh(self.value(a))?;
        self.push(Op::Tanh(a), v, "tanh")
    }

    /// Inverted dropout. In evaluation mode this returns `a` unchanged and
    /// consumes no randomness.
    pub fn dropout(&mut self, a: NodeId, p: f64, training: bool) -> Result<NodeId, TensorError> {
        check_probability(p)?;
        if !training || p == 0.0 {
            return Ok(a);
        }
        let mask: Vec<T> = dropout_mask(self.value(a).len(), p, &mut self.rng);
        let mut v = self.value(a).clone();
        for (o, &m) in v.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(Op::Dropout(a, mask), v, "dropout")
    }

    pub fn embedding(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId, TensorError> {
        let v = ops::embedding_lookup(self.value(table), ids)?;
        self.push(Op::Embedding(table, ids.to_vec()), v, "embedding_lookup")
    }

    pub fn slice_cols(
        &mut self,
        x: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let src = self.value(x);
        let (r, c) = src.dims2();
        if start + len > c {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                len: c,
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src.row(i)[start..start + len]);
        }
        let v = Tensor::new([r, len], out)?;
        self.push(Op::SliceCols { x, start }, v, "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).dims2().0)
            .ok_or(TensorError::EmptyBatch)?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new([rows, total], out)?;
        self.push(Op::ConcatCols(parts.to_vec()), v, "concat_cols")
    }

    /// Row `row` of a matrix as a `[1, cols]` matrix.
    pub fn select_row(&mut self, x: NodeId, row: usize) -> Result<NodeId, TensorError> {
        let (r, c) = self.value(x).dims2();
        if row >= r {
            return Err(TensorError::IndexOutOfRange {
                op: "select_row",
                index: row,
                len: r,
            });
        }
        let v = Tensor::new([1, c], self.value(x).row(row).to_vec())?;
        self.push(Op::SelectRow(x, row), v, "select_row")
    }

    /// Stack `[1, n]` (or `[n]`) nodes into a `[k, n]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, TensorError> {
        let width = rows
            .first()
            .map(|&r| self.value(r).len())
            .ok_or(TensorError::EmptyBatch)?;
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let v = self.value(r);
            if v.len() != width || v.dims2().0 != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    left: self.value(rows[0]).shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            out.extend_from_slice(v.data());
        }
        let v = Tensor::new([rows.len(), width], out)?;
        self.push(Op::StackRows(rows.to_vec()), v, "stack_rows")
    }

    /// Mean cross-entropy of `[batch, classes]` logits against class indices.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, TensorError> {
        let (loss, probs) = ops::cross_entropy_full(self.value(logits), labels)?;
        self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v, "sum")
    }

    /// Reverse sweep from a scalar `loss`. Returns the gradient of every
    /// parameter reachable from it; intermediate gradients are dropped.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::UnknownNode(loss.0));
        }
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(shape.to_vec(), T::one()));
        let mut out: Vec<Option<Tensor<T>>> = Vec::new();
        out.resize_with(self.store.len(), || None);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |target: NodeId, delta: Tensor<T>| accumulate(&mut grads, target, delta);
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(p) => {
                    out[p.0] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = ops::matmul(&as_matrix(&g), &ops::transpose(&as_matrix(vb))?)?;
                    let gb = ops::matmul(&ops::transpose(&as_matrix(va))?, &as_matrix(&g))?;
                    send(*a, ga.reshape(va.shape().to_vec())?);
                    send(*b, gb.reshape(vb.shape().to_vec())?);
                }
                Op::Transpose(a) => send(*a, ops::transpose(&g)?),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(x, row) => {
                    let (_, c) = g.dims2();
                    let mut gr = alloc::vec![T::zero(); c];
                    for r in g.data().chunks(c) {
                        for (acc, &v) in gr.iter_mut().zip(r) {
                            *acc += v;
                        }
                    }
                    send(*row, Tensor::new(self.value(*row).shape().to_vec(), gr)?);
                    send(*x, g);
                }
                Op::Scale(a, c) => send(*a, g.map(|v| v * *c)),
                Op::Softmax(a) => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax value");
                    let (_, c) = y.dims2();
                    let mut gx = g.clone();
                    for (gr, yr) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    send(*a, gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gamma = self.value(*gain);
                    let (_, c) = g.dims2();
                    let n = T::lit(c as f64);
                    let mut dgain = alloc::vec![T::zero(); c];
                    let mut dbias = alloc::vec![T::zero(); c];
                    let mut dx = g.clone();
                    for (i, (gr, hr)) in g.data().chunks(c).zip(xhat.data().chunks(c)).enumerate() {
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for j in 0..c {
                            dgain[j] += gr[j] * hr[j];
                            dbias[j] += gr[j];
                            let d = gr[j] * gamma.data()[j];
                            sum_d += d;
                            sum_dh += d * hr[j];
                        }
                        let row = &mut dx.data_mut()[i * c..(i + 1) * c];
                        for j in 0..c {
                            let d = gr[j] * gamma.data()[j];
                            row[j] = inv_std[i] / n * (n * d - sum_d - hr[j] * sum_dh);
                        }
                    }
                    send(*gain, Tensor::new(gamma.shape().to_vec(), dgain)?);
                    send(
                        *bias,
                        Tensor::new(self.value(*bias).shape().to_vec(), dbias)?,
                    );
                    send(*x, dx);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut gx = g;
                    for (gv, &xv) in gx.data_mut().iter_mut().zip(x.data()) {
                        *gv *= gelu_grad(xv);
                    }
                    send(*a, gx);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.as_ref().expect("tanh value");
                    let mut gx = g;
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        *gv *= T::one() - yv * yv;
                    }
                    send(*a, gx);
                }
                Op::Dropout(a, mask) => {
                    let mut gx = g;
                    for (gv, &m) in gx.data_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                    send(*a, gx);
                }
                Op::Embedding(table, ids) => {
                    let t = self.value(*table);
                    let (_, d) = t.dims2();
                    let mut gt = Tensor::zeros(t.shape().to_vec());
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id as usize * d..(id as usize + 1) * d];
                        for (acc, &v) in dst.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    send(*table, gt);
                }
                Op::SliceCols { x, start } => {
                    let src = self.value(*x);
                    let (r, c) = src.dims2();
                    let (_, len) = g.dims2();
                    let mut gx = Tensor::zeros(src.shape().to_vec());
                    for i in 0..r {
                        gx.data_mut()[i * c + start..i * c + start + len].copy_from_slice(g.row(i));
                    }
                    send(*x, gx);
                }
                Op::ConcatCols(parts) => {
                    let (r, _) = g.dims2();
                    let mut offset = 0;
                    for &p in parts {
                        let (_, c) = self.value(p).dims2();
                        let mut part = Vec::with_capacity(r * c);
                        for i in 0..r {
                            part.extend_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        offset += c;
                        send(p, Tensor::new(self.value(p).shape().to_vec(), part)?);
                    }
                }
                Op::SelectRow(x, row) => {
                    let src = self.value(*x);
                    let (_, c) = src.dims2();
                    let mut gx = Tensor::zeros(src.shape().to_vec());
                    gx.data_mut()[row * c..(row + 1) * c].copy_from_slice(g.data());
                    send(*x, gx);
                }
                Op::StackRows(rows) => {
                    for (i, &r) in rows.iter().enumerate() {
                        send(
                            r,
                            Tensor::new(self.value(r).shape().to_vec(), g.row(i).to_vec())?,
                        );
                    }
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let upstream = g.data()[0];
                    let (b, c) = probs.dims2();
                    let inv_b = upstream / T::lit(b as f64);
                    let mut gl = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        gl.data_mut()[i * c + y] -= T::one();
                    }
                    gl.data_mut().iter_mut().for_each(|v| *v *= inv_b);
                    send(*logits, gl);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    send(*a, Tensor::full(shape, g.data()[0]));
                }
            }
        }
        Ok(Gradients { grads: out })
    }
}

fn as_matrix<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let (r, c) = t.dims2();
    t.clone().reshape([r, c]).expect("same element count")
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], target: NodeId, delta: Tensor<T>) {
    match &mut grads[target.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, &[usize], &[f64])]) -> (ParamStore<f64>, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values
            .iter()
            .map(|(n, sh, v)| {
                s.add(*n, Tensor::from_f64(sh.to_vec(), v).unwrap())
                    .unwrap()
            })
            .collect();
        (s, ids)
    }

    #[test]
    fn sum_gives_all_ones() {
        let (s, ids) = store_with(&[("w", &[2, 3], &[1., -2., 3., 0.5, 0., 9.])]);
        let mut g = Graph::new(&s, 0);
        let w = g.param(ids[0]);
        let loss = g.sum(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(ids[0]).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cross_entropy_uniform_gradient() {
        let (s, ids) = store_with(&[("logits", &[1, 2], &[0., 0.])]);
        let mut g = Graph::new(&s, 0);
        let l = g.param(ids[0]);
        let loss = g.cross_entropy(l, &[0]).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(ids[0]).unwrap().data(), &[-0.5, 0.5]);
    }

    #[test]
    fn backward_errors() {
        let (s, ids) = store_with(&[("w", &[2], &[1., 2.])]);
        let mut g = Graph::new(&s, 0);
        let w = g.param(ids[0]);
        assert_eq!(g.backward(w), Err(TensorError::NotScalar(alloc::vec![2])));
        let empty = Graph::new(&s, 0);
        assert_eq!(empty.backward(NodeId(0)), Err(TensorError::UnknownNode(0)));
    }

    #[test]
    fn shared_parameter_accumulates() {
        // loss = sum(w + w) → grad 2
        let (s, ids) = store_with(&[("w", &[3], &[1., 2., 3.])]);
        let mut g = Graph::new(&s, 0);
        let w = g.param(ids[0]);
        let w2 = g.param(ids[0]);
        let y = g.add(w, w2).unwrap();
        let loss = g.sum(y).unwrap();
        let mut store = s.clone();
        store.accumulate(&g.backward(loss).unwrap());
        assert!(store.get(ids[0]).grad.data().iter().all(|&v| v == 2.0));
    }
}
