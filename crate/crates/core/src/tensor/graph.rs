use serde::{Deserialize, Serialize};

use super::{kernels, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Storage precision for activations recorded on a [`Graph`].
///
/// `F32` rounds every op output through `f32`; accumulation inside kernels stays 64-bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MeanRows(Var),
    /// Scalar-valued function of one input whose local gradient was computed up front.
    ScalarFn {
        x: Var,
        grad: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list is
/// already a topological order and backward is a single reverse sweep.
///
/// Gradients of leaves accumulate across [`Graph::backward`] calls until
/// [`Graph::zero_grad`] is called.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    precision: Precision,
    matmul_flops: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::with_precision(Precision::F64)
    }

    pub fn with_precision(precision: Precision) -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), precision, matmul_flops: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// 2·m·k·n summed over every matrix product recorded so far.
    pub fn matmul_flops(&self) -> u64 {
        self.matmul_flops
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, mut value: Tensor, op: Op, name: &'static str, inputs: &[Var]) -> Result<Var> {
        if self.precision == Precision::F32 {
            value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let rg = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        Ok(self.push_raw(value, op, rg))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} times {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.matmul_flops += 2 * (m * k * n) as u64;
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), "matmul", &[a, b])
    }

    /// a · bᵀ without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("{m}x{k} times ({n}x{k2})^T")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.matmul_flops += 2 * (m * k * n) as u64;
        self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), "matmul", &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a), "transpose", &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.dims(a), self.dims(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (m, n) = self.dims(a);
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        self.push(Tensor::matrix(m, n, data)?, op, name, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Adds a `1×n` row to every row of an `m×n` input.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(Error::shape("add_row", format!("{m}x{n} plus {:?}", self.dims(row))));
        }
        let r = self.value(row).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            for (x, b) in chunk.iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(a, row), "add_row", &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| c * x);
        self.push(t, Op::Scale(a, c), "scale", &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::AddScalar(a), "add_scalar", &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(t, Op::Relu(a), "relu", &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::exp);
        self.push(t, Op::Exp(a), "exp", &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if !src.all_finite() {
            return Err(Error::NonFinite { op: "softmax_rows" });
        }
        let (m, n) = (src.rows(), src.cols());
        let mut out = vec![0.0; m * n];
        kernels::softmax_rows(src.data(), &mut out, n);
        self.push(Tensor::matrix(m, n, out)?, Op::SoftmaxRows(a), "softmax_rows", &[a])
    }

    /// Per-row normalization to zero mean and unit variance, then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, d) = self.dims(x);
        if self.dims(gain) != (1, d) || self.dims(bias) != (1, d) {
            return Err(Error::shape(
                "layer_norm",
                format!("width {d} vs gain {:?} bias {:?}", self.dims(gain), self.dims(bias)),
            ));
        }
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; m * d];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for r in 0..m {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = g[c] * h + b[c];
            }
        }
        let op = Op::LayerNorm { x, gain, bias, xhat, inv_std };
        self.push(Tensor::matrix(m, d, out)?, op, "layer_norm", &[x, gain, bias])
    }

    /// Stacks inputs vertically (sequence concatenation).
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let n = self.dims(first).1;
        let mut data = Vec::new();
        for &p in parts {
            if self.dims(p).1 != n {
                return Err(Error::shape("concat_rows", "column counts differ"));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let m = data.len() / n;
        self.push(Tensor::matrix(m, n, data)?, Op::ConcatRows(parts.to_vec()), "concat_rows", parts)
    }

    /// Joins inputs side by side (feature concatenation).
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let m = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let n: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(m, n, data)?, Op::ConcatCols(parts.to_vec()), "concat_cols", parts)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start >= end || end > n {
            return Err(Error::shape("slice_cols", format!("range {start}..{end} of width {n}")));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&self.value(x).row(r)[start..end]);
        }
        self.push(Tensor::matrix(m, w, data)?, Op::SliceCols { x, start }, "slice_cols", &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(x).reshape(vec![rows, cols])?;
        self.push(t, Op::Reshape(x), "reshape", &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum", &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), "mean", &[x])
    }

    /// Column sums: `m×n → 1×n`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = t.cols();
        let mut out = vec![0.0; n];
        for row in t.data().chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        self.push(Tensor::row_vector(out)?, Op::SumRows(x), "sum_rows", &[x])
    }

    /// Column means: `m×n → 1×n`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let m = self.dims(x).0 as f64;
        let t = self.value(x);
        let n = t.cols();
        let mut out = vec![0.0; n];
        for row in t.data().chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= m);
        self.push(Tensor::row_vector(out)?, Op::MeanRows(x), "mean_rows", &[x])
    }

    /// Records a scalar function of `x` whose value and gradient w.r.t. `x` were
    /// computed outside the graph (e.g. the Cox partial likelihood).
    pub fn scalar_fn(&mut self, x: Var, value: f64, grad: Tensor, name: &'static str) -> Result<Var> {
        if grad.shape() != self.value(x).shape() {
            return Err(Error::shape(name, "gradient shape differs from input shape"));
        }
        self.push(Tensor::scalar(value), Op::ScalarFn { x, grad }, name, &[x])
    }

    /// Reverse sweep from a scalar root. Leaf gradients accumulate into the graph.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut work: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        work[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let Some(g) = work[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let acc = self.grads[id].get_or_insert_with(|| {
                    let v = &self.nodes[id].value;
                    Tensor::new(v.shape().to_vec(), vec![0.0; v.len()]).expect("leaf shape is valid")
                });
                for (a, x) in acc.data_mut().iter_mut().zip(&g) {
                    *a += x;
                }
                continue;
            }
            self.propagate(id, &g, &mut work);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], work: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[id].value;
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = work[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(buf);
        };
        let dims = |v: Var| (nodes[v.0].value.rows(), nodes[v.0].value.cols());
        let val = |v: Var| nodes[v.0].value.data();

        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(*a);
                let n = dims(*b).1;
                send(*a, &mut |buf| kernels::matmul_nt(g, val(*b), buf, m, n, k));
                send(*b, &mut |buf| kernels::matmul_tn(val(*a), g, buf, m, k, n));
            }
            Op::MatMulNt(a, b) => {
                // C = A Bᵀ: dA = dC B, dB = dCᵀ A
                let (m, k) = dims(*a);
                let n = dims(*b).0;
                send(*a, &mut |buf| kernels::matmul_nn(g, val(*b), buf, m, n, k));
                send(*b, &mut |buf| kernels::matmul_tn(g, val(*a), buf, m, n, k));
            }
            Op::Transpose(a) => {
                let (m, n) = dims(*a);
                send(*a, &mut |buf| {
                    for i in 0..m {
                        for j in 0..n {
                            buf[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                send(*a, &mut |buf| add_into(buf, g));
                send(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                send(*a, &mut |buf| add_into(buf, g));
                send(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(o, x)| *o -= x));
            }
            Op::Mul(a, b) => {
                send(*a, &mut |buf| {
                    for ((o, x), y) in buf.iter_mut().zip(g).zip(val(*b)) {
                        *o += x * y;
                    }
                });
                send(*b, &mut |buf| {
                    for ((o, x), y) in buf.iter_mut().zip(g).zip(val(*a)) {
                        *o += x * y;
                    }
                });
            }
            Op::AddRow(a, row) => {
                send(*a, &mut |buf| add_into(buf, g));
                let n = dims(*row).1;
                send(*row, &mut |buf| {
                    for chunk in g.chunks_exact(n) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::Scale(a, c) => send(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(o, x)| *o += c * x)),
            Op::AddScalar(a) | Op::Reshape(a) => send(*a, &mut |buf| add_into(buf, g)),
            Op::Relu(a) => send(*a, &mut |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a)) {
                    if *v > 0.0 {
                        *o += x;
                    }
                }
            }),
            Op::Exp(a) => send(*a, &mut |buf| {
                for ((o, x), y) in buf.iter_mut().zip(g).zip(out.data()) {
                    *o += x * y;
                }
            }),
            Op::SoftmaxRows(a) => {
                let n = dims(*a).1;
                send(*a, &mut |buf| {
                    for ((bo, go), yo) in buf.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(out.data().chunks_exact(n))
                    {
                        let dot: f64 = go.iter().zip(yo).map(|(a, b)| a * b).sum();
                        for ((o, gx), y) in bo.iter_mut().zip(go).zip(yo) {
                            *o += y * (gx - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let (m, d) = dims(*x);
                let gv = val(*gain);
                send(*x, &mut |buf| {
                    for r in 0..m {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for c in 0..d {
                            let dh = gr[c] * gv[c];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[c];
                        }
                        let scale = inv_std[r] / d as f64;
                        for c in 0..d {
                            let dh = gr[c] * gv[c];
                            buf[r * d + c] += scale * (d as f64 * dh - sum_dh - hr[c] * sum_dh_h);
                        }
                    }
                });
                send(*gain, &mut |buf| {
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for c in 0..d {
                            buf[c] += gr[c] * hr[c];
                        }
                    }
                });
                send(*bias, &mut |buf| {
                    for gr in g.chunks_exact(d) {
                        add_into(buf, gr);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    send(p, &mut |buf| add_into(buf, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut col = 0;
                for &p in parts {
                    let (m, w) = dims(p);
                    send(p, &mut |buf| {
                        for r in 0..m {
                            add_into(&mut buf[r * w..(r + 1) * w], &g[r * total + col..r * total + col + w]);
                        }
                    });
                    col += w;
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = dims(*x);
                let w = out.cols();
                send(*x, &mut |buf| {
                    for r in 0..m {
                        add_into(&mut buf[r * n + start..r * n + start + w], &g[r * w..(r + 1) * w]);
                    }
                });
            }
            Op::Sum(a) => send(*a, &mut |buf| buf.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                send(*a, &mut |buf| buf.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::SumRows(a) => {
                let n = dims(*a).1;
                send(*a, &mut |buf| buf.chunks_exact_mut(n).for_each(|chunk| add_into(chunk, g)));
            }
            Op::MeanRows(a) => {
                let (m, n) = dims(*a);
                send(*a, &mut |buf| {
                    for chunk in buf.chunks_exact_mut(n) {
                        for (o, x) in chunk.iter_mut().zip(g) {
                            *o += x / m as f64;
                        }
                    }
                });
            }
            Op::ScalarFn { x, grad } => {
                send(*x, &mut |buf| {
                    for (o, d) in buf.iter_mut().zip(grad.data()) {
                        *o += g[0] * d;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(t(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn product_rule_on_scalars() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.param(Tensor::scalar(-4.0));
        let p = g.mul(x, y).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), -4.0);
        assert_eq!(g.grad(y).unwrap().item(), 3.0);
    }

    #[test]
    fn backward_accumulates_until_reset() {
        let mut g = Graph::new();
        let x = g.param(t(1, 2, &[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0]);
        g.zero_grad();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(1, 2, &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_output_names_the_op() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1000.0));
        match g.exp(x) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "exp"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn softmax_closed_forms() {
        let mut g = Graph::new();
        let x = g.constant(t(2, 3, &[0.7, 0.7, 0.7, 0.0, 2f64.ln(), f64::NEG_INFINITY.max(-800.0)]));
        let y = g.softmax_rows(x).unwrap();
        let v = g.value(y);
        for c in 0..3 {
            assert!((v.get(0, c) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((v.get(1, 1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant() {
        let mut g = Graph::new();
        let raw = [0.3, -1.2, 2.5, 0.0, 4.0, -3.0];
        let a = g.constant(t(2, 3, &raw));
        let shifted: Vec<f64> = raw.iter().map(|v| v + 5.0).collect();
        let b = g.constant(t(2, 3, &shifted));
        let sa = g.softmax_rows(a).unwrap();
        let sb = g.softmax_rows(b).unwrap();
        assert!(g.value(sa).max_abs_diff(g.value(sb)) < 1e-12);
    }

    #[test]
    fn layer_norm_fixed_point_and_constant_row() {
        let mut g = Graph::new();
        // zero mean, unit (population) variance
        let x = g.constant(t(1, 4, &[1.0, -1.0, 1.0, -1.0]));
        let c = g.constant(t(1, 4, &[3.0; 4]));
        let gain = g.constant(t(1, 4, &[1.0; 4]));
        let bias = g.constant(t(1, 4, &[0.0; 4]));
        let y = g.layer_norm(x, gain, bias).unwrap();
        let z = g.layer_norm(c, gain, bias).unwrap();
        assert!(g.value(y).max_abs_diff(g.value(x)) < 1e-5 * 2.0);
        assert!(g.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_flop_count_is_2abc() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(3, 5));
        let b = g.constant(Tensor::zeros(5, 7));
        g.matmul(a, b).unwrap();
        assert_eq!(g.matmul_flops(), 2 * 3 * 5 * 7);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let p = g.mul(x, c).unwrap();
        g.backward(p).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().item(), 5.0);
    }

    #[test]
    fn f32_precision_rounds_outputs() {
        let mut g = Graph::with_precision(Precision::F32);
        let x = g.constant(Tensor::scalar(0.1));
        let y = g.scale(x, 1.0).unwrap();
        assert_eq!(g.value(y).item(), 0.1f32 as f64);
    }
}
