//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and [`Graph::backward`] walks it in reverse exactly once.
//! A fresh graph is built for every forward pass; recurrent models simply
//! append one set of nodes per unrolled step.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    },
    ConvTranspose1d {
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    },
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    MeanLast(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvTranspose1d { .. } => "conv1d_transpose",
            Op::MatMul(..) => "matmul",
            Op::MatVec(..) => "matvec",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Affine(..) => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Ln(_) => "ln",
            Op::Clamp(..) => "clamp",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumSquares(_) => "sum_squares",
            Op::MeanLast(_) => "mean_last",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Output length of a strided, zero-padded 1-D convolution.
pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || len + 2 * padding < kernel {
        return None;
    }
    Some((len + 2 * padding - kernel) / stride + 1)
}

/// Output length of a transposed 1-D convolution.
pub fn conv1d_transpose_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let full = (len - 1) * stride + kernel + output_padding;
    if stride == 0 || output_padding >= stride.max(1) || full <= 2 * padding {
        return None;
    }
    Some(full - 2 * padding)
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                op.name()
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(format!("{op}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    /// Cross-correlation of `input` (`c_in × t`) with `kernel` (`c_out × c_in × k`).
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ks) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if xs.len() != 2 || ks.len() != 3 {
            return Err(Error::dim(format!(
                "conv1d expects input c_in×t and kernel c_out×c_in×k, got {xs:?} and {ks:?}"
            )));
        }
        let (cin, t) = (xs[0], xs[1]);
        let (cout, kcin, kw) = (ks[0], ks[1], ks[2]);
        if kcin != cin {
            return Err(Error::dim(format!(
                "conv1d kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        let tout = conv1d_output_len(t, kw, stride, padding).ok_or_else(|| {
            Error::dim(format!(
                "conv1d: length {t} with padding {padding} is shorter than kernel {kw} (stride {stride})"
            ))
        })?;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let col = im2col(x, cin, t, kw, stride, padding, tout);
        let mut out = vec![0.0; cout * tout];
        gemm_nn(k, &col, &mut out, cout, cin * kw, tout);
        let value = Tensor::from_parts(vec![cout, tout], out);
        self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                stride,
                padding,
            },
            &[input, kernel],
        )
    }

    /// Transposed convolution: the adjoint of [`Graph::conv1d`] with respect to its input.
    ///
    /// `kernel` is `c_in × c_out × k`; output length is `(t − 1)·stride − 2·padding + k`.
    pub fn conv1d_transpose(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        self.conv1d_transpose_padded(input, kernel, stride, padding, 0)
    }

    /// [`Graph::conv1d_transpose`] with `output_padding` extra samples appended on the right,
    /// which selects among the input lengths a strided convolution maps to the same output length.
    pub fn conv1d_transpose_padded(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (xs, ks) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if xs.len() != 2 || ks.len() != 3 {
            return Err(Error::dim(format!(
                "conv1d_transpose expects input c_in×t and kernel c_in×c_out×k, got {xs:?} and {ks:?}"
            )));
        }
        let (cin, t) = (xs[0], xs[1]);
        let (kcin, cout, kw) = (ks[0], ks[1], ks[2]);
        if kcin != cin {
            return Err(Error::dim(format!(
                "conv1d_transpose kernel expects {kcin} input channels, input has {cin}"
            )));
        }
        let tout = conv1d_transpose_output_len(t, kw, stride, padding, output_padding)
            .ok_or_else(|| {
                Error::dim(format!(
                    "conv1d_transpose: invalid configuration (t={t}, k={kw}, stride={stride}, padding={padding}, output_padding={output_padding})"
                ))
            })?;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let mut col = vec![0.0; cout * kw * t];
        gemm_tn(k, x, &mut col, cin, cout * kw, t);
        let mut out = vec![0.0; cout * tout];
        col2im_add(&col, cout, tout, kw, stride, padding, t, &mut out);
        let value = Tensor::from_parts(vec![cout, tout], out);
        self.push(
            value,
            Op::ConvTranspose1d {
                input,
                kernel,
                stride,
                padding,
            },
            &[input, kernel],
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul: incompatible shapes {sa:?} and {sb:?}")));
        }
        let (m, n, p) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for l in 0..n {
                let aval = av[i * n + l];
                let brow = &bv[l * p..(l + 1) * p];
                for (o, &bval) in out[i * p..(i + 1) * p].iter_mut().zip(brow) {
                    *o += aval * bval;
                }
            }
        }
        self.push(Tensor::from_parts(vec![m, p], out), Op::MatMul(a, b), &[a, b])
    }

    /// Matrix (`m × n`) times vector (`n`).
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m).to_vec(), self.shape(v).to_vec());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(Error::dim(format!("matvec: incompatible shapes {sm:?} and {sv:?}")));
        }
        let (rows, cols) = (sm[0], sm[1]);
        let (mv, vv) = (self.value(m).data(), self.value(v).data());
        let out = (0..rows)
            .map(|i| {
                mv[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(vv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        self.push(Tensor::from_parts(vec![rows], out), Op::MatVec(m, v), &[m, v])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        self.push(value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a per-channel bias (`c`) to every time step of `x` (`c × t`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sx[0] != sb[0] {
            return Err(Error::dim(format!("add_bias: shapes {sx:?} and {sb:?} differ")));
        }
        let t = sx[1];
        let bv = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i / t])
            .collect();
        self.push(Tensor::from_parts(sx, data), Op::AddBias(x, bias), &[x, bias])
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine(x, scale), &[x])
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Result<Var> {
        self.affine(x, scale, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    /// Natural logarithm; non-positive inputs are a numeric error.
    pub fn ln(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::ln);
        self.push(value, Op::Ln(x), &[x])
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::Parameter(format!("clamp bounds {lo} > {hi}")));
        }
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(x, lo, hi), &[x])
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::dim(format!(
                    "concat: trailing shape {:?} differs from {tail:?}",
                    &s[1..]
                )));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec()), parts)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::dim(format!(
                "slice {start}..{end} on axis {axis} out of range for shape {shape:?}"
            )));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let width = end - start;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            data.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = width;
        self.push(
            Tensor::from_parts(out_shape, data),
            Op::Slice {
                input: x,
                axis,
                start,
            },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        self.push(value, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum_squares();
        self.push(Tensor::scalar(s), Op::SumSquares(x), &[x])
    }

    /// Mean over the last axis: `c × t` becomes `c`.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let t = *shape.last().expect("tensors have rank >= 1");
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(t)
            .map(|row| row.iter().sum::<f64>() / t as f64)
            .collect();
        let out_shape = if shape.len() > 1 {
            shape[..shape.len() - 1].to_vec()
        } else {
            vec![1]
        };
        self.push(Tensor::from_parts(out_shape, data), Op::MeanLast(x), &[x])
    }

    /// Populates gradients of the scalar `loss` on every ancestor that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let Some(g) = g {
                node.grad = Some(Tensor::from_parts(node.value.shape().to_vec(), g));
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        macro_rules! with_grad {
            ($v:expr, |$buf:ident| $body:expr) => {
                if let Some($buf) = grad_buffer(grads, nodes, $v) {
                    $body
                }
            };
        }

        match &node.op {
            Op::Leaf => {}
            &Op::Conv1d {
                input,
                kernel,
                stride,
                padding,
            } => {
                let (cin, t) = (self.shape(input)[0], self.shape(input)[1]);
                let ks = self.shape(kernel);
                let (cout, kw) = (ks[0], ks[2]);
                let tout = node.value.shape()[1];
                let x = self.value(input).data();
                let k = self.value(kernel).data();
                with_grad!(input, |dx| {
                    let mut dcol = vec![0.0; cin * kw * tout];
                    gemm_tn(k, g, &mut dcol, cout, cin * kw, tout);
                    col2im_add(&dcol, cin, t, kw, stride, padding, tout, dx);
                });
                with_grad!(kernel, |dk| {
                    let col = im2col(x, cin, t, kw, stride, padding, tout);
                    gemm_nt(g, &col, dk, cout, tout, cin * kw);
                });
            }
            &Op::ConvTranspose1d {
                input,
                kernel,
                stride,
                padding,
            } => {
                let (cin, t) = (self.shape(input)[0], self.shape(input)[1]);
                let ks = self.shape(kernel);
                let (cout, kw) = (ks[1], ks[2]);
                let tout = node.value.shape()[1];
                let x = self.value(input).data();
                let k = self.value(kernel).data();
                with_grad!(input, |dx| {
                    let gcol = im2col(g, cout, tout, kw, stride, padding, t);
                    gemm_nn(k, &gcol, dx, cin, cout * kw, t);
                });
                with_grad!(kernel, |dk| {
                    let gcol = im2col(g, cout, tout, kw, stride, padding, t);
                    gemm_nt(x, &gcol, dk, cin, t, cout * kw);
                });
            }
            &Op::MatMul(a, b) => {
                let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
                let p = self.shape(b)[1];
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                with_grad!(a, |da| {
                    for i in 0..m {
                        for l in 0..n {
                            let mut acc = 0.0;
                            for j in 0..p {
                                acc += g[i * p + j] * bv[l * p + j];
                            }
                            da[i * n + l] += acc;
                        }
                    }
                });
                with_grad!(b, |db| {
                    for i in 0..m {
                        for l in 0..n {
                            let aval = av[i * n + l];
                            for j in 0..p {
                                db[l * p + j] += aval * g[i * p + j];
                            }
                        }
                    }
                });
            }
            &Op::MatVec(m, v) => {
                let cols = self.shape(m)[1];
                let (mv, vv) = (self.value(m).data(), self.value(v).data());
                with_grad!(m, |dm| {
                    for (i, &gi) in g.iter().enumerate() {
                        for (d, &x) in dm[i * cols..(i + 1) * cols].iter_mut().zip(vv) {
                            *d += gi * x;
                        }
                    }
                });
                with_grad!(v, |dv| {
                    for (i, &gi) in g.iter().enumerate() {
                        for (d, &w) in dv.iter_mut().zip(&mv[i * cols..(i + 1) * cols]) {
                            *d += gi * w;
                        }
                    }
                });
            }
            &Op::Add(a, b) => {
                with_grad!(a, |da| add_into(da, g));
                with_grad!(b, |db| add_into(db, g));
            }
            &Op::Sub(a, b) => {
                with_grad!(a, |da| add_into(da, g));
                with_grad!(b, |db| {
                    for (d, &gi) in db.iter_mut().zip(g) {
                        *d -= gi;
                    }
                });
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                with_grad!(a, |da| {
                    for ((d, &gi), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * y;
                    }
                });
                with_grad!(b, |db| {
                    for ((d, &gi), &x) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * x;
                    }
                });
            }
            &Op::AddBias(x, bias) => {
                let t = self.shape(x)[1];
                with_grad!(x, |dx| add_into(dx, g));
                with_grad!(bias, |db| {
                    for (d, row) in db.iter_mut().zip(g.chunks(t)) {
                        *d += row.iter().sum::<f64>();
                    }
                });
            }
            &Op::Affine(x, scale) => {
                with_grad!(x, |dx| {
                    for (d, &gi) in dx.iter_mut().zip(g) {
                        *d += scale * gi;
                    }
                });
            }
            &Op::Sigmoid(x) => {
                let y = node.value.data();
                with_grad!(x, |dx| {
                    for ((d, &gi), &s) in dx.iter_mut().zip(g).zip(y) {
                        *d += gi * s * (1.0 - s);
                    }
                });
            }
            &Op::Tanh(x) => {
                let y = node.value.data();
                with_grad!(x, |dx| {
                    for ((d, &gi), &th) in dx.iter_mut().zip(g).zip(y) {
                        *d += gi * (1.0 - th * th);
                    }
                });
            }
            &Op::Relu(x) => {
                let xv = self.value(x).data();
                with_grad!(x, |dx| {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            &Op::Ln(x) => {
                let xv = self.value(x).data();
                with_grad!(x, |dx| {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gi / v;
                    }
                });
            }
            &Op::Clamp(x, lo, hi) => {
                let xv = self.value(x).data();
                with_grad!(x, |dx| {
                    for ((d, &gi), &v) in dx.iter_mut().zip(g).zip(xv) {
                        if v > lo && v < hi {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    with_grad!(p, |dp| add_into(dp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            &Op::Slice { input, axis, start } => {
                let shape = self.shape(input);
                let (outer, dim, inner) = split_axis(shape, axis);
                let width = node.value.shape()[axis];
                with_grad!(input, |dx| {
                    for o in 0..outer {
                        let dst = o * dim * inner + start * inner;
                        let src = o * width * inner;
                        add_into(&mut dx[dst..dst + width * inner], &g[src..src + width * inner]);
                    }
                });
            }
            &Op::Reshape(x) => {
                with_grad!(x, |dx| add_into(dx, g));
            }
            &Op::Sum(x) => {
                with_grad!(x, |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
            &Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                with_grad!(x, |dx| {
                    for d in dx.iter_mut() {
                        *d += g[0] / n;
                    }
                });
            }
            &Op::SumSquares(x) => {
                let xv = self.value(x).data();
                with_grad!(x, |dx| {
                    for (d, &v) in dx.iter_mut().zip(xv) {
                        *d += 2.0 * v * g[0];
                    }
                });
            }
            &Op::MeanLast(x) => {
                let t = *self.shape(x).last().expect("rank >= 1");
                with_grad!(x, |dx| {
                    for (row, &gi) in dx.chunks_mut(t).zip(g) {
                        for d in row {
                            *d += gi / t as f64;
                        }
                    }
                });
            }
        }
    }
}

/// Zero-initialised accumulation buffer for `v`, or `None` when `v` needs no gradient.
fn grad_buffer<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

/// Taps `lo..hi` of a `kw`-wide kernel placed at `base` that land inside `0..len`.
fn tap_range(base: isize, kw: usize, len: usize) -> (usize, usize) {
    let lo = (-base).clamp(0, kw as isize) as usize;
    let hi = (len as isize - base).clamp(lo as isize, kw as isize) as usize;
    (lo, hi)
}

/// `(c·kw) × positions` patch matrix: row `c·kw + j`, column `p` holds
/// `x[c, p·stride + j − padding]`, zero outside the signal.
fn im2col(x: &[f64], channels: usize, len: usize, kw: usize, stride: usize, padding: usize, positions: usize) -> Vec<f64> {
    let mut col = vec![0.0; channels * kw * positions];
    for c in 0..channels {
        let xrow = &x[c * len..(c + 1) * len];
        for p in 0..positions {
            let base = (p * stride) as isize - padding as isize;
            let (lo, hi) = tap_range(base, kw, len);
            for j in lo..hi {
                col[(c * kw + j) * positions + p] = xrow[(base + j as isize) as usize];
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch rows back onto `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im_add(col: &[f64], channels: usize, len: usize, kw: usize, stride: usize, padding: usize, positions: usize, dst: &mut [f64]) {
    for c in 0..channels {
        let drow = &mut dst[c * len..(c + 1) * len];
        for p in 0..positions {
            let base = (p * stride) as isize - padding as isize;
            let (lo, hi) = tap_range(base, kw, len);
            for j in lo..hi {
                drow[(base + j as isize) as usize] += col[(c * kw + j) * positions + p];
            }
        }
    }
}

/// `c += a·b` with `a: m×k`, `b: k×n`.
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            if av != 0.0 {
                for (cv, bv) in crow.iter_mut().zip(&b[l * n..(l + 1) * n]) {
                    *cv += av * bv;
                }
            }
        }
    }
}

/// `c += aᵀ·b` with `a: k×m`, `b: k×n`.
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    for l in 0..k {
        let brow = &b[l * n..(l + 1) * n];
        for i in 0..m {
            let av = a[l * m + i];
            if av != 0.0 {
                for (cv, bv) in c[i * n..(i + 1) * n].iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            }
        }
    }
}

/// `c += a·bᵀ` with `a: m×k`, `b: n×k`.
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += arow.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
