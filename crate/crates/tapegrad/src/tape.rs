//! Define-by-run gradient tape.
//!
//! A `Tape` is an append-only sequence of operation records. Node ids are
//! indices into that sequence, so every input of a node always refers to an
//! earlier node and reverse insertion order is a valid topological order for
//! the backward sweep. A tape and its ids are confined to one thread; batch
//! parallelism runs one tape per sample and merges gradients outside.
//!
//! All values are dense row-major `f64` tensors. Forward operations are pure
//! and deterministic: identical inputs produce bit-identical outputs.

use crate::error::Error;
use crate::ops;
use crate::tensor::{broadcast_shape, BroadcastMap, Tensor};

/// Handle to a node on a tape. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: VarId, b: VarId },
    Conv1d { input: VarId, kernel: VarId, stride: usize, padding: usize },
    Unary { kind: UnaryKind, x: VarId },
    Binary { kind: BinaryKind, a: VarId, b: VarId },
    Scale { x: VarId, c: f64 },
    Softmax { x: VarId, axis: usize },
    Concat { xs: Vec<VarId>, axis: usize },
    Slice { x: VarId, axis: usize, start: usize },
    Reshape { x: VarId },
    Transpose { x: VarId },
    Sum { x: VarId },
    GaussianKl { mu_q: VarId, logvar_q: VarId, mu_p: VarId, logvar_p: VarId },
    CrossEntropyLogits { logits: VarId, target: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul { .. } => "matmul",
            Op::Conv1d { .. } => "conv1d",
            Op::Unary { kind: UnaryKind::Sigmoid, .. } => "sigmoid",
            Op::Unary { kind: UnaryKind::Tanh, .. } => "tanh",
            Op::Unary { kind: UnaryKind::Relu, .. } => "relu",
            Op::Unary { kind: UnaryKind::Exp, .. } => "exp",
            Op::Unary { kind: UnaryKind::Log, .. } => "log",
            Op::Binary { kind: BinaryKind::Add, .. } => "add",
            Op::Binary { kind: BinaryKind::Sub, .. } => "sub",
            Op::Binary { kind: BinaryKind::Mul, .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Softmax { .. } => "softmax",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Transpose { .. } => "transpose",
            Op::Sum { .. } => "sum",
            Op::GaussianKl { .. } => "gaussian_kl",
            Op::CrossEntropyLogits { .. } => "cross_entropy_logits",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation graph with reverse-mode gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input; gradients do not flow into it.
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(Op::Leaf, value, false)
    }

    /// Records a trainable input; `grad` is populated by `backward`.
    pub fn param(&mut self, value: Tensor) -> VarId {
        self.push(Op::Leaf, value, true)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: VarId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: VarId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last `backward` target w.r.t. this node, if any flowed.
    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Drops all gradient buffers, keeping values intact.
    pub fn clear_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// First node, in insertion order, whose value holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.all_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> VarId {
        // Topological invariant: every input id precedes the node it feeds.
        if cfg!(debug_assertions) {
            for input in op_inputs(&op) {
                debug_assert!(input.0 < self.nodes.len(), "op input must precede node");
            }
        }
        self.nodes.push(Node { op, value, requires_grad });
        self.grads.push(None);
        VarId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[VarId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── forward operations ──────────────────────────────────────────────

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId, Error> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        ops::matmul(self.value(a).data(), self.value(b).data(), m, k, n, out.data_mut());
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Matmul { a, b }, out, rg))
    }

    /// 1-D cross-correlation of `[c_in, time]` with kernels `[c_out, c_in, width]`.
    ///
    /// No kernel flip is applied. `padding` zero-pads both ends of the time
    /// axis; output length is `(time + 2 padding - width) / stride + 1`.
    pub fn conv1d(
        &mut self,
        input: VarId,
        kernel: VarId,
        stride: usize,
        padding: usize,
    ) -> Result<VarId, Error> {
        let (si, sk) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if si.len() != 2 || sk.len() != 3 || sk[1] != si[0] {
            return Err(Error::ShapeMismatch { op: "conv1d", lhs: si, rhs: sk });
        }
        let (c_in, time) = (si[0], si[1]);
        let (c_out, width) = (sk[0], sk[2]);
        if stride == 0 {
            return Err(Error::Invalid { op: "conv1d", msg: "stride must be >= 1".into() });
        }
        if width == 0 || time + 2 * padding < width {
            return Err(Error::Invalid {
                op: "conv1d",
                msg: format!("kernel width {} exceeds padded length {}", width, time + 2 * padding),
            });
        }
        let out_len = ops::conv1d_out_len(time, width, stride, padding);
        let mut out = Tensor::zeros(&[c_out, out_len]);
        ops::conv1d(
            self.value(input).data(),
            self.value(kernel).data(),
            c_in,
            time,
            c_out,
            width,
            stride,
            padding,
            out.data_mut(),
        );
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(Op::Conv1d { input, kernel, stride, padding }, out, rg))
    }

    fn unary(&mut self, kind: UnaryKind, x: VarId) -> VarId {
        let v = self.value(x);
        let data: Vec<f64> = match kind {
            UnaryKind::Sigmoid => v.data().iter().map(|&a| ops::sigmoid(a)).collect(),
            UnaryKind::Tanh => v.data().iter().map(|&a| a.tanh()).collect(),
            UnaryKind::Relu => v.data().iter().map(|&a| a.max(0.0)).collect(),
            UnaryKind::Exp => v.data().iter().map(|&a| ops::exp_guarded(a)).collect(),
            UnaryKind::Log => v.data().iter().map(|&a| a.max(ops::LOG_EPS).ln()).collect(),
        };
        let out = Tensor::from_vec(v.shape().to_vec(), data).expect("unary preserves shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(Op::Unary { kind, x }, out, rg)
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        self.unary(UnaryKind::Relu, x)
    }

    /// Exponential with the argument clamped to the finite range of `exp`.
    pub fn exp(&mut self, x: VarId) -> VarId {
        self.unary(UnaryKind::Exp, x)
    }

    /// Natural log with the argument floored at 1e-12.
    pub fn log(&mut self, x: VarId) -> VarId {
        self.unary(UnaryKind::Log, x)
    }

    fn binary(&mut self, kind: BinaryKind, a: VarId, b: VarId) -> Result<VarId, Error> {
        let op_name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let out_shape = broadcast_shape(op_name, self.shape(a), self.shape(b))?;
        let map_a = BroadcastMap::new(&out_shape, self.shape(a));
        let map_b = BroadcastMap::new(&out_shape, self.shape(b));
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let numel: usize = out_shape.iter().product();
        let mut data = vec![0.0; numel];
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        if map_a.is_identity() && map_b.is_identity() {
            for (i, d) in data.iter_mut().enumerate() {
                *d = f(da[i], db[i]);
            }
        } else {
            for (i, d) in data.iter_mut().enumerate() {
                *d = f(da[map_a.map(i)], db[map_b.map(i)]);
            }
        }
        let out = Tensor::from_vec(out_shape, data).expect("broadcast shape matches buffer");
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Binary { kind, a, b }, out, rg))
    }

    /// Elementwise sum with broadcasting over singleton dimensions.
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, Error> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, Error> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, Error> {
        self.binary(BinaryKind::Mul, a, b)
    }

    /// Multiplication by a compile-time constant; the constant gets no grad.
    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        let v = self.value(x);
        let data: Vec<f64> = v.data().iter().map(|&a| c * a).collect();
        let out = Tensor::from_vec(v.shape().to_vec(), data).expect("scale preserves shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(Op::Scale { x, c }, out, rg)
    }

    /// Max-subtracted softmax along `axis`; each lane sums to 1.
    pub fn softmax(&mut self, x: VarId, axis: usize) -> Result<VarId, Error> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Invalid {
                op: "softmax",
                msg: format!("axis {} out of range for shape {:?}", axis, shape),
            });
        }
        let mut out = Tensor::zeros(&shape);
        ops::softmax(self.value(x).data(), &shape, axis, out.data_mut());
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::Softmax { x, axis }, out, rg))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[VarId], axis: usize) -> Result<VarId, Error> {
        if xs.is_empty() {
            return Err(Error::Invalid { op: "concat", msg: "empty input list".into() });
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::Invalid {
                op: "concat",
                msg: format!("axis {} out of range for shape {:?}", axis, first),
            });
        }
        let mut axis_total = 0usize;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let out_row = axis_total * inner;
        let numel: usize = out_shape.iter().product();
        let mut data = vec![0.0; numel];
        let mut offset = 0usize;
        for &x in xs {
            let dim = self.shape(x)[axis];
            let in_row = dim * inner;
            let src = self.value(x).data();
            for o in 0..outer {
                let dst = o * out_row + offset * inner;
                data[dst..dst + in_row].copy_from_slice(&src[o * in_row..(o + 1) * in_row]);
            }
            offset += dim;
        }
        let out = Tensor::from_vec(out_shape, data).expect("concat shape matches buffer");
        let rg = self.any_grad(xs);
        Ok(self.push(Op::Concat { xs: xs.to_vec(), axis }, out, rg))
    }

    /// Contiguous sub-range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: VarId, axis: usize, start: usize, len: usize) -> Result<VarId, Error> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Invalid {
                op: "slice",
                msg: format!("range {}..{} on axis {} of shape {:?}", start, start + len, axis, shape),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let in_row = shape[axis] * inner;
        let out_row = len * inner;
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * out_row];
        for o in 0..outer {
            let s = o * in_row + start * inner;
            data[o * out_row..(o + 1) * out_row].copy_from_slice(&src[s..s + out_row]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::from_vec(out_shape, data).expect("slice shape matches buffer");
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::Slice { x, axis, start }, out, rg))
    }

    /// Same data, new shape; element counts must match.
    pub fn reshape(&mut self, x: VarId, shape: &[usize]) -> Result<VarId, Error> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = Tensor::from_vec(shape.to_vec(), self.value(x).data().to_vec())
            .expect("reshape checked element count");
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::Reshape { x }, out, rg))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: VarId) -> Result<VarId, Error> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::Invalid {
                op: "transpose",
                msg: format!("expected rank 2, got shape {:?}", shape),
            });
        }
        let (m, n) = (shape[0], shape[1]);
        let src = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let out = Tensor::from_vec(vec![n, m], data).expect("transpose shape matches buffer");
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Op::Transpose { x }, out, rg))
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, x: VarId) -> VarId {
        let total: f64 = self.value(x).data().iter().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Op::Sum { x }, Tensor::scalar(total), rg)
    }

    /// Closed-form KL divergence between diagonal Gaussians, summed over
    /// elements:
    ///
    /// `0.5 * sum(logvar_p - logvar_q + (var_q + (mu_q - mu_p)^2) / var_p - 1)`
    ///
    /// Non-negative up to rounding; exactly zero when the two parameter sets
    /// are element-wise equal.
    pub fn gaussian_kl(
        &mut self,
        mu_q: VarId,
        logvar_q: VarId,
        mu_p: VarId,
        logvar_p: VarId,
    ) -> Result<VarId, Error> {
        let shape = self.shape(mu_q).to_vec();
        for &id in &[logvar_q, mu_p, logvar_p] {
            if self.shape(id) != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "gaussian_kl",
                    lhs: shape,
                    rhs: self.shape(id).to_vec(),
                });
            }
        }
        let mq = self.value(mu_q).data();
        let lq = self.value(logvar_q).data();
        let mp = self.value(mu_p).data();
        let lp = self.value(logvar_p).data();
        let mut total = 0.0;
        for i in 0..mq.len() {
            let vq = ops::exp_guarded(lq[i]);
            let vp = ops::exp_guarded(lp[i]);
            let d = mq[i] - mp[i];
            total += 0.5 * (lp[i] - lq[i] + (vq + d * d) / vp - 1.0);
        }
        let rg = self.any_grad(&[mu_q, logvar_q, mu_p, logvar_p]);
        Ok(self.push(Op::GaussianKl { mu_q, logvar_q, mu_p, logvar_p }, Tensor::scalar(total), rg))
    }

    /// Numerically stable cross-entropy of softmax(logits) against a class
    /// index: `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy_logits(&mut self, logits: VarId, target: usize) -> Result<VarId, Error> {
        let n = self.value(logits).numel();
        if target >= n {
            return Err(Error::Invalid {
                op: "cross_entropy_logits",
                msg: format!("target {} out of range for {} classes", target, n),
            });
        }
        let x = self.value(logits).data();
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let rg = self.nodes[logits.0].requires_grad;
        Ok(self.push(
            Op::CrossEntropyLogits { logits, target },
            Tensor::scalar(lse - x[target]),
            rg,
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Visits nodes exactly once in reverse insertion order and accumulates
    /// (`+=`) gradients, so inputs shared by several consumers receive the sum
    /// of their contributions. Gradients remain readable via `grad` until the
    /// next `clear_grads`.
    pub fn backward(&mut self, loss: VarId) -> Result<(), Error> {
        if self.nodes.is_empty() {
            return Err(Error::Invalid { op: "backward", msg: "empty graph".into() });
        }
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss { shape: shape.to_vec() });
        }
        self.clear_grads();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = self.grads[i].take().expect("checked above");
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Ensures a zeroed gradient buffer exists for `id` and returns it.
    fn grad_buf(&mut self, id: VarId) -> &mut Tensor {
        let shape = self.nodes[id.0].value.shape().to_vec();
        self.grads[id.0].get_or_insert_with(|| Tensor::zeros(&shape))
    }

    fn wants_grad(&self, id: VarId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&mut self, node: usize, g: &Tensor) {
        let op = self.nodes[node].op.clone();
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let sa = self.shape(a).to_vec();
                let sb = self.shape(b).to_vec();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants_grad(a) {
                    let bv = self.value(b).data().to_vec();
                    ops::matmul_acc_nt(g.data(), &bv, m, k, n, self.grad_buf(a).data_mut());
                }
                if self.wants_grad(b) {
                    let av = self.value(a).data().to_vec();
                    ops::matmul_acc_tn(&av, g.data(), m, k, n, self.grad_buf(b).data_mut());
                }
            }
            Op::Conv1d { input, kernel, stride, padding } => {
                let si = self.shape(input).to_vec();
                let sk = self.shape(kernel).to_vec();
                let (c_in, time, c_out, width) = (si[0], si[1], sk[0], sk[2]);
                let iv = self.value(input).data().to_vec();
                let kv = self.value(kernel).data().to_vec();
                let want_i = self.wants_grad(input);
                let want_k = self.wants_grad(kernel);
                let mut di = want_i.then(|| std::mem::take(self.grad_buf(input)));
                let mut dk = want_k.then(|| std::mem::take(self.grad_buf(kernel)));
                ops::conv1d_backward(
                    &iv,
                    &kv,
                    g.data(),
                    c_in,
                    time,
                    c_out,
                    width,
                    stride,
                    padding,
                    di.as_mut().map(|t| t.data_mut()),
                    dk.as_mut().map(|t| t.data_mut()),
                );
                if let Some(t) = di {
                    self.grads[input.0] = Some(t);
                }
                if let Some(t) = dk {
                    self.grads[kernel.0] = Some(t);
                }
            }
            Op::Unary { kind, x } => {
                if !self.wants_grad(x) {
                    return;
                }
                let xv = self.value(x).data().to_vec();
                let yv = self.nodes[node].value.data().to_vec();
                let dst = self.grad_buf(x).data_mut();
                for i in 0..xv.len() {
                    let d = match kind {
                        UnaryKind::Sigmoid => yv[i] * (1.0 - yv[i]),
                        UnaryKind::Tanh => 1.0 - yv[i] * yv[i],
                        UnaryKind::Relu => {
                            if xv[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        UnaryKind::Exp => {
                            if xv[i].abs() <= ops::EXP_CLAMP {
                                yv[i]
                            } else {
                                0.0
                            }
                        }
                        UnaryKind::Log => {
                            if xv[i] > ops::LOG_EPS {
                                1.0 / xv[i]
                            } else {
                                0.0
                            }
                        }
                    };
                    dst[i] += g.data()[i] * d;
                }
            }
            Op::Binary { kind, a, b } => {
                let out_shape = self.nodes[node].value.shape().to_vec();
                let map_a = BroadcastMap::new(&out_shape, self.shape(a));
                let map_b = BroadcastMap::new(&out_shape, self.shape(b));
                match kind {
                    BinaryKind::Add | BinaryKind::Sub => {
                        let sign = if kind == BinaryKind::Sub { -1.0 } else { 1.0 };
                        if self.wants_grad(a) {
                            let dst = self.grad_buf(a).data_mut();
                            for (i, gv) in g.data().iter().enumerate() {
                                dst[map_a.map(i)] += gv;
                            }
                        }
                        if self.wants_grad(b) {
                            let dst = self.grad_buf(b).data_mut();
                            for (i, gv) in g.data().iter().enumerate() {
                                dst[map_b.map(i)] += sign * gv;
                            }
                        }
                    }
                    BinaryKind::Mul => {
                        if self.wants_grad(a) {
                            let bv = self.value(b).data().to_vec();
                            let dst = self.grad_buf(a).data_mut();
                            for (i, gv) in g.data().iter().enumerate() {
                                dst[map_a.map(i)] += gv * bv[map_b.map(i)];
                            }
                        }
                        if self.wants_grad(b) {
                            let av = self.value(a).data().to_vec();
                            let dst = self.grad_buf(b).data_mut();
                            for (i, gv) in g.data().iter().enumerate() {
                                dst[map_b.map(i)] += gv * av[map_a.map(i)];
                            }
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.wants_grad(x) {
                    let dst = self.grad_buf(x).data_mut();
                    for (d, gv) in dst.iter_mut().zip(g.data()) {
                        *d += c * gv;
                    }
                }
            }
            Op::Softmax { x, axis } => {
                if self.wants_grad(x) {
                    let shape = self.nodes[node].value.shape().to_vec();
                    let yv = self.nodes[node].value.data().to_vec();
                    ops::softmax_backward(&yv, g.data(), &shape, axis, self.grad_buf(x).data_mut());
                }
            }
            Op::Concat { xs, axis } => {
                let out_shape = self.nodes[node].value.shape().to_vec();
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let out_row = out_shape[axis] * inner;
                let mut offset = 0usize;
                for x in xs {
                    let dim = self.shape(x)[axis];
                    let in_row = dim * inner;
                    if self.wants_grad(x) {
                        let dst = self.grad_buf(x).data_mut();
                        for o in 0..outer {
                            let s = o * out_row + offset * inner;
                            for j in 0..in_row {
                                dst[o * in_row + j] += g.data()[s + j];
                            }
                        }
                    }
                    offset += dim;
                }
            }
            Op::Slice { x, axis, start } => {
                if self.wants_grad(x) {
                    let in_shape = self.shape(x).to_vec();
                    let out_shape = self.nodes[node].value.shape().to_vec();
                    let outer: usize = in_shape[..axis].iter().product();
                    let inner: usize = in_shape[axis + 1..].iter().product();
                    let in_row = in_shape[axis] * inner;
                    let out_row = out_shape[axis] * inner;
                    let dst = self.grad_buf(x).data_mut();
                    for o in 0..outer {
                        let d = o * in_row + start * inner;
                        for j in 0..out_row {
                            dst[d + j] += g.data()[o * out_row + j];
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                if self.wants_grad(x) {
                    let dst = self.grad_buf(x).data_mut();
                    for (d, gv) in dst.iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
            }
            Op::Transpose { x } => {
                if self.wants_grad(x) {
                    let (n, m) = {
                        let s = self.nodes[node].value.shape();
                        (s[0], s[1])
                    };
                    let dst = self.grad_buf(x).data_mut();
                    for i in 0..n {
                        for j in 0..m {
                            dst[j * n + i] += g.data()[i * m + j];
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if self.wants_grad(x) {
                    let gv = g.item();
                    for d in self.grad_buf(x).data_mut() {
                        *d += gv;
                    }
                }
            }
            Op::GaussianKl { mu_q, logvar_q, mu_p, logvar_p } => {
                let gv = g.item();
                let mq = self.value(mu_q).data().to_vec();
                let lq = self.value(logvar_q).data().to_vec();
                let mp = self.value(mu_p).data().to_vec();
                let lp = self.value(logvar_p).data().to_vec();
                let n = mq.len();
                if self.wants_grad(mu_q) {
                    let dst = self.grad_buf(mu_q).data_mut();
                    for i in 0..n {
                        dst[i] += gv * (mq[i] - mp[i]) / ops::exp_guarded(lp[i]);
                    }
                }
                if self.wants_grad(mu_p) {
                    let dst = self.grad_buf(mu_p).data_mut();
                    for i in 0..n {
                        dst[i] -= gv * (mq[i] - mp[i]) / ops::exp_guarded(lp[i]);
                    }
                }
                if self.wants_grad(logvar_q) {
                    let dst = self.grad_buf(logvar_q).data_mut();
                    for i in 0..n {
                        dst[i] += gv * 0.5 * (ops::exp_guarded(lq[i]) / ops::exp_guarded(lp[i]) - 1.0);
                    }
                }
                if self.wants_grad(logvar_p) {
                    let dst = self.grad_buf(logvar_p).data_mut();
                    for i in 0..n {
                        let d = mq[i] - mp[i];
                        let vp = ops::exp_guarded(lp[i]);
                        dst[i] += gv * 0.5 * (1.0 - (ops::exp_guarded(lq[i]) + d * d) / vp);
                    }
                }
            }
            Op::CrossEntropyLogits { logits, target } => {
                if self.wants_grad(logits) {
                    let x = self.value(logits).data().to_vec();
                    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = x.iter().map(|&v| (v - m).exp()).sum();
                    let gv = g.item();
                    let dst = self.grad_buf(logits).data_mut();
                    for i in 0..x.len() {
                        let p = (x[i] - m).exp() / s;
                        let onehot = if i == target { 1.0 } else { 0.0 };
                        dst[i] += gv * (p - onehot);
                    }
                }
            }
        }
    }
}

fn op_inputs(op: &Op) -> Vec<VarId> {
    match op {
        Op::Leaf => vec![],
        Op::Matmul { a, b } | Op::Binary { a, b, .. } => vec![*a, *b],
        Op::Conv1d { input, kernel, .. } => vec![*input, *kernel],
        Op::Unary { x, .. }
        | Op::Scale { x, .. }
        | Op::Softmax { x, .. }
        | Op::Slice { x, .. }
        | Op::Reshape { x }
        | Op::Transpose { x }
        | Op::Sum { x } => vec![*x],
        Op::Concat { xs, .. } => xs.clone(),
        Op::GaussianKl { mu_q, logvar_q, mu_p, logvar_p } => {
            vec![*mu_q, *logvar_q, *mu_p, *logvar_p]
        }
        Op::CrossEntropyLogits { logits, .. } => vec![*logits],
    }
}
