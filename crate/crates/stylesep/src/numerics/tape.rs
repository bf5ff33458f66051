//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! A [`Graph`] records every operation during the forward pass. Each node
//! stores its value, the op that produced it, and which parents it reads.
//! [`Graph::backward`] walks the tape in reverse, accumulating gradients into
//! a side table. Nodes whose subtree contains no gradient-requiring leaf are
//! skipped entirely, so constant inputs (reference signals, frozen
//! embeddings) cost nothing on the way back.

use super::tensor::Tensor;
use super::{NumericsError, LAYER_NORM_EPS};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise a + b, same shape.
    Add(NodeId, NodeId),
    /// Elementwise a - b, same shape.
    Sub(NodeId, NodeId),
    /// Elementwise a * b, same shape.
    Mul(NodeId, NodeId),
    /// a * c for a constant c.
    Scale(NodeId, f64),
    /// a + c for a constant c.
    AddConst(NodeId),
    /// Tensor a scaled by a scalar-shaped node s.
    MulScalar(NodeId, NodeId),
    /// 2-D matrix product with optional operand transposes.
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    /// Batched 3-D matrix product over the leading axis.
    BatchMatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    /// Broadcast bias over the last axis.
    AddBias { a: NodeId, bias: NodeId },
    /// 2-D transpose.
    Transpose(NodeId),
    /// Swap the first two axes of a 3-D tensor.
    SwapAxes01(NodeId),
    /// Same data, new shape.
    Reshape(NodeId),
    /// Concatenate along the last axis; all leading dims equal.
    ConcatLast(Vec<NodeId>),
    /// [B, S, H*D] -> [B*H, S, D]
    SplitHeads { a: NodeId, heads: usize },
    /// [B*H, S, D] -> [B, S, H*D]
    MergeHeads { a: NodeId, heads: usize },
    /// Valid 1-D convolution: input [F_in, T], kernel [F_out, F_in, K].
    Conv1d { input: NodeId, kernel: NodeId, stride: usize },
    /// Transposed 1-D convolution, cropped to `out_len`.
    ConvTranspose1d { input: NodeId, kernel: NodeId, stride: usize, out_len: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Natural log; input must be strictly positive.
    Ln(NodeId),
    Softmax { a: NodeId, axis: usize },
    LayerNorm { a: NodeId, axis: usize },
    /// Sum of all elements -> scalar.
    SumAll(NodeId),
    /// Mean of all elements -> scalar.
    MeanAll(NodeId),
    /// [T, F] -> [N, C, F] overlapping frames, zero-padded.
    ChunkFrames { a: NodeId, chunk: usize, hop: usize },
    /// [N, C, F] -> [out_t, F] overlap-add divided by per-position counts.
    OverlapAddMean { a: NodeId, hop: usize, out_t: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradient tape. One per forward pass; dropped after the step.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(context: &'static str, detail: String) -> NumericsError {
    NumericsError::Dimension { context, detail }
}

// ── dense kernels ────────────────────────────────────────────────────

/// C[m,n] += A[m,k] * B[k,n], ikj order so the inner loop vectorizes.
fn mm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

fn transpose_copy(d: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = d[r * cols + c];
        }
    }
    out
}

/// Iterate lanes along `axis`: calls `f(lane_offsets)` with the flat indices
/// of each lane in order.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut idx = Vec::with_capacity(len);
    for o in 0..outer {
        for i in 0..inner {
            idx.clear();
            let base = o * len * inner + i;
            for j in 0..len {
                idx.push(base + j * inner);
            }
            f(&idx);
        }
    }
}

/// Number of frames of size `chunk` with hop `hop` covering `t` positions.
pub fn frame_count(t: usize, chunk: usize, hop: usize) -> usize {
    if t <= chunk {
        1
    } else {
        (t - chunk).div_ceil(hop) + 1
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulScalar(a, b) => {
                self.nodes[*a].needs_grad || self.nodes[*b].needs_grad
            }
            Op::MatMul { a, b, .. } | Op::BatchMatMul { a, b, .. } => {
                self.nodes[*a].needs_grad || self.nodes[*b].needs_grad
            }
            Op::AddBias { a, bias } => self.nodes[*a].needs_grad || self.nodes[*bias].needs_grad,
            Op::ConcatLast(parts) => parts.iter().any(|p| self.nodes[*p].needs_grad),
            Op::Conv1d { input, kernel, .. } | Op::ConvTranspose1d { input, kernel, .. } => {
                self.nodes[*input].needs_grad || self.nodes[*kernel].needs_grad
            }
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Transpose(a)
            | Op::SwapAxes01(a)
            | Op::Reshape(a)
            | Op::SplitHeads { a, .. }
            | Op::MergeHeads { a, .. }
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Ln(a)
            | Op::Softmax { a, .. }
            | Op::LayerNorm { a, .. }
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::ChunkFrames { a, .. }
            | Op::OverlapAddMean { a, .. } => self.nodes[*a].needs_grad,
        };
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    /// Insert an input tensor. `needs_grad` marks it as a differentiation
    /// target (parameters, probed inputs); constants should pass `false`.
    pub fn leaf(&mut self, value: Tensor, needs_grad: bool) -> NodeId {
        let id = self.push(value, Op::Leaf);
        self.nodes[id].needs_grad = needs_grad;
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("add", a, b)?;
        let data = self.zip(a, b, |x, y| x + y);
        Ok(self.push(data, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("sub", a, b)?;
        let data = self.zip(a, b, |x, y| x - y);
        Ok(self.push(data, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("mul", a, b)?;
        let data = self.zip(a, b, |x, y| x * y);
        Ok(self.push(data, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.map(a, |x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.map(a, |x| x + c);
        self.push(v, Op::AddConst(a))
    }

    /// Multiply tensor `a` by scalar node `s` (shape `[1]`).
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, NumericsError> {
        if self.shape(s) != [1] {
            return Err(dim_err("mul_scalar", format!("scalar operand has shape {:?}", self.shape(s))));
        }
        let c = self.value(s).item();
        let v = self.map(a, |x| x * c);
        Ok(self.push(v, Op::MulScalar(a, s)))
    }

    /// 2-D matrix product; `ta`/`tb` transpose the respective operand first.
    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId, NumericsError> {
        let (m, k1) = self.dims2("matmul lhs", a, ta)?;
        let (k2, n) = self.dims2("matmul rhs", b, tb)?;
        if k1 != k2 {
            return Err(dim_err(
                "matmul",
                format!("inner dims {} vs {} (lhs {:?} ta={}, rhs {:?} tb={})", k1, k2, self.shape(a), ta, self.shape(b), tb),
            ));
        }
        let ae = self.effective2(a, ta);
        let be = self.effective2(b, tb);
        let mut out = vec![0.0; m * n];
        mm_acc(&ae, &be, m, k1, n, &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, ta, tb }))
    }

    /// Batched 3-D matrix product over the leading axis.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId, NumericsError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(dim_err("batch_matmul", format!("shapes {:?} vs {:?}", sa, sb)));
        }
        let bsz = sa[0];
        let (m, k1) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k1 != k2 {
            return Err(dim_err("batch_matmul", format!("inner dims {} vs {}", k1, k2)));
        }
        let mut out = vec![0.0; bsz * m * n];
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        for i in 0..bsz {
            let ab = &ad[i * sa[1] * sa[2]..(i + 1) * sa[1] * sa[2]];
            let bb = &bd[i * sb[1] * sb[2]..(i + 1) * sb[1] * sb[2]];
            let ae = if ta { transpose_copy(ab, sa[1], sa[2]) } else { ab.to_vec() };
            let be = if tb { transpose_copy(bb, sb[1], sb[2]) } else { bb.to_vec() };
            mm_acc(&ae, &be, m, k1, n, &mut out[i * m * n..(i + 1) * m * n]);
        }
        let t = Tensor::new(vec![bsz, m, n], out)?;
        Ok(self.push(t, Op::BatchMatMul { a, b, ta, tb }))
    }

    /// Broadcast `bias` (1-D of size D) over the last axis of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NumericsError> {
        let d = *self.shape(a).last().unwrap_or(&0);
        if self.shape(bias) != [d] {
            return Err(dim_err(
                "add_bias",
                format!("bias {:?} does not match last axis of {:?}", self.shape(bias), self.shape(a)),
            ));
        }
        let bd = self.value(bias).data().to_vec();
        let av = self.value(a);
        let mut out = av.data().to_vec();
        for (i, o) in out.iter_mut().enumerate() {
            *o += bd[i % d];
        }
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::AddBias { a, bias }))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(dim_err("transpose", format!("expected 2-D, got {:?}", s)));
        }
        let out = transpose_copy(self.value(a).data(), s[0], s[1]);
        let t = Tensor::new(vec![s[1], s[0]], out)?;
        Ok(self.push(t, Op::Transpose(a)))
    }

    pub fn swap_axes01(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(dim_err("swap_axes01", format!("expected 3-D, got {:?}", s)));
        }
        let (d0, d1, d2) = (s[0], s[1], s[2]);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for i in 0..d0 {
            for j in 0..d1 {
                let srow = &src[(i * d1 + j) * d2..(i * d1 + j + 1) * d2];
                out[(j * d0 + i) * d2..(j * d0 + i + 1) * d2].copy_from_slice(srow);
            }
        }
        let t = Tensor::new(vec![d1, d0, d2], out)?;
        Ok(self.push(t, Op::SwapAxes01(a)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, NumericsError> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Concatenate along the last axis. All leading dims must agree.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(dim_err("concat_last", "no parts".to_string()));
        }
        let lead = self.shape(parts[0])[..self.shape(parts[0]).len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(dim_err("concat_last", format!("leading dims differ: {:?} vs {:?}", s, lead)));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut col = 0;
        for (pi, &p) in parts.iter().enumerate() {
            let w = widths[pi];
            let d = self.value(p).data();
            for r in 0..rows {
                out[r * total + col..r * total + col + w].copy_from_slice(&d[r * w..(r + 1) * w]);
            }
            col += w;
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::ConcatLast(parts.to_vec())))
    }

    /// [B, S, H*D] -> [B*H, S, D]
    pub fn split_heads(&mut self, a: NodeId, heads: usize) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || s[2] % heads != 0 {
            return Err(NumericsError::Config(format!(
                "split_heads: shape {:?} not divisible into {} heads",
                s, heads
            )));
        }
        let (b, t, f) = (s[0], s[1], s[2]);
        let d = f / heads;
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for bi in 0..b {
            for h in 0..heads {
                for ti in 0..t {
                    let src_off = (bi * t + ti) * f + h * d;
                    let dst_off = ((bi * heads + h) * t + ti) * d;
                    out[dst_off..dst_off + d].copy_from_slice(&src[src_off..src_off + d]);
                }
            }
        }
        let tns = Tensor::new(vec![b * heads, t, d], out)?;
        Ok(self.push(tns, Op::SplitHeads { a, heads }))
    }

    /// [B*H, S, D] -> [B, S, H*D]
    pub fn merge_heads(&mut self, a: NodeId, heads: usize) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || s[0] % heads != 0 {
            return Err(NumericsError::Config(format!(
                "merge_heads: shape {:?} not divisible into {} heads",
                s, heads
            )));
        }
        let (bh, t, d) = (s[0], s[1], s[2]);
        let b = bh / heads;
        let f = heads * d;
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for bi in 0..b {
            for h in 0..heads {
                for ti in 0..t {
                    let src_off = ((bi * heads + h) * t + ti) * d;
                    let dst_off = (bi * t + ti) * f + h * d;
                    out[dst_off..dst_off + d].copy_from_slice(&src[src_off..src_off + d]);
                }
            }
        }
        let tns = Tensor::new(vec![b, t, f], out)?;
        Ok(self.push(tns, Op::MergeHeads { a, heads }))
    }

    /// Valid (no padding) 1-D convolution.
    ///
    /// input `[F_in, T]`, kernel `[F_out, F_in, K]`, output `[F_out, T']`
    /// with `T' = (T - K) / stride + 1`.
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId, NumericsError> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 2 || sk.len() != 3 {
            return Err(dim_err("conv1d", format!("input {:?}, kernel {:?}", si, sk)));
        }
        let (f_in, t) = (si[0], si[1]);
        let (f_out, kf_in, k) = (sk[0], sk[1], sk[2]);
        if kf_in != f_in {
            return Err(dim_err("conv1d", format!("kernel expects {} input channels, got {}", kf_in, f_in)));
        }
        if k < 1 || stride < 1 {
            return Err(NumericsError::Config("conv1d: kernel size and stride must be >= 1".to_string()));
        }
        if t < k {
            return Err(dim_err("conv1d", format!("input length {} shorter than kernel {}", t, k)));
        }
        let t_out = (t - k) / stride + 1;
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let mut out = vec![0.0; f_out * t_out];
        for fo in 0..f_out {
            for fi in 0..f_in {
                let wrow = &w[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                let xrow = &x[fi * t..(fi + 1) * t];
                let orow = &mut out[fo * t_out..(fo + 1) * t_out];
                for (ti, o) in orow.iter_mut().enumerate() {
                    let base = ti * stride;
                    let mut acc = 0.0;
                    for (kk, &wv) in wrow.iter().enumerate() {
                        acc += wv * xrow[base + kk];
                    }
                    *o += acc;
                }
            }
        }
        let tns = Tensor::new(vec![f_out, t_out], out)?;
        Ok(self.push(tns, Op::Conv1d { input, kernel, stride }))
    }

    /// Transposed 1-D convolution (scatter-add), cropped to `out_len`.
    ///
    /// input `[F_out, T']`, kernel `[F_out, F_in, K]`, output `[F_in, out_len]`
    /// where `out_len <= (T' - 1) * stride + K`.
    pub fn conv_transpose1d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        out_len: usize,
    ) -> Result<NodeId, NumericsError> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 2 || sk.len() != 3 {
            return Err(dim_err("conv_transpose1d", format!("input {:?}, kernel {:?}", si, sk)));
        }
        let (f_out, t_in) = (si[0], si[1]);
        let (kf_out, f_in, k) = (sk[0], sk[1], sk[2]);
        if kf_out != f_out {
            return Err(dim_err("conv_transpose1d", format!("kernel expects {} channels, got {}", kf_out, f_out)));
        }
        let full = (t_in - 1) * stride + k;
        if out_len > full {
            return Err(NumericsError::Config(format!(
                "conv_transpose1d: requested length {} exceeds reconstruction {}",
                out_len, full
            )));
        }
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let mut out = vec![0.0; f_in * out_len];
        for fo in 0..f_out {
            let xrow = &x[fo * t_in..(fo + 1) * t_in];
            for fi in 0..f_in {
                let wrow = &w[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                let orow = &mut out[fi * out_len..(fi + 1) * out_len];
                for (ti, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let base = ti * stride;
                    for (kk, &wv) in wrow.iter().enumerate() {
                        let pos = base + kk;
                        if pos < out_len {
                            orow[pos] += xv * wv;
                        }
                    }
                }
            }
        }
        let tns = Tensor::new(vec![f_in, out_len], out)?;
        Ok(self.push(tns, Op::ConvTranspose1d { input, kernel, stride, out_len }))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.map(a, |x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(NumericsError::NonFinite { op: "ln" });
        }
        let v = self.map(a, f64::ln);
        Ok(self.push(v, Op::Ln(a)))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(dim_err("softmax", format!("axis {} out of range for {:?}", axis, shape)));
        }
        let src = self.value(a).data().to_vec();
        let mut out = vec![0.0; src.len()];
        for_each_lane(&shape, axis, |lane| {
            let max = lane.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &i in lane {
                let e = (src[i] - max).exp();
                out[i] = e;
                sum += e;
            }
            for &i in lane {
                out[i] /= sum;
            }
        });
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Softmax { a, axis }))
    }

    /// Normalize to zero mean / unit variance along `axis` (no learned affine).
    pub fn layer_norm(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(dim_err("layer_norm", format!("axis {} out of range for {:?}", axis, shape)));
        }
        let src = self.value(a).data().to_vec();
        let mut out = vec![0.0; src.len()];
        let n = shape[axis] as f64;
        for_each_lane(&shape, axis, |lane| {
            let mean = lane.iter().map(|&i| src[i]).sum::<f64>() / n;
            let var = lane.iter().map(|&i| (src[i] - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for &i in lane {
                out[i] = (src[i] - mean) * inv;
            }
        });
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::LayerNorm { a, axis }))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel() as f64;
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s / n), Op::MeanAll(a))
    }

    /// Frame `[T, F]` into `[N, C, F]` with hop `hop`, zero-padding the tail.
    pub fn chunk_frames(&mut self, a: NodeId, chunk: usize, hop: usize) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(dim_err("chunk_frames", format!("expected [T, F], got {:?}", s)));
        }
        if hop == 0 || chunk == 0 || hop > chunk {
            return Err(NumericsError::Config(format!("chunk_frames: chunk {} hop {}", chunk, hop)));
        }
        let (t, f) = (s[0], s[1]);
        let n = frame_count(t, chunk, hop);
        let src = self.value(a).data();
        let mut out = vec![0.0; n * chunk * f];
        for fr in 0..n {
            for c in 0..chunk {
                let pos = fr * hop + c;
                if pos < t {
                    out[(fr * chunk + c) * f..(fr * chunk + c + 1) * f]
                        .copy_from_slice(&src[pos * f..(pos + 1) * f]);
                }
            }
        }
        let tns = Tensor::new(vec![n, chunk, f], out)?;
        Ok(self.push(tns, Op::ChunkFrames { a, chunk, hop }))
    }

    /// Overlap-add `[N, C, F]` back to `[out_t, F]`, dividing each position
    /// by its overlap count so identity data reconstructs exactly.
    pub fn overlap_add_mean(&mut self, a: NodeId, hop: usize, out_t: usize) -> Result<NodeId, NumericsError> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(dim_err("overlap_add_mean", format!("expected [N, C, F], got {:?}", s)));
        }
        let (n, chunk, f) = (s[0], s[1], s[2]);
        let padded = (n - 1) * hop + chunk;
        if out_t > padded {
            return Err(NumericsError::Config(format!(
                "overlap_add_mean: out_t {} exceeds framed span {}",
                out_t, padded
            )));
        }
        let counts = overlap_counts(n, chunk, hop);
        let src = self.value(a).data();
        let mut out = vec![0.0; out_t * f];
        for fr in 0..n {
            for c in 0..chunk {
                let pos = fr * hop + c;
                if pos < out_t {
                    let w = 1.0 / counts[pos] as f64;
                    let srow = &src[(fr * chunk + c) * f..(fr * chunk + c + 1) * f];
                    let orow = &mut out[pos * f..(pos + 1) * f];
                    for (o, &v) in orow.iter_mut().zip(srow) {
                        *o += v * w;
                    }
                }
            }
        }
        let tns = Tensor::new(vec![out_t, f], out)?;
        Ok(self.push(tns, Op::OverlapAddMean { a, hop, out_t }))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Returns per-node gradients
    /// (`None` for nodes that do not require or receive gradient).
    pub fn backward(&self, root: NodeId) -> Result<Vec<Option<Tensor>>, NumericsError> {
        if self.shape(root) != [1] {
            return Err(dim_err("backward", format!("root must be scalar, got {:?}", self.shape(root))));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root] = Some(Tensor::scalar(1.0));
        for id in (0..=root).rev() {
            if !self.nodes[id].needs_grad && !matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.push_back(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    fn push_back(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), NumericsError> {
        let acc = |grads: &mut [Option<Tensor>], pid: NodeId, contrib: Tensor| {
            if !self.nodes[pid].needs_grad {
                return;
            }
            match &mut grads[pid] {
                Some(existing) => {
                    for (e, c) in existing.data_mut().iter_mut().zip(contrib.data()) {
                        *e += c;
                    }
                }
                slot => *slot = Some(contrib),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let mut neg = g.clone();
                for v in neg.data_mut() {
                    *v = -*v;
                }
                acc(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = tensor_zip(g, bv, |x, y| x * y);
                let gb = tensor_zip(g, av, |x, y| x * y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(a, c) => {
                let mut ga = g.clone();
                for v in ga.data_mut() {
                    *v *= c;
                }
                acc(grads, *a, ga);
            }
            Op::AddConst(a) => acc(grads, *a, g.clone()),
            Op::MulScalar(a, s) => {
                let sv = self.value(*s).item();
                let mut ga = g.clone();
                for v in ga.data_mut() {
                    *v *= sv;
                }
                acc(grads, *a, ga);
                let gs: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                acc(grads, *s, Tensor::scalar(gs));
            }
            Op::MatMul { a, b, ta, tb } => {
                let (m, k) = self.dims2("matmul lhs", *a, *ta)?;
                let (_, n) = self.dims2("matmul rhs", *b, *tb)?;
                let ae = self.effective2(*a, *ta);
                let be = self.effective2(*b, *tb);
                // d(eff A) = G Bᵀ ; d(eff B) = Aᵀ G
                let mut da = vec![0.0; m * k];
                mm_acc(g.data(), &transpose_copy(&be, k, n), m, n, k, &mut da);
                let mut db = vec![0.0; k * n];
                mm_acc(&transpose_copy(&ae, m, k), g.data(), k, m, n, &mut db);
                let da = if *ta { transpose_copy(&da, m, k) } else { da };
                let db = if *tb { transpose_copy(&db, k, n) } else { db };
                acc(grads, *a, Tensor::new(self.shape(*a).to_vec(), da)?);
                acc(grads, *b, Tensor::new(self.shape(*b).to_vec(), db)?);
            }
            Op::BatchMatMul { a, b, ta, tb } => {
                let sa = self.shape(*a).to_vec();
                let sb = self.shape(*b).to_vec();
                let bsz = sa[0];
                let (m, k) = if *ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
                let n = if *tb { sb[1] } else { sb[2] };
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let mut da = vec![0.0; ad.len()];
                let mut db = vec![0.0; bd.len()];
                for i in 0..bsz {
                    let ab = &ad[i * sa[1] * sa[2]..(i + 1) * sa[1] * sa[2]];
                    let bb = &bd[i * sb[1] * sb[2]..(i + 1) * sb[1] * sb[2]];
                    let gb = &g.data()[i * m * n..(i + 1) * m * n];
                    let ae = if *ta { transpose_copy(ab, sa[1], sa[2]) } else { ab.to_vec() };
                    let be = if *tb { transpose_copy(bb, sb[1], sb[2]) } else { bb.to_vec() };
                    let mut dae = vec![0.0; m * k];
                    mm_acc(gb, &transpose_copy(&be, k, n), m, n, k, &mut dae);
                    let mut dbe = vec![0.0; k * n];
                    mm_acc(&transpose_copy(&ae, m, k), gb, k, m, n, &mut dbe);
                    let dae = if *ta { transpose_copy(&dae, m, k) } else { dae };
                    let dbe = if *tb { transpose_copy(&dbe, k, n) } else { dbe };
                    da[i * sa[1] * sa[2]..(i + 1) * sa[1] * sa[2]]
                        .iter_mut()
                        .zip(&dae)
                        .for_each(|(x, y)| *x += y);
                    db[i * sb[1] * sb[2]..(i + 1) * sb[1] * sb[2]]
                        .iter_mut()
                        .zip(&dbe)
                        .for_each(|(x, y)| *x += y);
                }
                acc(grads, *a, Tensor::new(sa, da)?);
                acc(grads, *b, Tensor::new(sb, db)?);
            }
            Op::AddBias { a, bias } => {
                acc(grads, *a, g.clone());
                let d = self.value(*bias).numel();
                let mut gb = vec![0.0; d];
                for (i, &v) in g.data().iter().enumerate() {
                    gb[i % d] += v;
                }
                acc(grads, *bias, Tensor::new(vec![d], gb)?);
            }
            Op::Transpose(a) => {
                let s = self.shape(id);
                let da = transpose_copy(g.data(), s[0], s[1]);
                acc(grads, *a, Tensor::new(self.shape(*a).to_vec(), da)?);
            }
            Op::SwapAxes01(a) => {
                let s = self.shape(id).to_vec();
                let (d0, d1, d2) = (s[0], s[1], s[2]);
                let mut da = vec![0.0; g.data().len()];
                for i in 0..d0 {
                    for j in 0..d1 {
                        let srow = &g.data()[(i * d1 + j) * d2..(i * d1 + j + 1) * d2];
                        da[(j * d0 + i) * d2..(j * d0 + i + 1) * d2].copy_from_slice(srow);
                    }
                }
                acc(grads, *a, Tensor::new(self.shape(*a).to_vec(), da)?);
            }
            Op::Reshape(a) => {
                let da = Tensor::new(self.shape(*a).to_vec(), g.data().to_vec())?;
                acc(grads, *a, da);
            }
            Op::ConcatLast(parts) => {
                let out_shape = self.shape(id);
                let total = *out_shape.last().unwrap();
                let rows: usize = out_shape[..out_shape.len() - 1].iter().product();
                let mut col = 0;
                for &p in parts {
                    let w = *self.shape(p).last().unwrap();
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&g.data()[r * total + col..r * total + col + w]);
                    }
                    acc(grads, p, Tensor::new(self.shape(p).to_vec(), dp)?);
                    col += w;
                }
            }
            Op::SplitHeads { a, heads } => {
                let s = self.shape(*a).to_vec();
                let (b, t, f) = (s[0], s[1], s[2]);
                let d = f / heads;
                let mut da = vec![0.0; g.data().len()];
                for bi in 0..b {
                    for h in 0..*heads {
                        for ti in 0..t {
                            let dst_off = (bi * t + ti) * f + h * d;
                            let src_off = ((bi * heads + h) * t + ti) * d;
                            da[dst_off..dst_off + d].copy_from_slice(&g.data()[src_off..src_off + d]);
                        }
                    }
                }
                acc(grads, *a, Tensor::new(s, da)?);
            }
            Op::MergeHeads { a, heads } => {
                let s = self.shape(*a).to_vec();
                let (bh, t, d) = (s[0], s[1], s[2]);
                let b = bh / heads;
                let f = heads * d;
                let mut da = vec![0.0; g.data().len()];
                for bi in 0..b {
                    for h in 0..*heads {
                        for ti in 0..t {
                            let src_off = (bi * t + ti) * f + h * d;
                            let dst_off = ((bi * heads + h) * t + ti) * d;
                            da[dst_off..dst_off + d].copy_from_slice(&g.data()[src_off..src_off + d]);
                        }
                    }
                }
                acc(grads, *a, Tensor::new(s, da)?);
            }
            Op::Conv1d { input, kernel, stride } => {
                let si = self.shape(*input).to_vec();
                let sk = self.shape(*kernel).to_vec();
                let (f_in, t) = (si[0], si[1]);
                let (f_out, _, k) = (sk[0], sk[1], sk[2]);
                let t_out = (t - k) / stride + 1;
                let x = self.value(*input).data();
                let w = self.value(*kernel).data();
                let mut dx = vec![0.0; x.len()];
                let mut dw = vec![0.0; w.len()];
                for fo in 0..f_out {
                    let gout = &g.data()[fo * t_out..(fo + 1) * t_out];
                    for fi in 0..f_in {
                        let wrow = &w[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                        let xrow = &x[fi * t..(fi + 1) * t];
                        let dxrow = &mut dx[fi * t..(fi + 1) * t];
                        let dwrow = &mut dw[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                        for (ti, &gv) in gout.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            let base = ti * stride;
                            for kk in 0..k {
                                dxrow[base + kk] += gv * wrow[kk];
                                dwrow[kk] += gv * xrow[base + kk];
                            }
                        }
                    }
                }
                acc(grads, *input, Tensor::new(si, dx)?);
                acc(grads, *kernel, Tensor::new(sk, dw)?);
            }
            Op::ConvTranspose1d { input, kernel, stride, out_len } => {
                let si = self.shape(*input).to_vec();
                let sk = self.shape(*kernel).to_vec();
                let (f_out, t_in) = (si[0], si[1]);
                let (_, f_in, k) = (sk[0], sk[1], sk[2]);
                let x = self.value(*input).data();
                let w = self.value(*kernel).data();
                let mut dx = vec![0.0; x.len()];
                let mut dw = vec![0.0; w.len()];
                for fo in 0..f_out {
                    let xrow = &x[fo * t_in..(fo + 1) * t_in];
                    let dxrow = &mut dx[fo * t_in..(fo + 1) * t_in];
                    for fi in 0..f_in {
                        let wrow = &w[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                        let dwrow = &mut dw[(fo * f_in + fi) * k..(fo * f_in + fi + 1) * k];
                        let grow = &g.data()[fi * out_len..(fi + 1) * out_len];
                        for ti in 0..t_in {
                            let base = ti * stride;
                            let mut acc_x = 0.0;
                            for kk in 0..k {
                                let pos = base + kk;
                                if pos < *out_len {
                                    acc_x += grow[pos] * wrow[kk];
                                    dwrow[kk] += grow[pos] * xrow[ti];
                                }
                            }
                            dxrow[ti] += acc_x;
                        }
                    }
                }
                acc(grads, *input, Tensor::new(si, dx)?);
                acc(grads, *kernel, Tensor::new(sk, dw)?);
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                let da = tensor_zip(g, av, |gv, x| if x > 0.0 { gv } else { 0.0 });
                acc(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let yv = self.value(id);
                let da = tensor_zip(g, yv, |gv, y| gv * y * (1.0 - y));
                acc(grads, *a, da);
            }
            Op::Ln(a) => {
                let av = self.value(*a);
                let da = tensor_zip(g, av, |gv, x| gv / x);
                acc(grads, *a, da);
            }
            Op::Softmax { a, axis } => {
                let y = self.value(id).data();
                let shape = self.shape(id).to_vec();
                let mut da = vec![0.0; y.len()];
                for_each_lane(&shape, *axis, |lane| {
                    let dot: f64 = lane.iter().map(|&i| g.data()[i] * y[i]).sum();
                    for &i in lane {
                        da[i] = y[i] * (g.data()[i] - dot);
                    }
                });
                acc(grads, *a, Tensor::new(shape, da)?);
            }
            Op::LayerNorm { a, axis } => {
                let y = self.value(id).data();
                let x = self.value(*a).data();
                let shape = self.shape(id).to_vec();
                let n = shape[*axis] as f64;
                let mut da = vec![0.0; y.len()];
                for_each_lane(&shape, *axis, |lane| {
                    let mean = lane.iter().map(|&i| x[i]).sum::<f64>() / n;
                    let var = lane.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / n;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let g_mean = lane.iter().map(|&i| g.data()[i]).sum::<f64>() / n;
                    let gy_mean = lane.iter().map(|&i| g.data()[i] * y[i]).sum::<f64>() / n;
                    for &i in lane {
                        da[i] = inv * (g.data()[i] - g_mean - y[i] * gy_mean);
                    }
                });
                acc(grads, *a, Tensor::new(shape, da)?);
            }
            Op::SumAll(a) => {
                let gv = g.item();
                acc(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::MeanAll(a) => {
                let gv = g.item() / self.value(*a).numel() as f64;
                acc(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::ChunkFrames { a, chunk, hop } => {
                let s_in = self.shape(*a).to_vec();
                let (t, f) = (s_in[0], s_in[1]);
                let n = self.shape(id)[0];
                let mut da = vec![0.0; t * f];
                for fr in 0..n {
                    for c in 0..*chunk {
                        let pos = fr * hop + c;
                        if pos < t {
                            let grow = &g.data()[(fr * chunk + c) * f..(fr * chunk + c + 1) * f];
                            let darow = &mut da[pos * f..(pos + 1) * f];
                            for (d, &v) in darow.iter_mut().zip(grow) {
                                *d += v;
                            }
                        }
                    }
                }
                acc(grads, *a, Tensor::new(s_in, da)?);
            }
            Op::OverlapAddMean { a, hop, out_t } => {
                let s_in = self.shape(*a).to_vec();
                let (n, chunk, f) = (s_in[0], s_in[1], s_in[2]);
                let counts = overlap_counts(n, chunk, *hop);
                let mut da = vec![0.0; n * chunk * f];
                for fr in 0..n {
                    for c in 0..chunk {
                        let pos = fr * hop + c;
                        if pos < *out_t {
                            let w = 1.0 / counts[pos] as f64;
                            let grow = &g.data()[pos * f..(pos + 1) * f];
                            let darow = &mut da[(fr * chunk + c) * f..(fr * chunk + c + 1) * f];
                            for (d, &v) in darow.iter_mut().zip(grow) {
                                *d += v * w;
                            }
                        }
                    }
                }
                acc(grads, *a, Tensor::new(s_in, da)?);
            }
        }
        Ok(())
    }

    // ── helpers ──────────────────────────────────────────────────────

    fn same_shape(&self, context: &'static str, a: NodeId, b: NodeId) -> Result<(), NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(context, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        tensor_zip(self.value(a), self.value(b), f)
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        Tensor::new(v.shape().to_vec(), data).expect("map preserves shape")
    }

    fn dims2(&self, context: &'static str, a: NodeId, t: bool) -> Result<(usize, usize), NumericsError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(dim_err(context, format!("expected 2-D, got {:?}", s)));
        }
        Ok(if t { (s[1], s[0]) } else { (s[0], s[1]) })
    }

    fn effective2(&self, a: NodeId, t: bool) -> Vec<f64> {
        let s = self.shape(a);
        if t {
            transpose_copy(self.value(a).data(), s[0], s[1])
        } else {
            self.value(a).data().to_vec()
        }
    }
}

fn tensor_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip preserves shape")
}

fn overlap_counts(n: usize, chunk: usize, hop: usize) -> Vec<usize> {
    let padded = (n - 1) * hop + chunk;
    let mut counts = vec![0usize; padded];
    for fr in 0..n {
        for c in 0..chunk {
            counts[fr * hop + c] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t1(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), false);
        let k = g.leaf(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), false);
        let y = g.conv1d(x, k, 1).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv1d_sliding_sum_stride2() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), false);
        let k = g.leaf(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap(), false);
        let y = g.conv1d(x, k, 2).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap(), false);
        let k = g.leaf(Tensor::new(vec![1, 1, 4], vec![1.0; 4]).unwrap(), false);
        assert!(g.conv1d(x, k, 1).is_err());
    }

    #[test]
    fn conv_transpose_scatter() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 2], vec![3.0, 7.0]).unwrap(), false);
        let k = g.leaf(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap(), false);
        let y = g.conv_transpose1d(x, k, 2, 4).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 3.0, 7.0, 7.0]);
    }

    #[test]
    fn conv_roundtrip_identity() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![1, 5], vec![1.0, -2.0, 0.5, 3.0, 4.0]).unwrap(), false);
        let k = g.leaf(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), false);
        let h = g.conv1d(x, k, 1).unwrap();
        let y = g.conv_transpose1d(h, k, 1, 5).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn softmax_symmetry_and_sum() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[0.0, 0.0]), false);
        let y = g.softmax(x, 0).unwrap();
        assert_abs_diff_eq!(g.value(y).data()[0], 0.5, epsilon = 1e-12);
        let x2 = g.leaf(t1(&[3.0, -1.0, 0.5, 9.0]), false);
        let y2 = g.softmax(x2, 0).unwrap();
        let s: f64 = g.value(y2).data().iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        assert!(g.value(y2).data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[0.0]), false);
        let y = g.sigmoid(x);
        assert_abs_diff_eq!(g.value(y).item(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[-1.0, 0.0, 2.0]), false);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn layer_norm_statistics() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[1.0, 2.0, 3.0, 4.0, 10.0]), false);
        let y = g.layer_norm(x, 0).unwrap();
        let d = g.value(y).data();
        let mean: f64 = d.iter().sum::<f64>() / d.len() as f64;
        let var: f64 = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn matmul_transposes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), false);
        let b = g.leaf(Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap(), false);
        let y = g.matmul(a, b, false, false).unwrap();
        assert_eq!(g.value(y).data(), &[19.0, 22.0, 43.0, 50.0]);
        let yt = g.matmul(a, b, false, true).unwrap();
        // A * Bᵀ = [[1*5+2*6, 1*7+2*8], [3*5+4*6, 3*7+4*8]]
        assert_eq!(g.value(yt).data(), &[17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn chunk_and_overlap_add_identity() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..16).map(|i| i as f64 * 0.7 - 3.0).collect();
        let x = g.leaf(Tensor::new(vec![8, 2], data).unwrap(), false);
        let ch = g.chunk_frames(x, 4, 2).unwrap();
        assert_eq!(g.shape(ch), &[3, 4, 2]);
        let back = g.overlap_add_mean(ch, 2, 8).unwrap();
        for (a, b) in g.value(back).data().iter().zip(g.value(x).data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn chunk_pads_short_input() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap(), false);
        let ch = g.chunk_frames(x, 4, 2).unwrap();
        assert_eq!(g.shape(ch), &[1, 4, 1]);
        assert_eq!(g.value(ch).data(), &[1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn split_merge_heads_roundtrip() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let x = g.leaf(Tensor::new(vec![2, 3, 4], data.clone()).unwrap(), false);
        let s = g.split_heads(x, 2).unwrap();
        assert_eq!(g.shape(s), &[4, 3, 2]);
        let m = g.merge_heads(s, 2).unwrap();
        assert_eq!(g.value(m).data(), &data[..]);
    }

    #[test]
    fn backward_through_simple_chain() {
        // y = sum((a * b) + a) ; dy/da = b + 1, dy/db = a
        let mut g = Graph::new();
        let a = g.leaf(t1(&[2.0, 3.0]), true);
        let b = g.leaf(t1(&[5.0, -1.0]), true);
        let p = g.mul(a, b).unwrap();
        let q = g.add(p, a).unwrap();
        let y = g.sum_all(q);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads[a].as_ref().unwrap().data(), &[6.0, 0.0]);
        assert_eq!(grads[b].as_ref().unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn constant_leaves_receive_no_grad() {
        let mut g = Graph::new();
        let a = g.leaf(t1(&[2.0]), true);
        let c = g.leaf(t1(&[10.0]), false);
        let p = g.mul(a, c).unwrap();
        let y = g.sum_all(p);
        let grads = g.backward(y).unwrap();
        assert!(grads[c].is_none());
        assert_eq!(grads[a].as_ref().unwrap().data(), &[10.0]);
    }

    #[test]
    fn ln_rejects_nonpositive() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[1.0, 0.0]), false);
        assert!(g.ln(x).is_err());
    }
}
