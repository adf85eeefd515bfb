//! Tape-based reverse-mode automatic differentiation.
//!
//! A forward pass records primitive operations on a [`Tape`]; `backward`
//! replays them in reverse and accumulates vector-Jacobian products into
//! per-node gradient buffers. The layer set is exactly what the two
//! classifier architectures need: `conv2d`, `leaky_relu`, `max_pool2d`,
//! `dense`, `softmax_cross_entropy`, plus a few glue ops.
//!
//! Tapes are rebuilt per forward pass and confined to one worker. Gradients
//! accumulate additively when a node feeds several consumers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AutodiffError {
    /// Incompatible operand shapes.
    Dimension(String),
    /// API contract violated (e.g. backward on a non-scalar).
    Contract(String),
    /// Out-of-range class label.
    Index(String),
}

impl fmt::Display for AutodiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutodiffError::Dimension(m) => write!(f, "dimension error: {m}"),
            AutodiffError::Contract(m) => write!(f, "contract error: {m}"),
            AutodiffError::Index(m) => write!(f, "index error: {m}"),
        }
    }
}

impl core::error::Error for AutodiffError {}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    MaxPool2d {
        input: Var,
        /// Flat index into the input buffer of the winning element, per output cell.
        argmax: Vec<u32>,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    Reshape {
        input: Var,
    },
}

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    needs_grad: bool,
    op: Op,
}

/// Recorded forward pass. Operations reference only earlier nodes, so the
/// node order is already topological and `backward` is a single reverse scan.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Valid output range along one axis so that `o*stride + k_off` stays inside
/// `[0, in_size)`.
#[inline]
fn out_range(stride: usize, k_off: isize, in_size: usize, out_size: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if k_off < 0 {
        ((-k_off) + s - 1) / s
    } else {
        0
    };
    let hi = (in_size as isize - 1 - k_off).div_euclid(s) + 1;
    let lo = lo.max(0) as usize;
    let hi = hi.clamp(0, out_size as isize) as usize;
    (lo.min(hi), hi)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            shape,
            values,
            needs_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Record an input tensor. Values are snapshotted, so later mutation of
    /// the source tensor does not affect this tape.
    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.push(
            t.shape().to_vec(),
            t.values().to_vec(),
            requires_grad,
            Op::Leaf,
        )
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    /// Scalar value of a one-element node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].values[0]
    }

    /// Gradient accumulated for `v`, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ── Primitive operations ─────────────────────────────────────────────

    /// 2-D cross-correlation of `input [C_in,H,W]` with `kernels
    /// [C_out,C_in,k,k]` plus `bias [C_out]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let ishape = self.shape(input);
        let kshape = self.shape(kernels);
        if ishape.len() != 3 || kshape.len() != 4 {
            return Err(AutodiffError::Dimension(format!(
                "conv2d expects input rank 3 and kernels rank 4, got {} and {}",
                ishape.len(),
                kshape.len()
            )));
        }
        let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
        let (c_out, kc_in, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if kc_in != c_in {
            return Err(AutodiffError::Dimension(format!(
                "conv2d channel mismatch: input has {c_in}, kernels expect {kc_in}"
            )));
        }
        if kh != kw {
            return Err(AutodiffError::Dimension(format!(
                "conv2d kernels must be square, got {kh}x{kw}"
            )));
        }
        if self.shape(bias) != [c_out] {
            return Err(AutodiffError::Dimension(format!(
                "conv2d bias must have shape [{c_out}]"
            )));
        }
        if stride == 0 {
            return Err(AutodiffError::Dimension(String::from(
                "conv2d stride must be >= 1",
            )));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(AutodiffError::Dimension(format!(
                "conv2d input {h}x{w} with padding {padding} smaller than kernel {kh}"
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;

        let mut out = vec![0.0f64; c_out * oh * ow];
        {
            let ivals = &self.nodes[input.0].values;
            let kvals = &self.nodes[kernels.0].values;
            let bvals = &self.nodes[bias.0].values;
            for co in 0..c_out {
                let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
                let b = bvals[co];
                for v in plane.iter_mut() {
                    *v = b;
                }
                for ci in 0..c_in {
                    let iplane = &ivals[ci * h * w..(ci + 1) * h * w];
                    for ky in 0..kh {
                        let y_off = ky as isize - padding as isize;
                        let (oy_lo, oy_hi) = out_range(stride, y_off, h, oh);
                        for kx in 0..kw {
                            let kv = kvals[((co * c_in + ci) * kh + ky) * kw + kx];
                            if kv == 0.0 {
                                continue;
                            }
                            let x_off = kx as isize - padding as isize;
                            let (ox_lo, ox_hi) = out_range(stride, x_off, w, ow);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            for oy in oy_lo..oy_hi {
                                let iy = (oy * stride) as isize + y_off;
                                let irow = &iplane[iy as usize * w..(iy as usize + 1) * w];
                                let orow = &mut plane[oy * ow + ox_lo..oy * ow + ox_hi];
                                if stride == 1 {
                                    let ix0 = (ox_lo as isize + x_off) as usize;
                                    for (o, i) in orow.iter_mut().zip(&irow[ix0..]) {
                                        *o += kv * i;
                                    }
                                } else {
                                    for (j, o) in orow.iter_mut().enumerate() {
                                        let ix = ((ox_lo + j) * stride) as isize + x_off;
                                        *o += kv * irow[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let needs = self.needs(input) || self.needs(kernels) || self.needs(bias);
        Ok(self.push(
            vec![c_out, oh, ow],
            out,
            needs,
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
                padding,
            },
        ))
    }

    /// Element-wise `x if x >= 0 else slope * x`. The derivative at exactly
    /// zero takes the positive branch.
    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let values: Vec<f64> = self.nodes[input.0]
            .values
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let needs = self.needs(input);
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, values, needs, Op::LeakyRelu { input, slope })
    }

    /// Per-window maximum over `input [C,H,W]`. The backward pass routes the
    /// gradient to the argmax element only (first hit wins on ties).
    pub fn max_pool2d(
        &mut self,
        input: Var,
        window: usize,
        stride: usize,
    ) -> Result<Var, AutodiffError> {
        let ishape = self.shape(input);
        if ishape.len() != 3 {
            return Err(AutodiffError::Dimension(format!(
                "max_pool2d expects rank 3, got {}",
                ishape.len()
            )));
        }
        let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
        if window == 0 || stride == 0 {
            return Err(AutodiffError::Dimension(String::from(
                "max_pool2d window and stride must be >= 1",
            )));
        }
        if window > h || window > w {
            return Err(AutodiffError::Dimension(format!(
                "max_pool2d window {window} exceeds input {h}x{w}"
            )));
        }
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        let mut out = vec![0.0f64; c * oh * ow];
        let mut argmax = vec![0u32; c * oh * ow];
        {
            let ivals = &self.nodes[input.0].values;
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for dy in 0..window {
                            let iy = oy * stride + dy;
                            for dx in 0..window {
                                let ix = ox * stride + dx;
                                let idx = (ci * h + iy) * w + ix;
                                let v = ivals[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = (ci * oh + oy) * ow + ox;
                        out[o] = best;
                        argmax[o] = best_idx as u32;
                    }
                }
            }
        }
        let needs = self.needs(input);
        Ok(self.push(
            vec![c, oh, ow],
            out,
            needs,
            Op::MaxPool2d { input, argmax },
        ))
    }

    /// Affine layer `weight [M,N] · input [N] + bias [M]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
        let ishape = self.shape(input);
        let wshape = self.shape(weight);
        if ishape.len() != 1 || wshape.len() != 2 {
            return Err(AutodiffError::Dimension(format!(
                "dense expects input rank 1 and weight rank 2, got {} and {}",
                ishape.len(),
                wshape.len()
            )));
        }
        let n = ishape[0];
        let (m, wn) = (wshape[0], wshape[1]);
        if wn != n {
            return Err(AutodiffError::Dimension(format!(
                "dense weight expects input size {wn}, got {n}"
            )));
        }
        if self.shape(bias) != [m] {
            return Err(AutodiffError::Dimension(format!(
                "dense bias must have shape [{m}]"
            )));
        }
        let mut out = vec![0.0f64; m];
        {
            let x = &self.nodes[input.0].values;
            let wv = &self.nodes[weight.0].values;
            let bv = &self.nodes[bias.0].values;
            for (r, o) in out.iter_mut().enumerate() {
                let row = &wv[r * n..(r + 1) * n];
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                *o = acc + bv[r];
            }
        }
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            vec![m],
            out,
            needs,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    /// `-log(softmax(logits)[label])` with max-subtraction for stability.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        label: usize,
    ) -> Result<Var, AutodiffError> {
        let lshape = self.shape(logits);
        if lshape.len() != 1 {
            return Err(AutodiffError::Dimension(format!(
                "softmax_cross_entropy expects rank 1 logits, got rank {}",
                lshape.len()
            )));
        }
        let k = lshape[0];
        if label >= k {
            return Err(AutodiffError::Index(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let lv = &self.nodes[logits.0].values;
        let m = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0f64; k];
        let mut sum = 0.0;
        for (p, &x) in probs.iter_mut().zip(lv.iter()) {
            *p = crate::math::exp(x - m);
            sum += *p;
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        let loss = crate::math::ln(sum) - (lv[label] - m);
        let needs = self.needs(logits);
        Ok(self.push(
            vec![],
            vec![loss],
            needs,
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// Softmax probabilities of a recorded logits node (forward-only helper).
    pub fn softmax_of(&self, logits: Var) -> Vec<f64> {
        let lv = &self.nodes[logits.0].values;
        let m = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = lv.iter().map(|&x| crate::math::exp(x - m)).collect();
        let sum: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= sum;
        }
        probs
    }

    /// Element-wise sum of two same-shape nodes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::Dimension(String::from(
                "add requires identical shapes",
            )));
        }
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(self.nodes[b.0].values.iter())
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, values, needs, Op::Add { a, b }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, input: Var) -> Var {
        let total: f64 = self.nodes[input.0].values.iter().sum();
        let needs = self.needs(input);
        self.push(vec![], vec![total], needs, Op::Sum { input })
    }

    /// Reinterpret the value buffer under a new shape of equal size.
    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[input.0].values.len() {
            return Err(AutodiffError::Dimension(format!(
                "reshape to {shape:?} changes element count"
            )));
        }
        let values = self.nodes[input.0].values.clone();
        let needs = self.needs(input);
        Ok(self.push(shape.to_vec(), values, needs, Op::Reshape { input }))
    }

    // ── Backward ─────────────────────────────────────────────────────────

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        match &mut self.grads[v.0] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta.iter()) {
                    *gi += di;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    /// Reverse sweep from a scalar loss node. Every `requires_grad` leaf
    /// reachable from `loss` ends up with an accumulated gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(AutodiffError::Contract(String::from(
                "backward requires a scalar loss node",
            )));
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &upstream);
            self.grads[idx] = Some(upstream);
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize, upstream: &[f64]) {
        // Ops only reference earlier nodes, so split the borrow at `idx`.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
                padding,
            } => {
                let (input, kernels, bias) = (*input, *kernels, *bias);
                let (stride, padding) = (*stride, *padding);
                let ishape = self.nodes[input.0].shape.clone();
                let kshape = self.nodes[kernels.0].shape.clone();
                let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
                let (c_out, kh, kw) = (kshape[0], kshape[2], kshape[3]);
                let oshape = &self.nodes[idx].shape;
                let (oh, ow) = (oshape[1], oshape[2]);

                if self.needs(input) {
                    let mut d_in = vec![0.0f64; c_in * h * w];
                    let kvals = &self.nodes[kernels.0].values;
                    for co in 0..c_out {
                        let dplane = &upstream[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..c_in {
                            let dip = &mut d_in[ci * h * w..(ci + 1) * h * w];
                            for ky in 0..kh {
                                let y_off = ky as isize - padding as isize;
                                let (oy_lo, oy_hi) = out_range(stride, y_off, h, oh);
                                for kx in 0..kw {
                                    let kv = kvals[((co * c_in + ci) * kh + ky) * kw + kx];
                                    if kv == 0.0 {
                                        continue;
                                    }
                                    let x_off = kx as isize - padding as isize;
                                    let (ox_lo, ox_hi) = out_range(stride, x_off, w, ow);
                                    if ox_lo >= ox_hi {
                                        continue;
                                    }
                                    for oy in oy_lo..oy_hi {
                                        let iy = ((oy * stride) as isize + y_off) as usize;
                                        let drow = &dplane[oy * ow + ox_lo..oy * ow + ox_hi];
                                        if stride == 1 {
                                            let ix0 = (ox_lo as isize + x_off) as usize;
                                            let irow = &mut dip[iy * w + ix0..];
                                            for (i, d) in irow.iter_mut().zip(drow.iter()) {
                                                *i += kv * d;
                                            }
                                        } else {
                                            for (j, d) in drow.iter().enumerate() {
                                                let ix =
                                                    (((ox_lo + j) * stride) as isize + x_off)
                                                        as usize;
                                                dip[iy * w + ix] += kv * d;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(input, d_in);
                }

                if self.needs(kernels) {
                    let mut d_k = vec![0.0f64; c_out * c_in * kh * kw];
                    let ivals = &self.nodes[input.0].values;
                    for co in 0..c_out {
                        let dplane = &upstream[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..c_in {
                            let iplane = &ivals[ci * h * w..(ci + 1) * h * w];
                            for ky in 0..kh {
                                let y_off = ky as isize - padding as isize;
                                let (oy_lo, oy_hi) = out_range(stride, y_off, h, oh);
                                for kx in 0..kw {
                                    let x_off = kx as isize - padding as isize;
                                    let (ox_lo, ox_hi) = out_range(stride, x_off, w, ow);
                                    if ox_lo >= ox_hi {
                                        continue;
                                    }
                                    let mut acc = 0.0;
                                    for oy in oy_lo..oy_hi {
                                        let iy = ((oy * stride) as isize + y_off) as usize;
                                        let drow = &dplane[oy * ow + ox_lo..oy * ow + ox_hi];
                                        if stride == 1 {
                                            let ix0 = (ox_lo as isize + x_off) as usize;
                                            for (d, i) in drow.iter().zip(&iplane[iy * w + ix0..])
                                            {
                                                acc += d * i;
                                            }
                                        } else {
                                            for (j, d) in drow.iter().enumerate() {
                                                let ix =
                                                    (((ox_lo + j) * stride) as isize + x_off)
                                                        as usize;
                                                acc += d * iplane[iy * w + ix];
                                            }
                                        }
                                    }
                                    d_k[((co * c_in + ci) * kh + ky) * kw + kx] += acc;
                                }
                            }
                        }
                    }
                    self.accumulate(kernels, d_k);
                }

                if self.needs(bias) {
                    let mut d_b = vec![0.0f64; c_out];
                    for (co, db) in d_b.iter_mut().enumerate() {
                        *db = upstream[co * oh * ow..(co + 1) * oh * ow].iter().sum();
                    }
                    self.accumulate(bias, d_b);
                }
            }
            Op::LeakyRelu { input, slope } => {
                let (input, slope) = (*input, *slope);
                if self.needs(input) {
                    let d: Vec<f64> = self.nodes[input.0]
                        .values
                        .iter()
                        .zip(upstream.iter())
                        .map(|(&x, &u)| if x >= 0.0 { u } else { slope * u })
                        .collect();
                    self.accumulate(input, d);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                let input = *input;
                if self.needs(input) {
                    let mut d = vec![0.0f64; self.nodes[input.0].values.len()];
                    for (&src, &u) in argmax.iter().zip(upstream.iter()) {
                        d[src as usize] += u;
                    }
                    self.accumulate(input, d);
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let (input, weight, bias) = (*input, *weight, *bias);
                let n = self.nodes[input.0].values.len();
                let m = upstream.len();
                if self.needs(input) {
                    let wv = &self.nodes[weight.0].values;
                    let mut d_x = vec![0.0f64; n];
                    for (r, &u) in upstream.iter().enumerate() {
                        if u == 0.0 {
                            continue;
                        }
                        let row = &wv[r * n..(r + 1) * n];
                        for (dx, wi) in d_x.iter_mut().zip(row.iter()) {
                            *dx += u * wi;
                        }
                    }
                    self.accumulate(input, d_x);
                }
                if self.needs(weight) {
                    let x = &self.nodes[input.0].values;
                    let mut d_w = vec![0.0f64; m * n];
                    for (r, &u) in upstream.iter().enumerate() {
                        if u == 0.0 {
                            continue;
                        }
                        let row = &mut d_w[r * n..(r + 1) * n];
                        for (dw, xi) in row.iter_mut().zip(x.iter()) {
                            *dw = u * xi;
                        }
                    }
                    self.accumulate(weight, d_w);
                }
                if self.needs(bias) {
                    self.accumulate(bias, upstream.to_vec());
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let (logits, label) = (*logits, *label);
                if self.needs(logits) {
                    let u = upstream[0];
                    let mut d: Vec<f64> = probs.iter().map(|&p| u * p).collect();
                    d[label] -= u;
                    self.accumulate(logits, d);
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    self.accumulate(a, upstream.to_vec());
                }
                if self.needs(b) {
                    self.accumulate(b, upstream.to_vec());
                }
            }
            Op::Sum { input } => {
                let input = *input;
                if self.needs(input) {
                    let u = upstream[0];
                    let d = vec![u; self.nodes[input.0].values.len()];
                    self.accumulate(input, d);
                }
            }
            Op::Reshape { input } => {
                let input = *input;
                if self.needs(input) {
                    self.accumulate(input, upstream.to_vec());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 3, 3], vec![1.0; 9]), false);
        let k = tape.leaf(&t(&[1, 1, 1, 1], vec![1.0]), false);
        let b = tape.leaf(&t(&[1], vec![0.0]), false);
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 3]);
        assert_eq!(tape.values(y), &[1.0; 9]);
    }

    #[test]
    fn same_padding_arithmetic() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 5, 5], vec![0.5; 25]), false);
        let k = tape.leaf(&Tensor::zeros(&[1, 1, 9, 9]), false);
        let b = tape.leaf(&Tensor::zeros(&[1]), false);
        let y = tape.conv2d(x, k, b, 1, 4).unwrap();
        assert_eq!(tape.shape(y), &[1, 5, 5]);
    }

    #[test]
    fn conv_channel_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros(&[2, 4, 4]), false);
        let k = tape.leaf(&Tensor::zeros(&[1, 3, 3, 3]), false);
        let b = tape.leaf(&Tensor::zeros(&[1]), false);
        assert!(matches!(
            tape.conv2d(x, k, b, 1, 1),
            Err(AutodiffError::Dimension(_))
        ));
    }

    #[test]
    fn leaky_relu_definition_and_degenerate_slope() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[2], vec![1.0, -1.0]), false);
        let y = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.values(y), &[1.0, -0.01]);
        let z = tape.leaky_relu(x, 0.0);
        assert_eq!(tape.values(z), &[1.0, 0.0]);
    }

    #[test]
    fn max_pool_window_and_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), false);
        let y = tape.max_pool2d(x, 2, 2).unwrap();
        assert_eq!(tape.values(y), &[4.0]);
        assert!(matches!(
            tape.max_pool2d(x, 3, 1),
            Err(AutodiffError::Dimension(_))
        ));
    }

    #[test]
    fn max_pool_constant_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 4, 4], vec![0.7; 16]), false);
        let y = tape.max_pool2d(x, 2, 2).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 2]);
        assert!(tape.values(y).iter().all(|&v| v == 0.7));
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[3], vec![1.0, 2.0, 3.0]), false);
        let eye = tape.leaf(
            &t(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            false,
        );
        let zb = tape.leaf(&Tensor::zeros(&[3]), false);
        let y = tape.dense(x, eye, zb).unwrap();
        assert_eq!(tape.values(y), &[1.0, 2.0, 3.0]);

        let zero_w = tape.leaf(&Tensor::zeros(&[2, 3]), false);
        let b = tape.leaf(&t(&[2], vec![5.0, -1.0]), false);
        let z = tape.dense(x, zero_w, b).unwrap();
        assert_eq!(tape.values(z), &[5.0, -1.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::new();
        let logits = tape.leaf(&Tensor::zeros(&[6]), false);
        let loss = tape.softmax_cross_entropy(logits, 2).unwrap();
        let expected = crate::math::ln(6.0);
        assert!((tape.scalar_value(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_overflow_safe() {
        let mut tape = Tape::new();
        let mut v = vec![0.0; 6];
        v[0] = 1000.0;
        let logits = tape.leaf(&t(&[6], v), false);
        let loss = tape.softmax_cross_entropy(logits, 0).unwrap();
        let l = tape.scalar_value(loss);
        assert!(l.is_finite());
        assert!(l.abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut tape = Tape::new();
        let logits = tape.leaf(&Tensor::zeros(&[6]), false);
        assert!(matches!(
            tape.softmax_cross_entropy(logits, 6),
            Err(AutodiffError::Index(_))
        ));
    }

    #[test]
    fn softmax_sums_to_one_and_positive() {
        let mut tape = Tape::new();
        let logits = tape.leaf(&t(&[6], vec![3.0, -2.0, 0.5, 11.0, -7.0, 0.0]), false);
        let p = tape.softmax_of(logits);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[4], vec![1.0, 2.0, 3.0, 4.0]), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn reuse_accumulates_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1], vec![3.0]), true);
        let y = tape.leaky_relu(x, 0.5);
        let z = tape.add(y, y).unwrap();
        let s = tape.sum(z);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_contract_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[2], vec![1.0, 2.0]), true);
        let y = tape.leaky_relu(x, 0.1);
        assert!(matches!(
            tape.backward(y),
            Err(AutodiffError::Contract(_))
        ));
    }

    #[test]
    fn pool_backward_routes_to_argmax_only() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 2, 2], vec![1.0, 2.0, 5.0, 4.0]), true);
        let y = tape.max_pool2d(x, 2, 2).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
