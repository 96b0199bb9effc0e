use super::{Real, Rng, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Transpose(Var),
    RepeatRows(Var),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    AffineRows {
        x: Var,
        gain: Var,
        bias: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<F>,
    },
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every operation's inputs
/// precede it. A tape belongs to one worker; build one per sample when
/// running forward passes in parallel.
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    backward_done: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn is_scalar<F>(t: &Tensor<F>) -> bool
where
    F: Real,
{
    t.numel() == 1 && t.ndim() <= 1
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf (parameter or input under test).
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Detached leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<F>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Clears gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push_raw(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, rg))
    }

    /// Hash of every piecewise choice recorded so far: ReLU input signs and
    /// pooling winners. Two passes with equal signatures evaluated the same
    /// smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (i, n) in self.nodes.iter().enumerate() {
            match &n.op {
                Op::Relu(x) => {
                    i.hash(&mut h);
                    for &v in self.val(*x).data() {
                        (v > F::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    fn val(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    // ---------------------------------------------------------------- linear algebra

    /// `a[m,k] · b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        matmul_into(self.val(a).data(), self.val(b).data(), &mut out, m, k, n);
        self.push("matmul", Tensor::new([m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    /// Fully connected map `x[n,in] · w[out,in]ᵀ + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.val(x).shape(), self.val(w).shape());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(Error::shape("linear", format!("x {sx:?}, w {sw:?}")));
        }
        let (n, din, dout) = (sx[0], sx[1], sw[0]);
        if let Some(b) = b {
            if self.val(b).shape() != [dout] {
                return Err(Error::shape(
                    "linear",
                    format!("bias {:?}, want [{dout}]", self.val(b).shape()),
                ));
            }
        }
        let xd = self.val(x).data();
        let wd = self.val(w).data();
        let bd = b.map(|b| self.val(b).data());
        let mut out = vec![F::zero(); n * dout];
        for i in 0..n {
            let xr = &xd[i * din..(i + 1) * din];
            for o in 0..dout {
                let wr = &wd[o * din..(o + 1) * din];
                let mut s = F::zero();
                for k in 0..din {
                    s += xr[k] * wr[k];
                }
                if let Some(bd) = bd {
                    s += bd[o];
                }
                out[i * dout + o] = s;
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", Tensor::new([n, dout], out)?, Op::Linear { x, w, b }, &inputs)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.val(x).shape();
        if s.len() != 2 {
            return Err(Error::shape("transpose", format!("{s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.val(x).data();
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        self.push("transpose", Tensor::new([c, r], out)?, Op::Transpose(x), &[x])
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<(Tensor<F>, ())> {
        let (ta, tb) = (self.val(a), self.val(b));
        let out = if ta.shape() == tb.shape() {
            Tensor::new(
                ta.shape().to_vec(),
                ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
            )?
        } else if is_scalar(tb) {
            let y = tb.data()[0];
            ta.map(|x| f(x, y))
        } else if is_scalar(ta) {
            let x = ta.data()[0];
            tb.map(|y| f(x, y))
        } else {
            return Err(Error::shape(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        };
        Ok((out, ()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary("add", a, b, |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: F) -> Result<Var> {
        let t = self.val(x).map(|v| v * c);
        self.push("scale", t, Op::Scale(x, c), &[x])
    }

    // ---------------------------------------------------------------- structural

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "empty list"))?;
        let base = self.val(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.val(*p).shape();
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = dims(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let t = self.val(*p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        self.push(
            "concat",
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    /// `x[.., start..start+len, ..]` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.val(x).shape().to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::shape(
                "slice",
                format!("{s:?} axis {axis} [{start}, {})", start + len),
            ));
        }
        let (outer, ext, inner) = dims(&s, axis);
        let d = self.val(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        self.push("slice", Tensor::new(shape, out)?, Op::Slice { x, axis, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.val(x).clone().reshape(shape.to_vec())?;
        self.push("reshape", t, Op::Reshape(x), &[x])
    }

    /// Tiles a vector `[d]` into `n` identical rows `[n,d]`.
    pub fn repeat_rows(&mut self, v: Var, n: usize) -> Result<Var> {
        let t = self.val(v);
        if t.ndim() != 1 {
            return Err(Error::shape("repeat_rows", format!("{:?}", t.shape())));
        }
        let d = t.numel();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            out.extend_from_slice(t.data());
        }
        self.push("repeat_rows", Tensor::new([n, d], out)?, Op::RepeatRows(v), &[v])
    }

    /// Column means of `[n,d]`, giving `[d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if t.ndim() != 2 || t.shape()[0] == 0 {
            return Err(Error::shape("mean_rows", format!("{:?}", t.shape())));
        }
        let (n, d) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![F::zero(); d];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(t.row(i)) {
                *o += v;
            }
        }
        let inv = F::one() / F::lit(n as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        self.push("mean_rows", Tensor::new([d], out)?, Op::MeanRows(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: F = self.val(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if t.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s: F = t.data().iter().copied().sum::<F>() / F::lit(t.numel() as f64);
        self.push("mean", Tensor::scalar(s), Op::Mean(x), &[x])
    }

    // ---------------------------------------------------------------- convolution

    /// Valid (unpadded) stride-1 cross-correlation of `x[C,H,W]` with `k[O,C,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (sx, sk, sb) = (self.val(x).shape(), self.val(k).shape(), self.val(b).shape());
        if sx.len() != 3 || sk.len() != 4 || sk[1] != sx[0] || sb != [sk[0]] {
            return Err(Error::shape("conv2d", format!("x {sx:?}, k {sk:?}, b {sb:?}")));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let (o, kh, kw) = (sk[0], sk[2], sk[3]);
        if h < kh || w < kw {
            return Err(Error::shape(
                "conv2d",
                format!("input {h}x{w} smaller than kernel {kh}x{kw}"),
            ));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let xd = self.val(x).data();
        let kd = self.val(k).data();
        let bd = self.val(b).data();
        let mut out = vec![F::zero(); o * oh * ow];
        for oc in 0..o {
            let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bd[oc]);
            for ic in 0..c {
                let xin = &xd[ic * h * w..(ic + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = kd[((oc * c + ic) * kh + ky) * kw + kx];
                        for y in 0..oh {
                            let src = &xin[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                            let dst = &mut plane[y * ow..(y + 1) * ow];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        self.push(
            "conv2d",
            Tensor::new([o, oh, ow], out)?,
            Op::Conv2d { x, k, b },
            &[x, k, b],
        )
    }

    /// Max pooling over `window×window` patches with the same stride.
    /// Ties resolve to the first element in scan order.
    pub fn maxpool2d(&mut self, x: Var, window: usize) -> Result<Var> {
        let s = self.val(x).shape();
        if s.len() != 3 || window == 0 || s[1] < window || s[2] < window {
            return Err(Error::shape("maxpool2d", format!("{s:?} window {window}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / window, w / window);
        let d = self.val(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = ch * h * w + (y * window) * w + xx * window;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = ch * h * w + (y * window + dy) * w + xx * window + dx;
                            if d[i] > d[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(d[best]);
                    arg.push(best);
                }
            }
        }
        self.push(
            "maxpool2d",
            Tensor::new([c, oh, ow], out)?,
            Op::MaxPool { x, argmax: arg },
            &[x],
        )
    }

    /// Per-channel maximum of `x[C,H,W]`, giving `[C]`.
    pub fn global_maxpool(&mut self, x: Var) -> Result<Var> {
        let s = self.val(x).shape();
        if s.len() != 3 || s[1] == 0 || s[2] == 0 {
            return Err(Error::shape("global_maxpool", format!("{s:?}")));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let d = self.val(x).data();
        let mut out = Vec::with_capacity(c);
        let mut arg = Vec::with_capacity(c);
        for ch in 0..c {
            let mut best = ch * hw;
            for i in ch * hw..(ch + 1) * hw {
                if d[i] > d[best] {
                    best = i;
                }
            }
            out.push(d[best]);
            arg.push(best);
        }
        self.push(
            "global_maxpool",
            Tensor::new([c], out)?,
            Op::MaxPool { x, argmax: arg },
            &[x],
        )
    }

    // ---------------------------------------------------------------- activations

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x).map(|v| if v > F::zero() { v } else { F::zero() });
        self.push("relu", t, Op::Relu(x), &[x])
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x).map(|v| v * std_normal_cdf(v));
        self.push("gelu", t, Op::Gelu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x).map(sigmoid);
        self.push("sigmoid", t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x).map(|v| v.tanh());
        self.push("tanh", t, Op::Tanh(x), &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.softmax_value(x, axis, false)?;
        self.push("softmax", t, Op::Softmax { x, axis }, &[x])
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.softmax_value(x, axis, true)?;
        self.push("log_softmax", t, Op::LogSoftmax { x, axis }, &[x])
    }

    fn softmax_value(&self, x: Var, axis: usize, log: bool) -> Result<Tensor<F>> {
        let t = self.val(x);
        if axis >= t.ndim() || t.shape()[axis] == 0 {
            return Err(Error::shape("softmax", format!("axis {axis} for {:?}", t.shape())));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite { op: "softmax input" });
        }
        let (outer, len, inner) = dims(t.shape(), axis);
        let d = t.data();
        let mut out = vec![F::zero(); d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut m = d[at(0)];
                for k in 1..len {
                    m = m.max(d[at(k)]);
                }
                let mut z = F::zero();
                for k in 0..len {
                    z += (d[at(k)] - m).exp();
                }
                let lz = z.ln();
                for k in 0..len {
                    let shifted = d[at(k)] - m;
                    out[at(k)] = if log { shifted - lz } else { shifted.exp() / z };
                }
            }
        }
        Tensor::new(t.shape().to_vec(), out)
    }

    /// Standardises the last axis, then applies `gain ⊙ x̂ + bias`.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let t = self.val(x);
        let d = *t
            .shape()
            .last()
            .ok_or_else(|| Error::shape("layernorm", "scalar input"))?;
        if d == 0 || self.val(gain).shape() != [d] || self.val(bias).shape() != [d] {
            return Err(Error::shape(
                "layernorm",
                format!(
                    "x {:?}, gain {:?}, bias {:?}",
                    t.shape(),
                    self.val(gain).shape(),
                    self.val(bias).shape()
                ),
            ));
        }
        let rows = t.numel() / d;
        let xd = t.data();
        let (gd, bd) = (self.val(gain).data(), self.val(bias).data());
        let inv_d = F::one() / F::lit(d as f64);
        let mut xhat = vec![F::zero(); xd.len()];
        let mut rstd = vec![F::zero(); rows];
        let mut out = vec![F::zero(); xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mu = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mu) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * gd[j] + bd[j];
            }
        }
        let shape = t.shape().to_vec();
        self.push(
            "layernorm",
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        )
    }

    /// Per-feature affine map `x[n,d] ⊙ gain[d] + bias[d]`.
    pub fn affine_rows(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = self.val(x);
        let ok = t.ndim() == 2 && self.val(gain).shape() == [t.shape()[1]] && self.val(bias).shape() == [t.shape()[1]];
        if !ok {
            return Err(Error::shape("affine_rows", format!("x {:?}", t.shape())));
        }
        let d = t.shape()[1];
        let (gd, bd) = (self.val(gain).data(), self.val(bias).data());
        let out: Vec<F> = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * gd[i % d] + bd[i % d])
            .collect();
        let shape = t.shape().to_vec();
        self.push(
            "affine_rows",
            Tensor::new(shape, out)?,
            Op::AffineRows { x, gain, bias },
            &[x, gain, bias],
        )
    }

    /// Inverted dropout: zero with probability `p`, scale survivors by `1/(1-p)`.
    /// Identity when `training` is false or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = F::lit(1.0 / (1.0 - p));
        let n = self.val(x).numel();
        let mask: Vec<F> = (0..n).map(|_| if rng.unit() < p { F::zero() } else { keep }).collect();
        let t = self.val(x);
        let out: Vec<F> = t.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = t.shape().to_vec();
        self.push("dropout", Tensor::new(shape, out)?, Op::Dropout { x, mask }, &[x])
    }

    /// Gathers `x[i, idx[i]]` from a `[n,K]` tensor.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.val(x);
        if t.ndim() != 2 || t.shape()[0] != idx.len() {
            return Err(Error::shape(
                "pick",
                format!("{:?} with {} indices", t.shape(), idx.len()),
            ));
        }
        let k = t.shape()[1];
        if let Some(&bad) = idx.iter().find(|&&i| i >= k) {
            return Err(Error::InvalidArgument(format!("class index {bad} out of range 0..{k}")));
        }
        let out: Vec<F> = idx.iter().enumerate().map(|(r, &c)| t.data()[r * k + c]).collect();
        self.push(
            "pick",
            Tensor::new([idx.len()], out)?,
            Op::Pick { x, idx: idx.to_vec() },
            &[x],
        )
    }

    // ---------------------------------------------------------------- backward

    /// Accumulates d`loss`/d`v` into every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.nodes[loss.0].value.shape();
        if self.nodes[loss.0].value.numel() != 1 || shape.len() > 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backprop_node(i, &g);
            }
            self.grads[i] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[F]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [F])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![F::zero(); nodes[v.0].value.numel()]);
            f(slot);
        };
        let val = |v: Var| &nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                acc(*a, &mut |ga| {
                    // ga += g · bᵀ
                    let bd = val(*b).data();
                    for r in 0..m {
                        for j in 0..k {
                            let mut s = F::zero();
                            for c in 0..n {
                                s += g[r * n + c] * bd[j * n + c];
                            }
                            ga[r * k + j] += s;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    // gb += aᵀ · g
                    let ad = val(*a).data();
                    for r in 0..m {
                        for j in 0..k {
                            let av = ad[r * k + j];
                            for c in 0..n {
                                gb[j * n + c] += av * g[r * n + c];
                            }
                        }
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (n, din) = (val(*x).shape()[0], val(*x).shape()[1]);
                let dout = val(*w).shape()[0];
                acc(*x, &mut |gx| {
                    let wd = val(*w).data();
                    for r in 0..n {
                        for o in 0..dout {
                            let gv = g[r * dout + o];
                            let wr = &wd[o * din..(o + 1) * din];
                            let row = &mut gx[r * din..(r + 1) * din];
                            for (d, &wv) in row.iter_mut().zip(wr) {
                                *d += gv * wv;
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    let xd = val(*x).data();
                    for r in 0..n {
                        let xr = &xd[r * din..(r + 1) * din];
                        for o in 0..dout {
                            let gv = g[r * dout + o];
                            let row = &mut gw[o * din..(o + 1) * din];
                            for (d, &xv) in row.iter_mut().zip(xr) {
                                *d += gv * xv;
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    acc(*b, &mut |gb| {
                        for r in 0..n {
                            for o in 0..dout {
                                gb[o] += g[r * dout + o];
                            }
                        }
                    });
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (val(*x).shape()[0], val(*x).shape()[1]);
                acc(*x, &mut |gx| {
                    for a in 0..r {
                        for b in 0..c {
                            gx[a * c + b] += g[b * r + a];
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -F::one()
                } else {
                    F::one()
                };
                let n_out = g.len();
                acc(*a, &mut |ga| reduce_into(ga, g, n_out, F::one()));
                acc(*b, &mut |gb| reduce_into(gb, g, n_out, sign));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(*a, &mut |ga| mul_grad_into(ga, g, tb.data()));
                acc(*b, &mut |gb| mul_grad_into(gb, g, ta.data()));
            }
            Op::Scale(x, c) => {
                acc(*x, &mut |gx| {
                    for (d, &gv) in gx.iter_mut().zip(g) {
                        *d += gv * *c;
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = dims(node.value.shape(), *axis);
                let total = node.value.shape()[*axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let chunk = val(*p).shape()[*axis] * inner;
                    acc(*p, &mut |gp| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            for (d, &s) in gp[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    offset += chunk;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, ext, inner) = dims(val(*x).shape(), *axis);
                let len = node.value.shape()[*axis];
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        let base = o * ext * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (d, &s) in gx[base..base + len * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::RepeatRows(v) => {
                let d = val(*v).numel();
                acc(*v, &mut |gv| {
                    for chunk in g.chunks(d) {
                        add_into(gv, chunk);
                    }
                });
            }
            Op::MeanRows(x) => {
                let (n, d) = (val(*x).shape()[0], val(*x).shape()[1]);
                let inv = F::one() / F::lit(n as f64);
                acc(*x, &mut |gx| {
                    for r in 0..n {
                        for j in 0..d {
                            gx[r * d + j] += g[j] * inv;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let inv = g[0] / F::lit(val(*x).numel() as f64);
                acc(*x, &mut |gx| gx.iter_mut().for_each(|d| *d += inv));
            }
            Op::Conv2d { x, k, b } => {
                let (sx, sk) = (val(*x).shape(), val(*k).shape());
                let (c, h, w) = (sx[0], sx[1], sx[2]);
                let (o, kh, kw) = (sk[0], sk[2], sk[3]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                acc(*b, &mut |gb| {
                    for oc in 0..o {
                        gb[oc] += g[oc * oh * ow..(oc + 1) * oh * ow].iter().copied().sum::<F>();
                    }
                });
                acc(*k, &mut |gk| {
                    let xd = val(*x).data();
                    for oc in 0..o {
                        let gp = &g[oc * oh * ow..(oc + 1) * oh * ow];
                        for ic in 0..c {
                            let xin = &xd[ic * h * w..(ic + 1) * h * w];
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let mut s = F::zero();
                                    for y in 0..oh {
                                        let src = &xin[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                        let gr = &gp[y * ow..(y + 1) * ow];
                                        for (&a, &bv) in gr.iter().zip(src) {
                                            s += a * bv;
                                        }
                                    }
                                    gk[((oc * c + ic) * kh + ky) * kw + kx] += s;
                                }
                            }
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    let kd = val(*k).data();
                    for oc in 0..o {
                        let gp = &g[oc * oh * ow..(oc + 1) * oh * ow];
                        for ic in 0..c {
                            let gin = &mut gx[ic * h * w..(ic + 1) * h * w];
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let wv = kd[((oc * c + ic) * kh + ky) * kw + kx];
                                    for y in 0..oh {
                                        let dst = &mut gin[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                        let gr = &gp[y * ow..(y + 1) * ow];
                                        for (d, &a) in dst.iter_mut().zip(gr) {
                                            *d += wv * a;
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool { x, argmax } => {
                acc(*x, &mut |gx| {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        gx[src] += gv;
                    }
                });
            }
            Op::Relu(x) => {
                let xd = val(*x).data();
                acc(*x, &mut |gx| {
                    for ((d, &gv), &v) in gx.iter_mut().zip(g).zip(xd) {
                        if v > F::zero() {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let xd = val(*x).data();
                acc(*x, &mut |gx| {
                    for ((d, &gv), &v) in gx.iter_mut().zip(g).zip(xd) {
                        *d += gv * (std_normal_cdf(v) + v * std_normal_pdf(v));
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for ((d, &gv), &s) in gx.iter_mut().zip(g).zip(y) {
                        *d += gv * s * (F::one() - s);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for ((d, &gv), &t) in gx.iter_mut().zip(g).zip(y) {
                        *d += gv * (F::one() - t * t);
                    }
                });
            }
            Op::Softmax { x, axis } | Op::LogSoftmax { x, axis } => {
                let log = matches!(node.op, Op::LogSoftmax { .. });
                let (outer, len, inner) = dims(node.value.shape(), *axis);
                let y = node.value.data();
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            if log {
                                let gs: F = (0..len).map(|k| g[at(k)]).sum();
                                for k in 0..len {
                                    gx[at(k)] += g[at(k)] - y[at(k)].exp() * gs;
                                }
                            } else {
                                let dot: F = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                                for k in 0..len {
                                    gx[at(k)] += y[at(k)] * (g[at(k)] - dot);
                                }
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = val(*gain).numel();
                let rows = xhat.len() / d;
                let gd = val(*gain).data();
                acc(*gain, &mut |gg| {
                    for r in 0..rows {
                        for j in 0..d {
                            gg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for r in 0..rows {
                        for j in 0..d {
                            gb[j] += g[r * d + j];
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    let inv_d = F::one() / F::lit(d as f64);
                    for r in 0..rows {
                        let mut m1 = F::zero();
                        let mut m2 = F::zero();
                        for j in 0..d {
                            let gh = g[r * d + j] * gd[j];
                            m1 += gh;
                            m2 += gh * xhat[r * d + j];
                        }
                        m1 *= inv_d;
                        m2 *= inv_d;
                        for j in 0..d {
                            let gh = g[r * d + j] * gd[j];
                            gx[r * d + j] += rstd[r] * (gh - m1 - xhat[r * d + j] * m2);
                        }
                    }
                });
            }
            Op::AffineRows { x, gain, bias } => {
                let d = val(*gain).numel();
                let (xd, gd) = (val(*x).data(), val(*gain).data());
                acc(*x, &mut |gx| {
                    for (i, (dst, &gv)) in gx.iter_mut().zip(g).enumerate() {
                        *dst += gv * gd[i % d];
                    }
                });
                acc(*gain, &mut |gg| {
                    for (i, &gv) in g.iter().enumerate() {
                        gg[i % d] += gv * xd[i];
                    }
                });
                acc(*bias, &mut |gb| {
                    for (i, &gv) in g.iter().enumerate() {
                        gb[i % d] += gv;
                    }
                });
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |gx| {
                    for ((d, &gv), &m) in gx.iter_mut().zip(g).zip(mask) {
                        *d += gv * m;
                    }
                });
            }
            Op::Pick { x, idx } => {
                let k = val(*x).shape()[1];
                acc(*x, &mut |gx| {
                    for (r, &c) in idx.iter().enumerate() {
                        gx[r * k + c] += g[r];
                    }
                });
            }
        }
    }
}

fn add_into<F: Real>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Adds `sign·g` into `dst`, summing everything when `dst` is a broadcast scalar.
fn reduce_into<F: Real>(dst: &mut [F], g: &[F], n_out: usize, sign: F) {
    if dst.len() == n_out {
        for (d, &s) in dst.iter_mut().zip(g) {
            *d += sign * s;
        }
    } else {
        dst[0] += sign * g.iter().copied().sum::<F>();
    }
}

fn mul_grad_into<F: Real>(dst: &mut [F], g: &[F], other: &[F]) {
    let n = g.len();
    match (dst.len() == n, other.len() == n) {
        (true, true) => {
            for ((d, &gv), &o) in dst.iter_mut().zip(g).zip(other) {
                *d += gv * o;
            }
        }
        (true, false) => {
            let o = other[0];
            for (d, &gv) in dst.iter_mut().zip(g) {
                *d += gv * o;
            }
        }
        (false, _) => {
            let s: F = g.iter().zip(other).map(|(&gv, &o)| gv * o).sum();
            dst[0] += s;
        }
    }
}

pub(crate) fn matmul_into<F: Real>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for j in 0..k {
            let av = a[i * k + j];
            if av == F::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[j * n..(j + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn std_normal_cdf<F: Real>(v: F) -> F {
    F::lit(0.5) * (F::one() + (v * F::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn std_normal_pdf<F: Real>(v: F) -> F {
    F::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt()) * (-(v * v) * F::lit(0.5)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let y = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let y = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros([2, 3]));
        let b = tape.leaf(Tensor::zeros([2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn add_zero_and_mul_one_are_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.5, -2.0, 0.25, 3.0]));
        let z = tape.constant(Tensor::zeros([2, 2]));
        let o = tape.constant(Tensor::ones([2, 2]));
        let a = tape.add(x, z).unwrap();
        let m = tape.mul(x, o).unwrap();
        assert_eq!(tape.value(a), tape.value(x));
        assert_eq!(tape.value(m), tape.value(x));
    }

    #[test]
    fn elementwise_rejects_non_scalar_broadcast() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros([2, 2]));
        let b = tape.leaf(Tensor::zeros([2]));
        assert!(tape.add(a, b).is_err());
        let s = tape.leaf(Tensor::scalar(2.0));
        let y = tape.mul(a, s).unwrap();
        assert_eq!(tape.shape(y), &[2, 2]);
    }

    #[test]
    fn concat_shapes_and_errors() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros([2, 3]));
        let b = tape.leaf(Tensor::zeros([2, 5]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 8]);
        let one = tape.concat(&[a], 1).unwrap();
        assert_eq!(tape.value(one), tape.value(a));
        assert!(tape.concat(&[], 0).is_err());
        assert!(tape.concat(&[a, b], 0).is_err());
    }

    #[test]
    fn conv_zero_kernel_gives_bias_planes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([2, 5, 6], |i| i as f64 * 0.1));
        let k = tape.leaf(Tensor::zeros([3, 2, 3, 3]));
        let b = tape.leaf(t(&[3], &[0.5, -1.0, 2.0]));
        let y = tape.conv2d(x, k, b).unwrap();
        assert_eq!(tape.shape(y), &[3, 3, 4]);
        for (oc, &bias) in [0.5, -1.0, 2.0].iter().enumerate() {
            assert!(tape.value(y).data()[oc * 12..(oc + 1) * 12].iter().all(|&v| v == bias));
        }
    }

    #[test]
    fn conv_delta_kernel_crops_center() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([1, 5, 5], |i| i as f64));
        let mut kd = vec![0.0; 9];
        kd[4] = 1.0;
        let k = tape.leaf(t(&[1, 1, 3, 3], &kd));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = tape.conv2d(x, k, b).unwrap();
        let expect: Vec<f64> = (1..4).flat_map(|r| (1..4).map(move |c| (r * 5 + c) as f64)).collect();
        assert_eq!(tape.value(y).data(), expect.as_slice());
    }

    #[test]
    fn conv_rejects_undersized_input() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([1, 2, 5]));
        let k = tape.leaf(Tensor::zeros([1, 1, 3, 3]));
        let b = tape.leaf(Tensor::zeros([1]));
        assert!(tape.conv2d(x, k, b).is_err());
    }

    #[test]
    fn maxpool_single_window_and_ties() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.maxpool2d(x, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);

        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 4, 4], 7.0));
        let y = tape.maxpool2d(x, 2).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 7.0));
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        let g = tape.grad(x).unwrap();
        // first element of each 2x2 window in scan order
        let mut expect = vec![0.0; 16];
        for i in [0, 2, 8, 10] {
            expect[i] = 1.0;
        }
        assert_eq!(g.data(), expect.as_slice());
    }

    #[test]
    fn activations_at_known_points() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[0.0, -1.0]));
        let g = tape.gelu(x).unwrap();
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(g).data()[0], 0.0);
        assert_eq!(tape.value(r).data()[1], 0.0);
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([5], 3.3));
        let s = tape.softmax(x, 0).unwrap();
        for &v in tape.value(s).data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([2, 6], 4.0));
        let g = tape.leaf(Tensor::ones([6]));
        let b = tape.leaf(Tensor::zeros([6]));
        let y = tape.layernorm(x, g, b, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layernorm_rows_are_standardised() {
        let mut rng = Rng::new(3);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::uniform([3, 16], 5.0, &mut rng));
        let g = tape.leaf(Tensor::ones([16]));
        let b = tape.leaf(Tensor::zeros([16]));
        let y = tape.layernorm(x, g, b, 1e-5).unwrap();
        for r in 0..3 {
            let row = tape.value(y).row(r);
            let mu: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 16.0;
            assert!(mu.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn dropout_identity_cases_and_range() {
        let mut rng = Rng::new(1);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones([10]));
        assert_eq!(tape.dropout(x, 0.1, false, &mut rng).unwrap(), x);
        let y = tape.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
        assert!(tape.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_rate_matches_p() {
        let mut rng = Rng::new(2024);
        let mut tape = Tape::<f32>::new();
        let n = 1_000_000;
        let x = tape.leaf(Tensor::ones([n]));
        let y = tape.dropout(x, 0.1, true, &mut rng).unwrap();
        let dropped = tape.value(y).data().iter().filter(|&&v| v == 0.0).count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.1).abs() <= 0.003, "rate {rate}");
        let kept = tape.value(y).data().iter().find(|&&v| v != 0.0).copied().unwrap();
        assert!((kept - 1.0 / 0.9).abs() < 1e-6);
    }

    #[test]
    fn backward_sum_and_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let xx = tape.mul(x, x).unwrap();
        let s = tape.sum(xx).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_repeat() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones([3]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::BackwardTwice)));
        tape.reset_grads();
        tape.backward(s).unwrap();
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones([3]));
        let c = tape.constant(Tensor::full([3], 2.0));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([2], f64::MAX));
        assert!(matches!(tape.add(x, x), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn pick_rejects_out_of_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([2, 4]));
        assert!(tape.pick(x, &[0, 4]).is_err());
        assert!(tape.pick(x, &[0, 3]).is_ok());
    }
}
