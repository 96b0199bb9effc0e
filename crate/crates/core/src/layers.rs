//! Neural building blocks: linear maps, the convolutional frame encoder, a
//! graph convolution, layer normalisation, a bidirectional LSTM and
//! token-factorised cross-attention.
//!
//! Layers only hold [`ParamId`]s; values live in a [`ParamStore`] and are bound
//! to a tape through a [`Ctx`] on every pass.

use crate::error::{Error, Result};
use crate::params::{Ctx, ParamId, ParamStore};
use crate::tensor::{Real, Tensor, Var};

/// Width of every extractor output and of each LSTM direction.
pub const HIDDEN: usize = 64;
/// Cross-attention factorises a 128-vector into this many tokens...
pub const TOKENS: usize = 8;
/// ...of this width.
pub const TOKEN_DIM: usize = 16;
/// Smallest frame side that survives three valid 3×3 convolutions with two 2×2 pools in between.
pub const MIN_FRAME: usize = 18;
pub const LN_EPS: f64 = 1e-5;
pub const CONV_CHANNELS: [usize; 3] = [16, 32, 64];

fn fan_in_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

fn count<F: Real>(store: &ParamStore<F>, ids: &[ParamId]) -> usize {
    ids.iter().map(|&id| store.get(id).numel()).sum()
}

/// `y = x·Wᵀ + b` on row batches `[n, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        seed: u64,
    ) -> Self {
        let bound = fan_in_bound(d_in);
        let w = store.add_uniform(&format!("{name}.w"), &[d_out, d_in], bound, seed);
        let b = bias.then(|| store.add_uniform(&format!("{name}.b"), &[d_out], bound, seed));
        Linear { w, b, d_in, d_out }
    }

    pub fn formula(d_in: usize, d_out: usize, bias: bool) -> usize {
        d_out * d_in + if bias { d_out } else { 0 }
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        let mut ids = vec![self.w];
        ids.extend(self.b);
        count(store, &ids)
    }

    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, x: Var) -> Result<Var> {
        let w = ctx.param(self.w);
        let b = self.b.map(|b| ctx.param(b));
        ctx.tape.linear(x, w, b)
    }

    /// Applies the map to a single vector `[in]`, returning `[out]`.
    pub fn forward_vec<F: Real>(&self, ctx: &mut Ctx<F>, x: Var) -> Result<Var> {
        let row = ctx.tape.reshape(x, &[1, self.d_in])?;
        let y = self.forward(ctx, row)?;
        ctx.tape.reshape(y, &[self.d_out])
    }
}

/// Per-feature affine map `x ⊙ gain + bias`. Used to bring hidden states into
/// the cell-state space, where both are 128 wide.
#[derive(Clone, Debug)]
pub struct Diagonal {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl Diagonal {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::ones([dim]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([dim]));
        Diagonal { gain, bias, dim }
    }

    pub fn formula(dim: usize) -> usize {
        2 * dim
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        count(store, &[self.gain, self.bias])
    }

    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, x: Var) -> Result<Var> {
        let (g, b) = (ctx.param(self.gain), ctx.param(self.bias));
        ctx.tape.affine_rows(x, g, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::ones([dim]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([dim]));
        LayerNorm { gain, bias, dim }
    }

    pub fn formula(dim: usize) -> usize {
        2 * dim
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        count(store, &[self.gain, self.bias])
    }

    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, x: Var) -> Result<Var> {
        let (g, b) = (ctx.param(self.gain), ctx.param(self.bias));
        ctx.tape.layernorm(x, g, b, F::lit(LN_EPS))
    }
}

/// Three conv blocks (16, 32, 64 filters; 3×3, stride 1, valid padding), each
/// followed by ReLU and a stride-2 max-pool; the last pool is global.
#[derive(Clone, Debug)]
pub struct ConvTrunk {
    pub kernels: [ParamId; 3],
    pub biases: [ParamId; 3],
    pub in_channels: usize,
}

impl ConvTrunk {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, in_channels: usize, seed: u64) -> Self {
        let mut c_in = in_channels;
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        for (i, &c_out) in CONV_CHANNELS.iter().enumerate() {
            let bound = fan_in_bound(c_in * 9);
            kernels.push(store.add_uniform(&format!("{name}.conv{}.w", i + 1), &[c_out, c_in, 3, 3], bound, seed));
            biases.push(store.add_uniform(&format!("{name}.conv{}.b", i + 1), &[c_out], bound, seed));
            c_in = c_out;
        }
        ConvTrunk {
            kernels: kernels.try_into().expect("three blocks"),
            biases: biases.try_into().expect("three blocks"),
            in_channels,
        }
    }

    pub fn formula(in_channels: usize) -> usize {
        let mut c_in = in_channels;
        let mut n = 0;
        for &c_out in &CONV_CHANNELS {
            n += c_out * c_in * 9 + c_out;
            c_in = c_out;
        }
        n
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        count(store, &self.kernels) + count(store, &self.biases)
    }

    /// `frame[C,H,W]` to a 64-vector.
    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, frame: Var) -> Result<Var> {
        let s = ctx.tape.shape(frame).to_vec();
        if s.len() != 3 || s[0] != self.in_channels {
            return Err(Error::shape(
                "cnn",
                format!("frame {s:?}, want [{}, H, W]", self.in_channels),
            ));
        }
        if s[1] < MIN_FRAME || s[2] < MIN_FRAME {
            return Err(Error::shape(
                "cnn",
                format!("frame {}x{} below minimum {MIN_FRAME}x{MIN_FRAME}", s[1], s[2]),
            ));
        }
        let mut x = frame;
        for i in 0..3 {
            let (k, b) = (ctx.param(self.kernels[i]), ctx.param(self.biases[i]));
            x = ctx.tape.conv2d(x, k, b)?;
            x = ctx.tape.relu(x)?;
            x = if i < 2 {
                ctx.tape.maxpool2d(x, 2)?
            } else {
                ctx.tape.global_maxpool(x)?
            };
        }
        Ok(x)
    }
}

/// Frame encoder: a convolutional trunk plus a projection to 64.
///
/// Several encoders may hold the same trunk ids; each owns its projection.
#[derive(Clone, Debug)]
pub struct CnnEncoder {
    pub trunk: ConvTrunk,
    pub proj: Linear,
}

impl CnnEncoder {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, trunk: ConvTrunk, seed: u64) -> Self {
        let proj = Linear::new(store, &format!("{name}.proj"), CONV_CHANNELS[2], HIDDEN, true, seed);
        CnnEncoder { trunk, proj }
    }

    /// Encodes a single frame to `[64]`.
    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, frame: Var) -> Result<Var> {
        let f = self.trunk.forward(ctx, frame)?;
        self.proj.forward_vec(ctx, f)
    }

    /// Encodes `T` frames to `[T, 64]`.
    pub fn forward_seq<F: Real>(&self, ctx: &mut Ctx<F>, frames: &[Var]) -> Result<Var> {
        if frames.is_empty() {
            return Err(Error::shape("cnn", "no frames"));
        }
        let mut rows = Vec::with_capacity(frames.len());
        for &f in frames {
            let v = self.trunk.forward(ctx, f)?;
            rows.push(ctx.tape.reshape(v, &[1, CONV_CHANNELS[2]])?);
        }
        let x = ctx.tape.concat(&rows, 0)?;
        self.proj.forward(ctx, x)
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn gcn_normalize<F: Real>(a: &Tensor<F>) -> Result<Tensor<F>> {
    let s = a.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::shape("gcn_normalize", format!("{s:?} is not square")));
    }
    if a.data().iter().any(|&v| v < F::zero() || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "adjacency has negative or non-finite entries".into(),
        ));
    }
    let n = s[0];
    let mut m = a.data().to_vec();
    for i in 0..n {
        m[i * n + i] += F::one();
    }
    let inv_sqrt: Vec<F> = (0..n)
        .map(|i| F::one() / m[i * n..(i + 1) * n].iter().copied().sum::<F>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = m[i * n + j] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Tensor::new([n, n], m)
}

/// One graph convolution to 64 features, GELU, then a mean over nodes.
#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
}

impl GcnLayer {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_in: usize, seed: u64) -> Self {
        let bound = fan_in_bound(d_in);
        let w = store.add_uniform(&format!("{name}.w"), &[HIDDEN, d_in], bound, seed);
        let b = store.add_uniform(&format!("{name}.b"), &[HIDDEN], bound, seed);
        GcnLayer { w, b, d_in }
    }

    pub fn formula(d_in: usize) -> usize {
        HIDDEN * d_in + HIDDEN
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        count(store, &[self.w, self.b])
    }

    /// `mean_nodes(GELU(Â·X·Wᵀ + b))` for `Â[n,n]`, `X[n,d_in]`.
    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, a_hat: Var, x: Var) -> Result<Var> {
        let (sa, sx) = (ctx.tape.shape(a_hat).to_vec(), ctx.tape.shape(x).to_vec());
        if sa.len() != 2 || sa[0] != sa[1] || sx.len() != 2 || sx[0] != sa[0] || sx[1] != self.d_in {
            return Err(Error::shape(
                "gcn",
                format!("adjacency {sa:?}, features {sx:?}, in {}", self.d_in),
            ));
        }
        let ax = ctx.tape.matmul(a_hat, x)?;
        let (w, b) = (ctx.param(self.w), ctx.param(self.b));
        let y = ctx.tape.linear(ax, w, Some(b))?;
        let y = ctx.tape.gelu(y)?;
        ctx.tape.mean_rows(y)
    }
}

#[derive(Clone, Debug)]
struct LstmDir {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
}

/// Single-layer bidirectional LSTM with 64 units per direction.
/// Gate order within the stacked weights is input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct BiLstm {
    fwd: LstmDir,
    bwd: LstmDir,
    pub d_in: usize,
}

/// Per-timestep outputs and final states of a [`BiLstm`].
pub struct LstmOut {
    /// `[T, 128]`: row `t` is `h_fwd(t) ∥ h_bwd(t)`.
    pub h: Var,
    /// `[128]`: `c_fwd(T) ∥ c_bwd(1)`, the cell state each direction ends on.
    pub c: Var,
    /// `[128]`: `h_fwd(T) ∥ h_bwd(1)`.
    pub h_final: Var,
}

impl BiLstm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, d_in: usize, seed: u64) -> Self {
        let mut dir = |tag: &str| {
            let w_ih = store.add_uniform(
                &format!("{name}.{tag}.w_ih"),
                &[4 * HIDDEN, d_in],
                fan_in_bound(d_in),
                seed,
            );
            let w_hh = store.add_uniform(
                &format!("{name}.{tag}.w_hh"),
                &[4 * HIDDEN, HIDDEN],
                fan_in_bound(HIDDEN),
                seed,
            );
            let bias = Tensor::from_fn([4 * HIDDEN], |i| {
                if (HIDDEN..2 * HIDDEN).contains(&i) {
                    F::one()
                } else {
                    F::zero()
                }
            });
            let b = store.add(format!("{name}.{tag}.b"), bias);
            LstmDir { w_ih, w_hh, b }
        };
        let fwd = dir("fwd");
        let bwd = dir("bwd");
        BiLstm { fwd, bwd, d_in }
    }

    pub fn formula(d_in: usize) -> usize {
        2 * (4 * HIDDEN * (d_in + HIDDEN) + 4 * HIDDEN)
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        let ids = [
            self.fwd.w_ih,
            self.fwd.w_hh,
            self.fwd.b,
            self.bwd.w_ih,
            self.bwd.w_hh,
            self.bwd.b,
        ];
        count(store, &ids)
    }

    /// Runs one direction; returns hidden rows in time order and the last `(h, c)`.
    fn run<F: Real>(
        &self,
        ctx: &mut Ctx<F>,
        dir: &LstmDir,
        x: Var,
        t_len: usize,
        reverse: bool,
    ) -> Result<(Vec<Var>, Var, Var)> {
        let (w_ih, w_hh, b) = (ctx.param(dir.w_ih), ctx.param(dir.w_hh), ctx.param(dir.b));
        let xw = ctx.tape.linear(x, w_ih, Some(b))?;
        let mut h = ctx.input(Tensor::zeros([1, HIDDEN]));
        let mut c = ctx.input(Tensor::zeros([1, HIDDEN]));
        let mut hs = vec![h; t_len];
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let xt = ctx.tape.slice(xw, 0, t, 1)?;
            let hw = ctx.tape.linear(h, w_hh, None)?;
            let gates = ctx.tape.add(xt, hw)?;
            let gi = ctx.tape.slice(gates, 1, 0, HIDDEN)?;
            let gf = ctx.tape.slice(gates, 1, HIDDEN, HIDDEN)?;
            let gg = ctx.tape.slice(gates, 1, 2 * HIDDEN, HIDDEN)?;
            let go = ctx.tape.slice(gates, 1, 3 * HIDDEN, HIDDEN)?;
            let i = ctx.tape.sigmoid(gi)?;
            let f = ctx.tape.sigmoid(gf)?;
            let g = ctx.tape.tanh(gg)?;
            let o = ctx.tape.sigmoid(go)?;
            let keep = ctx.tape.mul(f, c)?;
            let write = ctx.tape.mul(i, g)?;
            c = ctx.tape.add(keep, write)?;
            let tc = ctx.tape.tanh(c)?;
            h = ctx.tape.mul(o, tc)?;
            hs[t] = h;
        }
        Ok((hs, h, c))
    }

    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, x: Var) -> Result<LstmOut> {
        let s = ctx.tape.shape(x).to_vec();
        if s.len() != 2 || s[1] != self.d_in {
            return Err(Error::shape("bilstm", format!("input {s:?}, want [T, {}]", self.d_in)));
        }
        let t_len = s[0];
        if t_len == 0 {
            return Err(Error::Empty("bilstm input sequence".into()));
        }
        let (hf, hf_last, cf_last) = self.run(ctx, &self.fwd, x, t_len, false)?;
        let (hb, hb_last, cb_last) = self.run(ctx, &self.bwd, x, t_len, true)?;
        let mut rows = Vec::with_capacity(t_len);
        for t in 0..t_len {
            rows.push(ctx.tape.concat(&[hf[t], hb[t]], 1)?);
        }
        let h = ctx.tape.concat(&rows, 0)?;
        let c = ctx.tape.concat(&[cf_last, cb_last], 1)?;
        let c = ctx.tape.reshape(c, &[2 * HIDDEN])?;
        let hl = ctx.tape.concat(&[hf_last, hb_last], 1)?;
        let h_final = ctx.tape.reshape(hl, &[2 * HIDDEN])?;
        Ok(LstmOut { h, c, h_final })
    }
}

/// Single-head scaled dot-product attention between 8×16 token views of a
/// query vector and a key/value vector. Keys and values share one projection.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub wq: ParamId,
    pub wkv: ParamId,
}

pub const ATTN_DIM: usize = TOKENS * TOKEN_DIM;

impl CrossAttention {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, seed: u64) -> Self {
        let bound = fan_in_bound(ATTN_DIM);
        let wq = store.add_uniform(&format!("{name}.wq"), &[ATTN_DIM, ATTN_DIM], bound, seed);
        let wkv = store.add_uniform(&format!("{name}.wkv"), &[ATTN_DIM, ATTN_DIM], bound, seed);
        CrossAttention { wq, wkv }
    }

    pub fn formula() -> usize {
        2 * ATTN_DIM * ATTN_DIM
    }

    pub fn param_count<F: Real>(&self, store: &ParamStore<F>) -> usize {
        count(store, &[self.wq, self.wkv])
    }

    /// Attends each row of `q[n,128]` over the tokens of `kv[128]`; returns `[n,128]`
    /// and the attention weights `[n·8, 8]`.
    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, q: Var, kv: Var) -> Result<(Var, Var)> {
        let (sq, skv) = (ctx.tape.shape(q).to_vec(), ctx.tape.shape(kv).to_vec());
        if sq.len() != 2 || sq[1] != ATTN_DIM || skv != [ATTN_DIM] {
            return Err(Error::shape("cross_attention", format!("q {sq:?}, kv {skv:?}")));
        }
        let n = sq[0];
        let (wq, wkv) = (ctx.param(self.wq), ctx.param(self.wkv));
        let qp = ctx.tape.linear(q, wq, None)?;
        let qt = ctx.tape.reshape(qp, &[n * TOKENS, TOKEN_DIM])?;
        let kv_row = ctx.tape.reshape(kv, &[1, ATTN_DIM])?;
        let kvp = ctx.tape.linear(kv_row, wkv, None)?;
        let kvt = ctx.tape.reshape(kvp, &[TOKENS, TOKEN_DIM])?;
        let (out, weights) = attend(ctx, qt, kvt)?;
        let out = ctx.tape.reshape(out, &[n, ATTN_DIM])?;
        Ok((out, weights))
    }
}

/// `softmax(Q·Kᵀ / √d)·V` with `K = V = kv`; returns the output and the weights.
pub fn attend<F: Real>(ctx: &mut Ctx<F>, q: Var, kv: Var) -> Result<(Var, Var)> {
    let d = ctx.tape.shape(kv)[1];
    let kt = ctx.tape.transpose(kv)?;
    let scores = ctx.tape.matmul(q, kt)?;
    let scores = ctx.tape.scale(scores, F::lit(1.0 / (d as f64).sqrt()))?;
    let weights = ctx.tape.softmax(scores, 1)?;
    let out = ctx.tape.matmul(weights, kv)?;
    Ok((out, weights))
}
