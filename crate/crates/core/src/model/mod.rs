//! The network: shared contextual extractors, two MindNets, fusion and heads.

mod checkpoint;
mod config;
mod decision;

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub(crate) use config::parse_num;
pub use config::{
    reference_param_count, Aggregation, MToMnetConfig, Mode, Variant, BOX_FIELDS, BOX_SLOTS, CLIP_LEN, NUM_DYNAMICS,
    NUM_OBJECTS, POSE_JOINTS,
};
pub use decision::db_rerank;

use crate::error::{Error, Result};
use crate::layers::{
    gcn_normalize, BiLstm, CnnEncoder, ConvTrunk, CrossAttention, Diagonal, GcnLayer, LayerNorm, Linear, HIDDEN,
};
use crate::params::{Ctx, ParamStore};
use crate::tensor::{argmax, Real, Rng, Tape, Tensor, Var};

/// COCO keypoint skeleton over 17 joints (nose, eyes, ears, shoulders,
/// elbows, wrists, hips, knees, ankles).
pub const COCO_EDGES: [(usize, usize); 16] = [
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (5, 6),
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (5, 11),
    (6, 12),
    (11, 12),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
];

/// Names of the five-minds heads, in output order.
pub const MIND_NAMES: [&str; 5] = ["m1", "m2", "m12", "m21", "mc"];

/// Normalised skeleton adjacency.
pub fn skeleton_adjacency<F: Real>() -> Tensor<F> {
    let mut a = Tensor::zeros([POSE_JOINTS, POSE_JOINTS]);
    for &(i, j) in &COCO_EDGES {
        a.data_mut()[i * POSE_JOINTS + j] = F::one();
        a.data_mut()[j * POSE_JOINTS + i] = F::one();
    }
    gcn_normalize(&a).expect("valid skeleton")
}

/// One person's cues over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonCues<F> {
    /// `[T, gaze_dim]`.
    pub gaze: Tensor<F>,
    /// `T` tensors of `[17, joint_dim]`.
    pub pose: Vec<Tensor<F>>,
    /// Egocentric frames `[3, H, W]`; five-minds mode only.
    pub ego: Vec<Tensor<F>>,
}

/// Model input: a time window of contextual and individual cues.
#[derive(Clone, Debug, PartialEq)]
pub struct Window<F> {
    /// Third-person frames `[3, H, W]`.
    pub frames: Vec<Tensor<F>>,
    /// `[T, 27·5]` box slots.
    pub boxes: Tensor<F>,
    /// `[27, 27]` object-context relations; per-frame mode only.
    pub ocr: Option<Tensor<F>>,
    pub persons: [PersonCues<F>; 2],
}

impl<F: Real> Window<F> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cast<G: Real>(&self) -> Window<G> {
        let person = |p: &PersonCues<F>| PersonCues {
            gaze: p.gaze.cast(),
            pose: p.pose.iter().map(Tensor::cast).collect(),
            ego: p.ego.iter().map(Tensor::cast).collect(),
        };
        Window {
            frames: self.frames.iter().map(Tensor::cast).collect(),
            boxes: self.boxes.cast(),
            ocr: self.ocr.as_ref().map(Tensor::cast),
            persons: [person(&self.persons[0]), person(&self.persons[1])],
        }
    }

    /// The same window with the two persons exchanged.
    pub fn swapped(&self) -> Self {
        let mut w = self.clone();
        w.persons.swap(0, 1);
        w
    }
}

/// Extractors shared by both MindNets.
#[derive(Clone, Debug)]
pub struct SharedExtractors {
    pub trunk: ConvTrunk,
    pub scene: CnnEncoder,
    pub ocr: Option<GcnLayer>,
    pub boxes: Linear,
}

#[derive(Clone, Debug)]
pub struct MindNet {
    pub ego: Option<CnnEncoder>,
    pub gaze: Linear,
    pub pose: GcnLayer,
    pub ln: LayerNorm,
    pub lstm: BiLstm,
    /// Hidden-to-cell-space map; fused variants only.
    pub fc_h: Option<Diagonal>,
    pub head_self: Linear,
    /// Belief about the partner's belief; five-minds mode only.
    pub head_other: Option<Linear>,
}

/// Per-person LSTM outputs.
#[derive(Clone, Copy, Debug)]
pub struct MindState {
    /// `[T, 128]`.
    pub h: Var,
    /// `[128]`.
    pub c: Var,
    /// `[128]`.
    pub h_final: Var,
}

/// Tape handles produced by [`MToMnet::forward`].
pub struct ForwardOut {
    /// Per-frame mode: `[T, 27]` for each person. Five-minds mode: `[1, 4]`
    /// for each of m1, m2, m12, m21, mc.
    pub logits: Vec<Var>,
    pub states: [MindState; 2],
    /// Fused vectors `z` fed to the heads (hidden states for Base/DB).
    pub z: [Var; 2],
    pub cg: Option<Var>,
}

/// Class distributions and decisions for one head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput {
    pub name: String,
    /// One distribution per row (per frame, or a single row per clip).
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefOutput {
    pub heads: Vec<HeadOutput>,
}

/// Parameter totals with a per-component and per-category breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBreakdown {
    pub total: usize,
    /// Two-level name prefix (`mind1.lstm`) and its count, in construction order.
    pub components: Vec<(String, usize)>,
    /// extractors, lstm, fusion, heads.
    pub categories: Vec<(&'static str, usize)>,
}

fn category(component: &str) -> &'static str {
    let leaf = component.rsplit('.').next().unwrap_or("");
    match leaf {
        "ln" | "lstm" => "lstm",
        "fc_h" | "cg" | "attn" => "fusion",
        l if l.starts_with("head") => "heads",
        _ => "extractors",
    }
}

pub fn count_parameters<F: Real>(store: &ParamStore<F>) -> ParamBreakdown {
    let mut components: Vec<(String, usize)> = Vec::new();
    for (_, name, t) in store.iter() {
        let key: String = name.splitn(3, '.').take(2).collect::<Vec<_>>().join(".");
        match components.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += t.numel(),
            None => components.push((key, t.numel())),
        }
    }
    let mut categories: Vec<(&'static str, usize)> = ["extractors", "lstm", "fusion", "heads"]
        .iter()
        .map(|&c| (c, 0))
        .collect();
    for (k, n) in &components {
        let c = category(k);
        categories
            .iter_mut()
            .find(|(name, _)| *name == c)
            .expect("known category")
            .1 += n;
    }
    ParamBreakdown {
        total: store.numel(),
        components,
        categories,
    }
}

/// Architecture description. Parameter values live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct MToMnet {
    pub config: MToMnetConfig,
    pub shared: SharedExtractors,
    pub minds: [MindNet; 2],
    pub cg: Option<Linear>,
    pub attn: Option<CrossAttention>,
    pub head_common: Option<Linear>,
}

impl MToMnet {
    /// Builds the architecture and freshly initialised parameters.
    pub fn build<F: Real>(config: &MToMnetConfig, seed: u64) -> Result<(Self, ParamStore<F>)> {
        config.validate()?;
        let mut s = ParamStore::new();
        let mode = config.mode;
        let boss = mode == Mode::PerFrameBeliefs;
        let trunk = ConvTrunk::new(&mut s, "shared.cnn", 3, seed);
        let scene = CnnEncoder::new(&mut s, "shared.scene", trunk.clone(), seed);
        let ocr = boss.then(|| GcnLayer::new(&mut s, "shared.ocr", NUM_OBJECTS, seed));
        let boxes = Linear::new(&mut s, "shared.boxes", BOX_SLOTS * BOX_FIELDS, HIDDEN, true, seed);
        let shared = SharedExtractors {
            trunk,
            scene,
            ocr,
            boxes,
        };

        let ctx_width = HIDDEN * if boss { 3 } else { 2 };
        let ind_width = HIDDEN * if boss { 2 } else { 3 };
        let k = config.num_classes();
        let head_in = config.head_input();
        let mind = |m: &str, s: &mut ParamStore<F>| MindNet {
            ego: (!boss).then(|| CnnEncoder::new(s, &format!("{m}.ego"), shared.trunk.clone(), seed)),
            gaze: Linear::new(s, &format!("{m}.gaze"), mode.gaze_dim(), HIDDEN, true, seed),
            pose: GcnLayer::new(s, &format!("{m}.pose"), mode.joint_dim(), seed),
            ln: LayerNorm::new(s, &format!("{m}.ln"), ctx_width + ind_width),
            lstm: BiLstm::new(s, &format!("{m}.lstm"), ctx_width + ind_width, seed),
            fc_h: config
                .fused()
                .then(|| Diagonal::new(s, &format!("{m}.fc_h"), 2 * HIDDEN)),
            head_self: Linear::new(s, &format!("{m}.head_self"), head_in, k, true, seed),
            head_other: (!boss).then(|| Linear::new(s, &format!("{m}.head_other"), head_in, k, true, seed)),
        };
        let m1 = mind("mind1", &mut s);
        let m2 = mind("mind2", &mut s);
        let cg = (config.variant == Variant::Cg)
            .then(|| Linear::new(&mut s, "fusion.cg", 4 * HIDDEN, 2 * HIDDEN, true, seed));
        let attn = (config.fused() && config.aggregation == Aggregation::Attention)
            .then(|| CrossAttention::new(&mut s, "fusion.attn", seed));
        let head_common = (!boss).then(|| Linear::new(&mut s, "common.head_mc", head_in, k, true, seed));
        if config.tied {
            s.copy_prefix("mind1.", "mind2.")?;
            // the c2 half mirrors the c1 half so cg is symmetric in the two cell states
            if let Some(cg) = &cg {
                let w = s.get_mut(cg.w).data_mut();
                for r in 0..2 * HIDDEN {
                    let row = &mut w[r * 4 * HIDDEN..(r + 1) * 4 * HIDDEN];
                    let (left, right) = row.split_at_mut(2 * HIDDEN);
                    right.copy_from_slice(left);
                }
            }
        }
        let net = MToMnet {
            config: config.clone(),
            shared,
            minds: [m1, m2],
            cg,
            attn,
            head_common,
        };
        Ok((net, s))
    }

    fn check_window<F: Real>(&self, w: &Window<F>) -> Result<usize> {
        let t = w.len();
        let mode = self.config.mode;
        if t == 0 {
            return Err(Error::Empty("window has no frames".into()));
        }
        if mode == Mode::FiveMinds && t != CLIP_LEN {
            return Err(Error::validation(
                "T",
                format!("five-minds windows hold {CLIP_LEN} frames, got {t}"),
            ));
        }
        if w.boxes.shape() != [t, BOX_SLOTS * BOX_FIELDS] {
            return Err(Error::validation(
                "boxes",
                format!("shape {:?}, want [{t}, {}]", w.boxes.shape(), BOX_SLOTS * BOX_FIELDS),
            ));
        }
        match (mode, &w.ocr) {
            (Mode::PerFrameBeliefs, None) => return Err(Error::validation("ocr", "missing in per-frame mode")),
            (Mode::PerFrameBeliefs, Some(o)) if o.shape() != [NUM_OBJECTS, NUM_OBJECTS] => {
                return Err(Error::validation("ocr", format!("shape {:?}", o.shape())))
            }
            _ => {}
        }
        for (i, p) in w.persons.iter().enumerate() {
            let who = |f: &str| format!("person{}.{f}", i + 1);
            if p.gaze.shape() != [t, mode.gaze_dim()] {
                return Err(Error::validation(who("gaze"), format!("shape {:?}", p.gaze.shape())));
            }
            if p.pose.len() != t || p.pose.iter().any(|j| j.shape() != [POSE_JOINTS, mode.joint_dim()]) {
                return Err(Error::validation(who("pose"), "length or joint shape mismatch"));
            }
            let want_ego = if mode == Mode::FiveMinds { t } else { 0 };
            if p.ego.len() != want_ego {
                return Err(Error::validation(
                    who("ego"),
                    format!("{} frames, want {want_ego}", p.ego.len()),
                ));
            }
        }
        Ok(t)
    }

    fn act<F: Real>(&self, ctx: &mut Ctx<F>, x: Var, gelu: bool) -> Result<Var> {
        let x = if gelu { ctx.tape.gelu(x)? } else { x };
        ctx.dropout(x, self.config.dropout)
    }

    /// Per-timestep shared features `[T, 64·#cues]`: scene CNN, OCR graph (per-frame mode), boxes.
    pub fn encode_contextual<F: Real>(&self, ctx: &mut Ctx<F>, w: &Window<F>) -> Result<Var> {
        let t = self.check_window(w)?;
        let frames: Vec<Var> = w.frames.iter().map(|f| ctx.input(f.clone())).collect();
        let scene = self.shared.scene.forward_seq(ctx, &frames)?;
        let mut parts = vec![self.act(ctx, scene, true)?];
        if let (Some(gcn), Some(ocr)) = (&self.shared.ocr, &w.ocr) {
            let a_hat = ctx.input(gcn_normalize(ocr)?);
            let x = ctx.input(ocr.clone());
            let g = gcn.forward(ctx, a_hat, x)?;
            let g = self.act(ctx, g, false)?;
            parts.push(ctx.tape.repeat_rows(g, t)?);
        }
        let boxes = ctx.input(w.boxes.clone());
        let b = self.shared.boxes.forward(ctx, boxes)?;
        parts.push(self.act(ctx, b, true)?);
        ctx.tape.concat(&parts, 1)
    }

    /// Person `index`'s features `[T, 64·#cues]`: ego CNN (five-minds mode), gaze, pose.
    pub fn encode_individual<F: Real>(&self, ctx: &mut Ctx<F>, w: &Window<F>, index: usize) -> Result<Var> {
        if index > 1 {
            return Err(Error::InvalidArgument(format!(
                "MindNet index {} not in 1..=2",
                index + 1
            )));
        }
        let t = self.check_window(w)?;
        let mind = &self.minds[index];
        let p = &w.persons[index];
        let mut parts = Vec::new();
        if let Some(ego) = &mind.ego {
            let frames: Vec<Var> = p.ego.iter().map(|f| ctx.input(f.clone())).collect();
            let e = ego.forward_seq(ctx, &frames)?;
            parts.push(self.act(ctx, e, true)?);
        }
        let gaze = ctx.input(p.gaze.clone());
        let g = mind.gaze.forward(ctx, gaze)?;
        parts.push(self.act(ctx, g, true)?);
        let a_hat = ctx.input(skeleton_adjacency());
        let mut rows = Vec::with_capacity(t);
        for joints in &p.pose {
            let x = ctx.input(joints.clone());
            let v = mind.pose.forward(ctx, a_hat, x)?;
            rows.push(ctx.tape.reshape(v, &[1, HIDDEN])?);
        }
        let pose = ctx.tape.concat(&rows, 0)?;
        parts.push(self.act(ctx, pose, false)?);
        ctx.tape.concat(&parts, 1)
    }

    /// Layer norm over `x_ctx ∥ x_ind`, then the bidirectional LSTM.
    pub fn mindnet_forward<F: Real>(
        &self,
        ctx: &mut Ctx<F>,
        x_ctx: Var,
        x_ind: Var,
        index: usize,
    ) -> Result<MindState> {
        let (a, b) = (ctx.tape.shape(x_ctx)[0], ctx.tape.shape(x_ind)[0]);
        if a != b {
            return Err(Error::shape("mindnet", format!("contextual T={a}, individual T={b}")));
        }
        let mind = &self.minds[index];
        let x = ctx.tape.concat(&[x_ctx, x_ind], 1)?;
        let x = mind.ln.forward(ctx, x)?;
        let out = mind.lstm.forward(ctx, x)?;
        Ok(MindState {
            h: out.h,
            c: out.c,
            h_final: out.h_final,
        })
    }

    /// `cg = FC(c1 ∥ c2)`, computed as the sum of the two weight halves applied separately.
    pub fn common_ground<F: Real>(&self, ctx: &mut Ctx<F>, c1: Var, c2: Var) -> Result<Var> {
        let lin = self
            .cg
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("common ground needs the CG variant".into()))?;
        let d = 2 * HIDDEN;
        let w = ctx.param(lin.w);
        let b = ctx.param(lin.b.expect("cg bias"));
        let wl = ctx.tape.slice(w, 1, 0, d)?;
        let wr = ctx.tape.slice(w, 1, d, d)?;
        let r1 = ctx.tape.reshape(c1, &[1, d])?;
        let r2 = ctx.tape.reshape(c2, &[1, d])?;
        let a1 = ctx.tape.linear(r1, wl, None)?;
        let a2 = ctx.tape.linear(r2, wr, None)?;
        let s = ctx.tape.add(a1, a2)?;
        let s = ctx.tape.reshape(s, &[d])?;
        ctx.tape.add(s, b)
    }

    /// `z = FC(q) ⋆ v` row-wise, `v` broadcast over the rows of `q[n,128]`.
    pub fn aggregate<F: Real>(&self, ctx: &mut Ctx<F>, index: usize, q: Var, v: Var) -> Result<Var> {
        let fc = self.minds[index]
            .fc_h
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("aggregation needs a fused variant".into()))?;
        let fq = fc.forward(ctx, q)?;
        let n = ctx.tape.shape(q)[0];
        match self.config.aggregation {
            Aggregation::Sum => {
                let vr = ctx.tape.repeat_rows(v, n)?;
                ctx.tape.add(fq, vr)
            }
            Aggregation::Mul => {
                let vr = ctx.tape.repeat_rows(v, n)?;
                ctx.tape.mul(fq, vr)
            }
            Aggregation::Concat => {
                let vr = ctx.tape.repeat_rows(v, n)?;
                ctx.tape.concat(&[fq, vr], 1)
            }
            Aggregation::Attention => {
                let attn = self.attn.as_ref().expect("attention built for attention aggregation");
                let (a, _) = attn.forward(ctx, fq, v)?;
                ctx.tape.concat(&[fq, a], 1)
            }
        }
    }

    /// Full pipeline from a window to head logits.
    pub fn forward<F: Real>(&self, ctx: &mut Ctx<F>, w: &Window<F>) -> Result<ForwardOut> {
        let x_ctx = self.encode_contextual(ctx, w)?;
        let mut states = Vec::with_capacity(2);
        for i in 0..2 {
            let x_ind = self.encode_individual(ctx, w, i)?;
            states.push(self.mindnet_forward(ctx, x_ctx, x_ind, i)?);
        }
        let states: [MindState; 2] = [states[0], states[1]];
        let five = self.config.mode == Mode::FiveMinds;
        let d = 2 * HIDDEN;
        let mut queries = [states[0].h, states[1].h];
        if five {
            for (q, s) in queries.iter_mut().zip(&states) {
                *q = ctx.tape.reshape(s.h_final, &[1, d])?;
            }
        }
        let mut cg = None;
        let z = match self.config.variant {
            Variant::Base | Variant::Db => queries,
            Variant::Ic => [
                self.aggregate(ctx, 0, queries[0], states[1].c)?,
                self.aggregate(ctx, 1, queries[1], states[0].c)?,
            ],
            Variant::Cg => {
                let g = self.common_ground(ctx, states[0].c, states[1].c)?;
                cg = Some(g);
                [
                    self.aggregate(ctx, 0, queries[0], g)?,
                    self.aggregate(ctx, 1, queries[1], g)?,
                ]
            }
        };
        let mut logits = Vec::new();
        if five {
            let other = |i: usize| self.minds[i].head_other.as_ref().expect("five-minds heads");
            let m1 = self.minds[0].head_self.forward(ctx, z[0])?;
            let m2 = self.minds[1].head_self.forward(ctx, z[1])?;
            let m12 = other(0).forward(ctx, z[0])?;
            let m21 = other(1).forward(ctx, z[1])?;
            let joint = ctx.tape.mul(z[0], z[1])?;
            let mc = self.head_common.as_ref().expect("common head").forward(ctx, joint)?;
            logits.extend([m1, m2, m12, m21, mc]);
        } else {
            for i in 0..2 {
                logits.push(self.minds[i].head_self.forward(ctx, z[i])?);
            }
        }
        Ok(ForwardOut { logits, states, z, cg })
    }

    pub fn head_names(&self) -> Vec<&'static str> {
        match self.config.mode {
            Mode::PerFrameBeliefs => vec!["p1", "p2"],
            Mode::FiveMinds => MIND_NAMES.to_vec(),
        }
    }

    /// Turns logits into distributions and decisions. DB re-ranks the
    /// (p1, p2), (m1, m2) and (m12, m21) pairs; every other head uses argmax.
    pub fn decide<F: Real>(&self, tape: &Tape<F>, out: &ForwardOut) -> Result<BeliefOutput> {
        let mut heads: Vec<HeadOutput> = Vec::new();
        for (name, &l) in self.head_names().into_iter().zip(&out.logits) {
            let t = tape.value(l);
            let (rows, k) = (t.shape()[0], t.shape()[1]);
            let probs: Vec<Vec<f64>> = (0..rows).map(|r| softmax_f64(t.row(r))).collect();
            let labels = probs.iter().map(|p| argmax(p)).collect();
            heads.push(HeadOutput {
                name: name.to_string(),
                probs,
                labels,
            });
            debug_assert_eq!(heads.last().map(|h| h.probs[0].len()), Some(k));
        }
        if self.config.variant == Variant::Db {
            let pairs: &[(usize, usize)] = match self.config.mode {
                Mode::PerFrameBeliefs => &[(0, 1)],
                Mode::FiveMinds => &[(0, 1), (2, 3)],
            };
            for &(a, b) in pairs {
                for r in 0..heads[a].probs.len() {
                    let (la, lb) = db_rerank(&heads[a].probs[r], &heads[b].probs[r], self.config.tau)?;
                    heads[a].labels[r] = la;
                    heads[b].labels[r] = lb;
                }
            }
        }
        Ok(BeliefOutput { heads })
    }

    /// Eval-mode forward and decision without gradient tracking.
    pub fn predict<F: Real>(&self, store: &ParamStore<F>, w: &Window<F>) -> Result<BeliefOutput> {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store, false, Rng::new(0)).frozen();
        let out = self.forward(&mut ctx, w)?;
        drop(ctx);
        self.decide(&tape, &out)
    }
}

/// A window of uniform random cues with valid shapes, for tests and numeric checks.
pub fn random_window<F: Real>(mode: Mode, t: usize, side: usize, rng: &mut Rng) -> Window<F> {
    let frame = |rng: &mut Rng| Tensor::from_fn([3, side, side], |_| F::lit(rng.unit()));
    let person = |rng: &mut Rng| PersonCues {
        gaze: Tensor::from_fn([t, mode.gaze_dim()], |_| F::lit(rng.uniform(-1.0, 1.0))),
        pose: (0..t)
            .map(|_| Tensor::from_fn([POSE_JOINTS, mode.joint_dim()], |_| F::lit(rng.uniform(-1.0, 1.0))))
            .collect(),
        ego: if mode == Mode::FiveMinds {
            (0..t).map(|_| frame(rng)).collect()
        } else {
            Vec::new()
        },
    };
    let frames = (0..t).map(|_| frame(rng)).collect();
    let boxes = Tensor::from_fn([t, BOX_SLOTS * BOX_FIELDS], |_| F::lit(rng.unit()));
    let ocr = (mode == Mode::PerFrameBeliefs).then(|| {
        let raw: Vec<f64> = (0..NUM_OBJECTS * NUM_OBJECTS).map(|_| rng.unit()).collect();
        Tensor::from_fn([NUM_OBJECTS, NUM_OBJECTS], |i| {
            let r = i / NUM_OBJECTS;
            let (a, b) = (raw[i], raw[(i % NUM_OBJECTS) * NUM_OBJECTS + r]);
            F::lit((a + b) / 2.0 / NUM_OBJECTS as f64)
        })
    });
    let p1 = person(rng);
    let p2 = person(rng);
    Window {
        frames,
        boxes,
        ocr,
        persons: [p1, p2],
    }
}

fn softmax_f64<F: Real>(row: &[F]) -> Vec<f64> {
    let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[cfg(test)]
mod tests;
