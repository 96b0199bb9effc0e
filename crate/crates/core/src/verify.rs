//! Finite-difference checks of every tape op, every layer and the full
//! model forward paths, in 64-bit.

use crate::error::Result;
use crate::layers::{
    gcn_normalize, BiLstm, CnnEncoder, ConvTrunk, CrossAttention, Diagonal, GcnLayer, LayerNorm, Linear,
};
use crate::model::{random_window, skeleton_adjacency, Aggregation, MToMnet, MToMnetConfig, Mode, Variant};
use crate::params::{Ctx, ParamStore};
use crate::tensor::{check_gradients, GradCheckReport, Rng, Tape, Tensor, Var};

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_POINTS: usize = 100;
pub const GRADCHECK_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.passed(GRADCHECK_TOL)
    }

    pub fn line(&self) -> String {
        format!(
            "{:<28} max_rel_err {:.3e}  points {:>3}  kinks {:>2}  {}",
            self.name,
            self.report.max_rel_err,
            self.report.checked,
            self.report.kinks,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

fn random(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-scale, scale))
}

/// Checks `body` against finite differences at `points` coordinates drawn
/// over `inputs` and every tensor of `store`. The scalar under test is a
/// fixed random projection of the body's output, so no gradient is
/// symmetric by construction.
fn check_module<B>(
    name: &str,
    store: &ParamStore<f64>,
    inputs: Vec<Tensor<f64>>,
    points: usize,
    seed: u64,
    body: B,
) -> Result<GradCheckCase>
where
    B: Fn(&mut Ctx<f64>, &[Var]) -> Result<Vec<Var>>,
{
    let n_in = inputs.len();
    let ids: Vec<_> = store.ids().collect();
    let mut all = inputs;
    all.extend(store.tensors().iter().cloned());
    let mut rng = Rng::with_stream(seed, 1);
    let coords: Vec<(usize, usize)> = (0..points)
        .map(|_| {
            let i = rng.below(all.len());
            (i, rng.below(all[i].numel()))
        })
        .collect();
    let f = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
        let outs = {
            let mut ctx = Ctx::new(tape, store, false, Rng::new(0));
            for (k, &id) in ids.iter().enumerate() {
                ctx.bind(id, vars[n_in + k]);
            }
            body(&mut ctx, &vars[..n_in])?
        };
        let mut proj = Rng::with_stream(seed, 2);
        let mut total: Option<Var> = None;
        for o in outs {
            let r = random(tape.shape(o), 1.0, &mut proj);
            let r = tape.constant(r);
            let m = tape.mul(o, r)?;
            let s = tape.sum(m)?;
            total = Some(match total {
                None => s,
                Some(t) => tape.add(t, s)?,
            });
        }
        Ok(total.expect("module produced an output"))
    };
    let report = check_gradients(f, &all, &coords, GRADCHECK_STEP)?;
    Ok(GradCheckCase {
        name: name.to_string(),
        report,
    })
}

fn op_cases(points: usize, seed: u64, out: &mut Vec<GradCheckCase>) -> Result<()> {
    let empty = ParamStore::new();
    let mut rng = Rng::with_stream(seed, 10);
    let mut r = |shape: &[usize]| random(shape, 1.0, &mut rng);
    type Body = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;
    let cases: Vec<(&str, Vec<Tensor<f64>>, Body)> = vec![
        (
            "op matmul",
            vec![r(&[3, 4]), r(&[4, 2])],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        ),
        (
            "op linear",
            vec![r(&[3, 4]), r(&[5, 4]), r(&[5])],
            Box::new(|t, v| t.linear(v[0], v[1], Some(v[2]))),
        ),
        ("op transpose", vec![r(&[3, 4])], Box::new(|t, v| t.transpose(v[0]))),
        (
            "op add",
            vec![r(&[3, 4]), r(&[3, 4])],
            Box::new(|t, v| t.add(v[0], v[1])),
        ),
        (
            "op sub",
            vec![r(&[3, 4]), r(&[3, 4])],
            Box::new(|t, v| t.sub(v[0], v[1])),
        ),
        (
            "op mul",
            vec![r(&[3, 4]), r(&[3, 4])],
            Box::new(|t, v| t.mul(v[0], v[1])),
        ),
        ("op scale", vec![r(&[6])], Box::new(|t, v| t.scale(v[0], -1.7))),
        (
            "op concat",
            vec![r(&[2, 3]), r(&[2, 2])],
            Box::new(|t, v| t.concat(&[v[0], v[1], v[0]], 1)),
        ),
        ("op slice", vec![r(&[4, 5])], Box::new(|t, v| t.slice(v[0], 1, 1, 3))),
        (
            "op reshape",
            vec![r(&[4, 3])],
            Box::new(|t, v| t.reshape(v[0], &[2, 6])),
        ),
        ("op repeat_rows", vec![r(&[4])], Box::new(|t, v| t.repeat_rows(v[0], 3))),
        ("op mean_rows", vec![r(&[5, 3])], Box::new(|t, v| t.mean_rows(v[0]))),
        ("op sum", vec![r(&[3, 3])], Box::new(|t, v| t.sum(v[0]))),
        ("op mean", vec![r(&[3, 3])], Box::new(|t, v| t.mean(v[0]))),
        (
            "op conv2d",
            vec![r(&[2, 6, 5]), r(&[3, 2, 3, 3]), r(&[3])],
            Box::new(|t, v| t.conv2d(v[0], v[1], v[2])),
        ),
        (
            "op maxpool2d",
            vec![r(&[2, 6, 6])],
            Box::new(|t, v| t.maxpool2d(v[0], 2)),
        ),
        (
            "op global_maxpool",
            vec![r(&[3, 4, 4])],
            Box::new(|t, v| t.global_maxpool(v[0])),
        ),
        ("op relu", vec![r(&[12])], Box::new(|t, v| t.relu(v[0]))),
        ("op gelu", vec![r(&[12])], Box::new(|t, v| t.gelu(v[0]))),
        ("op sigmoid", vec![r(&[12])], Box::new(|t, v| t.sigmoid(v[0]))),
        ("op tanh", vec![r(&[12])], Box::new(|t, v| t.tanh(v[0]))),
        ("op softmax", vec![r(&[3, 5])], Box::new(|t, v| t.softmax(v[0], 1))),
        (
            "op log_softmax",
            vec![r(&[3, 5])],
            Box::new(|t, v| t.log_softmax(v[0], 1)),
        ),
        (
            "op layernorm",
            vec![r(&[3, 6]), r(&[6]), r(&[6])],
            Box::new(|t, v| t.layernorm(v[0], v[1], v[2], 1e-5)),
        ),
        (
            "op affine_rows",
            vec![r(&[3, 4]), r(&[4]), r(&[4])],
            Box::new(|t, v| t.affine_rows(v[0], v[1], v[2])),
        ),
        (
            "op dropout",
            vec![r(&[20])],
            Box::new(|t, v| t.dropout(v[0], 0.3, true, &mut Rng::new(11))),
        ),
        (
            "op pick",
            vec![r(&[4, 5])],
            Box::new(|t, v| t.pick(v[0], &[0, 4, 2, 2])),
        ),
    ];
    for (k, (name, inputs, body)) in cases.into_iter().enumerate() {
        out.push(check_module(
            name,
            &empty,
            inputs,
            points,
            seed ^ k as u64,
            |ctx, v| Ok(vec![body(ctx.tape, v)?]),
        )?);
    }
    Ok(())
}

fn layer_cases(points: usize, seed: u64, out: &mut Vec<GradCheckCase>) -> Result<()> {
    let mut rng = Rng::with_stream(seed, 20);

    let mut s = ParamStore::new();
    let lin = Linear::new(&mut s, "lin", 6, 4, true, seed);
    out.push(check_module(
        "layer linear",
        &s,
        vec![random(&[3, 6], 1.0, &mut rng)],
        points,
        seed,
        |c, v| Ok(vec![lin.forward(c, v[0])?]),
    )?);

    let mut s = ParamStore::new();
    let diag = Diagonal::new(&mut s, "diag", 5);
    randomize(&mut s, &mut rng);
    out.push(check_module(
        "layer diagonal",
        &s,
        vec![random(&[3, 5], 1.0, &mut rng)],
        points,
        seed,
        |c, v| Ok(vec![diag.forward(c, v[0])?]),
    )?);

    let mut s = ParamStore::new();
    let ln = LayerNorm::new(&mut s, "ln", 6);
    randomize(&mut s, &mut rng);
    out.push(check_module(
        "layer layernorm",
        &s,
        vec![random(&[3, 6], 1.0, &mut rng)],
        points,
        seed,
        |c, v| Ok(vec![ln.forward(c, v[0])?]),
    )?);

    let mut s = ParamStore::new();
    let trunk = ConvTrunk::new(&mut s, "cnn", 3, seed);
    let cnn = CnnEncoder::new(&mut s, "cnn", trunk, seed);
    let frame = random(&[3, 20, 20], 1.0, &mut rng);
    out.push(check_module("layer cnn", &s, vec![frame], points, seed, |c, v| {
        Ok(vec![cnn.forward(c, v[0])?])
    })?);

    let mut s = ParamStore::new();
    let gcn = GcnLayer::new(&mut s, "gcn", 3, seed);
    let a_hat = gcn_normalize(&skeleton_adjacency::<f64>())?;
    out.push(check_module(
        "layer gcn",
        &s,
        vec![random(&[17, 3], 1.0, &mut rng)],
        points,
        seed,
        |c, v| {
            let a = c.input(a_hat.clone());
            Ok(vec![gcn.forward(c, a, v[0])?])
        },
    )?);

    let mut s = ParamStore::new();
    let lstm = BiLstm::new(&mut s, "lstm", 5, seed);
    out.push(check_module(
        "layer bilstm",
        &s,
        vec![random(&[4, 5], 1.0, &mut rng)],
        points,
        seed,
        |c, v| {
            let o = lstm.forward(c, v[0])?;
            Ok(vec![o.h, o.c, o.h_final])
        },
    )?);

    let mut s = ParamStore::new();
    let attn = CrossAttention::new(&mut s, "attn", seed);
    let q = random(&[2, 128], 1.0, &mut rng);
    let kv = random(&[128], 1.0, &mut rng);
    out.push(check_module(
        "layer cross_attention",
        &s,
        vec![q, kv],
        points,
        seed,
        |c, v| {
            let (o, w) = attn.forward(c, v[0], v[1])?;
            Ok(vec![o, w])
        },
    )?);
    Ok(())
}

/// Replaces freshly initialised constant parameters (unit gains, zero biases)
/// with random values so their gradients are exercised away from special points.
fn randomize(store: &mut ParamStore<f64>, rng: &mut Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store
            .get_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.uniform(0.5, 1.5));
    }
}

/// Full forward paths of the model variants exercised in practice.
pub const MODEL_PATHS: [(Variant, Aggregation, Mode); 6] = [
    (Variant::Base, Aggregation::Concat, Mode::PerFrameBeliefs),
    (Variant::Ic, Aggregation::Concat, Mode::PerFrameBeliefs),
    (Variant::Cg, Aggregation::Concat, Mode::PerFrameBeliefs),
    (Variant::Cg, Aggregation::Attention, Mode::PerFrameBeliefs),
    (Variant::Base, Aggregation::Concat, Mode::FiveMinds),
    (Variant::Cg, Aggregation::Mul, Mode::FiveMinds),
];

fn model_cases(points: usize, seed: u64, out: &mut Vec<GradCheckCase>) -> Result<()> {
    for (k, &(variant, aggregation, mode)) in MODEL_PATHS.iter().enumerate() {
        let cfg = MToMnetConfig::new(variant, aggregation, mode);
        let (net, store) = MToMnet::build::<f64>(&cfg, seed)?;
        let mut rng = Rng::with_stream(seed, 30 + k as u64);
        let t = if mode == Mode::FiveMinds { 5 } else { 3 };
        let window = random_window::<f64>(mode, t, 20, &mut rng);
        let name = format!("model {}", cfg.label());
        out.push(check_module(&name, &store, vec![], points, seed + k as u64, |c, _| {
            Ok(net.forward(c, &window)?.logits)
        })?);
    }
    Ok(())
}

/// Every tape op, every layer and the model forward paths, `points` coordinates each.
pub fn gradcheck_all(points: usize, seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut out = Vec::new();
    op_cases(points, seed, &mut out)?;
    layer_cases(points, seed, &mut out)?;
    model_cases(points, seed, &mut out)?;
    Ok(out)
}
