//! Browser bindings for three small interactive views: decision-time
//! re-ranking, synthetic scenes, and a PCA of MindNet states.

use mtomnet::analyze::{mind_states, pca_project};
use mtomnet::data::{generate_synthetic, GeneratedEpisode, Labels, SyntheticConfig};
use mtomnet::model::{db_rerank, Aggregation, MToMnet, MToMnetConfig, Mode, Variant, MIND_NAMES};
use mtomnet::tensor::Tensor;
use wasm_bindgen::prelude::*;

fn js_err(e: mtomnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `[label1, label2, score1..., score2...]` where scores are the normalised
/// products `P1^tau * P2` and `P2^tau * P1`.
#[wasm_bindgen]
pub fn rerank(p1: &[f64], p2: &[f64], tau: f64) -> Result<Vec<f64>, JsError> {
    let (l1, l2) = db_rerank(p1, p2, tau).map_err(js_err)?;
    let product = |own: &[f64], other: &[f64]| {
        let logs: Vec<f64> = own.iter().zip(other).map(|(&a, &b)| tau * a.ln() + b.ln()).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logs
            .iter()
            .map(|l| if m.is_finite() { (l - m).exp() } else { 0.0 })
            .collect();
        let s: f64 = e.iter().sum();
        e.into_iter()
            .map(|v| if s > 0.0 { v / s } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let mut out = vec![l1 as f64, l2 as f64];
    out.extend(product(p1, p2));
    out.extend(product(p2, p1));
    Ok(out)
}

fn synth(seed: u64, tbd: bool, episodes: usize, frames: usize) -> SyntheticConfig {
    SyntheticConfig {
        seed,
        mode: if tbd { Mode::FiveMinds } else { Mode::PerFrameBeliefs },
        episodes,
        frames,
        ..SyntheticConfig::default()
    }
}

/// Row-major RGBA bytes of a `[3, H, W]` image with values in `[0, 1]`.
fn rgba(img: &Tensor<f32>) -> Vec<u8> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let d = img.data();
    let mut out = Vec::with_capacity(h * w * 4);
    for i in 0..h * w {
        for ch in 0..3 {
            out.push((d[ch * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}

fn frame_of(t: &Tensor<f32>, i: usize) -> Tensor<f32> {
    let per: usize = t.shape()[1..].iter().product();
    Tensor::new(t.shape()[1..].to_vec(), t.data()[i * per..(i + 1) * per].to_vec()).expect("frame slice")
}

/// One generated episode, frame by frame.
#[wasm_bindgen]
pub struct SceneViewer {
    generated: GeneratedEpisode,
}

#[wasm_bindgen]
impl SceneViewer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, tbd: bool, frames: usize, false_belief_rate: f64) -> Result<SceneViewer, JsError> {
        let mut cfg = synth(seed, tbd, 1, frames);
        cfg.false_belief_rate = false_belief_rate;
        let generated = generate_synthetic(&cfg).map_err(js_err)?.remove(0);
        Ok(SceneViewer { generated })
    }

    pub fn frames(&self) -> usize {
        self.generated.episode.len()
    }

    pub fn size(&self) -> usize {
        self.generated.episode.frame_size().0
    }

    /// Third-person view.
    pub fn scene_rgba(&self, frame: usize) -> Vec<u8> {
        rgba(&frame_of(&self.generated.episode.frames, frame))
    }

    /// Egocentric view of `person` (tbd only; empty otherwise).
    pub fn ego_rgba(&self, person: usize, frame: usize) -> Vec<u8> {
        match &self.generated.episode.persons[person.min(1)].ego {
            Some(e) => rgba(&frame_of(e, frame)),
            None => Vec::new(),
        }
    }

    /// Labels in force at `frame`, one per line.
    pub fn labels(&self, frame: usize) -> String {
        match &self.generated.episode.labels {
            Labels::PerFrame { beliefs } => {
                format!(
                    "person 1 believes class {}\nperson 2 believes class {}",
                    beliefs[0][frame], beliefs[1][frame]
                )
            }
            Labels::Dynamics { minds, false_belief } => {
                let clip = frame / mtomnet::model::CLIP_LEN;
                let Some(m) = minds.get(clip) else {
                    return "(outside the last full clip)".into();
                };
                MIND_NAMES
                    .iter()
                    .zip(m)
                    .zip(&false_belief[clip])
                    .map(|((n, d), fb)| format!("{n}: {}{}", d.name(), if *fb { "  (false belief)" } else { "" }))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        }
    }

    /// Event-log lines for `frame`.
    pub fn events(&self, frame: usize) -> String {
        let prefix = format!("{frame} ");
        self.generated
            .log
            .to_text()
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&prefix))
            .map(|l| &l[prefix.len()..])
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// PCA of both MindNets' LSTM states on synthetic tbd clips, from a freshly
/// initialised model: `[ratio1, ratio2, separability, (x, y, mind)...]`.
#[wasm_bindgen]
pub fn pca_states(seed: u64, episodes: usize, common_ground: bool) -> Result<Vec<f64>, JsError> {
    let cfg = synth(seed, true, episodes.max(2), 10);
    let samples: Vec<_> = generate_synthetic(&cfg)
        .map_err(js_err)?
        .iter()
        .map(|g| g.episode.samples())
        .collect::<mtomnet::Result<Vec<_>>>()
        .map_err(js_err)?
        .into_iter()
        .flatten()
        .collect();
    let variant = if common_ground { Variant::Cg } else { Variant::Base };
    let (net, params) = MToMnet::build::<f32>(&MToMnetConfig::new(variant, Aggregation::Concat, Mode::FiveMinds), seed)
        .map_err(js_err)?;
    let (states, labels) = mind_states(&net, &params, &samples).map_err(js_err)?;
    let res = pca_project(&states, &labels).map_err(js_err)?;
    let mut out = vec![res.ratios[0], res.ratios[1], res.separability];
    for (p, &l) in res.projected.iter().zip(&res.labels) {
        out.extend([p[0], p[1], l as f64]);
    }
    Ok(out)
}
