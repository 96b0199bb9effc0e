//! Episodes, their on-disk format, corpus layout, and the synthetic generator.

mod io;
mod synth;

pub use io::{
    load_corpus, load_episode, read_path_list, save_episode, write_corpus, write_path_list, Corpus, CORPUS_MANIFEST,
    SPLIT_DIR,
};
pub use synth::{
    class_color, generate_synthetic, sally_anne, AgentState, EventKind, EventLog, GeneratedEpisode, Scene, Script,
    Seat, SyntheticConfig, WorldEvent,
};

use crate::error::{Error, Result};
use crate::model::{Mode, PersonCues, Window, BOX_FIELDS, BOX_SLOTS, CLIP_LEN, NUM_OBJECTS, POSE_JOINTS};
use crate::tensor::Tensor;

/// How a mind's content changes over a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dynamics {
    Occur = 0,
    Disappear = 1,
    Update = 2,
    Null = 3,
}

impl Dynamics {
    pub const ALL: [Dynamics; 4] = [Dynamics::Occur, Dynamics::Disappear, Dynamics::Update, Dynamics::Null];

    pub fn name(self) -> &'static str {
        match self {
            Dynamics::Occur => "occur",
            Dynamics::Disappear => "disappear",
            Dynamics::Update => "update",
            Dynamics::Null => "null",
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Labels of an episode.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    /// Object class each person believes is the target, per frame.
    PerFrame { beliefs: [Vec<usize>; 2] },
    /// Per clip: dynamics of m1, m2, m12, m21, mc and a false-belief flag for each.
    Dynamics {
        minds: Vec<[Dynamics; 5]>,
        false_belief: Vec<[bool; 5]>,
    },
}

/// One person's per-frame cues.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonTrack {
    /// `[T, gaze_dim]`.
    pub gaze: Tensor<f32>,
    /// `[T, 17, joint_dim]`.
    pub pose: Tensor<f32>,
    /// `[T, 3, H, W]` egocentric frames; tbd only.
    pub ego: Option<Tensor<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: String,
    pub mode: Mode,
    /// Whether [`normalize_features`] has been applied.
    pub normalized: bool,
    /// `[T, 3, H, W]`.
    pub frames: Tensor<f32>,
    /// `[T, 27, 5]`: `x1, y1, x2, y2, presence` per object slot.
    pub boxes: Tensor<f32>,
    /// `[27, 27]`; boss only.
    pub ocr: Option<Tensor<f32>>,
    pub persons: [PersonTrack; 2],
    pub labels: Labels,
}

/// A model input with its targets.
#[derive(Clone, Debug)]
pub struct Sample {
    pub window: Window<f32>,
    /// One target list per head: per frame for boss, a single entry per head for tbd.
    pub targets: Vec<Vec<usize>>,
    /// tbd only: false-belief flag per mind.
    pub false_belief: Option<[bool; 5]>,
    pub episode: String,
    /// Clip index within the episode (0 for boss).
    pub clip: usize,
}

fn frame_slice(t: &Tensor<f32>, i: usize) -> Tensor<f32> {
    let per: usize = t.shape()[1..].iter().product();
    Tensor::new(t.shape()[1..].to_vec(), t.data()[i * per..(i + 1) * per].to_vec()).expect("frame shape")
}

fn rows(t: &Tensor<f32>, start: usize, len: usize) -> Tensor<f32> {
    let per: usize = t.shape()[1..].iter().product();
    let mut shape = t.shape().to_vec();
    shape[0] = len;
    Tensor::new(shape, t.data()[start * per..(start + len) * per].to_vec()).expect("row range")
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_size(&self) -> (usize, usize) {
        (self.frames.shape()[2], self.frames.shape()[3])
    }

    /// Checks every shape, range and cross-field invariant; errors name the field.
    pub fn validate(&self) -> Result<()> {
        let v = |field: &str, reason: String| Err(Error::validation(field, reason));
        let fs = self.frames.shape();
        if fs.len() != 4 || fs[1] != 3 {
            return v("frames", format!("shape {fs:?}, want [T, 3, H, W]"));
        }
        let t = fs[0];
        if t == 0 {
            return v("T", "episode has no frames".into());
        }
        let (h, w) = (fs[2], fs[3]);
        if h == 0 || w == 0 {
            return v("frames", format!("zero extent {h}x{w}"));
        }
        if self.boxes.shape() != [t, BOX_SLOTS, BOX_FIELDS] {
            return v(
                "boxes",
                format!("shape {:?}, want [{t}, {BOX_SLOTS}, {BOX_FIELDS}]", self.boxes.shape()),
            );
        }
        let boss = self.mode == Mode::PerFrameBeliefs;
        match (&self.ocr, boss) {
            (Some(o), true) => {
                if o.shape() != [NUM_OBJECTS, NUM_OBJECTS] {
                    return v("ocr", format!("shape {:?}", o.shape()));
                }
                if o.data().iter().any(|&x| x < 0.0) {
                    return v("ocr", "negative entry".into());
                }
            }
            (None, true) => return v("ocr", "missing in boss mode".into()),
            (Some(_), false) => return v("ocr", "present in tbd mode".into()),
            (None, false) => {}
        }
        let gd = self.mode.gaze_dim();
        for (i, p) in self.persons.iter().enumerate() {
            let name = |f: &str| format!("person{}.{f}", i + 1);
            if p.gaze.shape() != [t, gd] {
                return v(&name("gaze"), format!("shape {:?}, want [{t}, {gd}]", p.gaze.shape()));
            }
            if p.pose.shape() != [t, POSE_JOINTS, self.mode.joint_dim()] {
                return v(&name("pose"), format!("shape {:?}", p.pose.shape()));
            }
            match (&p.ego, boss) {
                (Some(e), false) if e.shape() != fs => {
                    return v(&name("ego"), format!("shape {:?}, want {fs:?}", e.shape()))
                }
                (None, false) => return v(&name("ego"), "missing in tbd mode".into()),
                (Some(_), true) => return v(&name("ego"), "present in boss mode".into()),
                _ => {}
            }
        }
        let finite = [&self.frames, &self.boxes]
            .into_iter()
            .chain(self.ocr.iter())
            .chain(
                self.persons
                    .iter()
                    .flat_map(|p| [&p.gaze, &p.pose].into_iter().chain(p.ego.iter())),
            )
            .all(|x| x.is_finite());
        if !finite {
            return v("arrays", "non-finite value".into());
        }
        match (&self.labels, boss) {
            (Labels::PerFrame { beliefs }, true) => {
                for (i, b) in beliefs.iter().enumerate() {
                    let field = format!("labels.p{}", i + 1);
                    if b.len() != t {
                        return v(&field, format!("{} entries, want {t}", b.len()));
                    }
                    if let Some(&bad) = b.iter().find(|&&c| c >= NUM_OBJECTS) {
                        return v(&field, format!("class {bad} outside 0..{NUM_OBJECTS}"));
                    }
                }
            }
            (Labels::Dynamics { minds, false_belief }, false) => {
                let clips = t / CLIP_LEN;
                if minds.len() != clips {
                    return v("labels.minds", format!("{} clips, want {clips}", minds.len()));
                }
                if false_belief.len() != clips {
                    return v(
                        "labels.false_belief",
                        format!("{} clips, want {clips}", false_belief.len()),
                    );
                }
            }
            _ => return v("labels", format!("label kind does not match mode {}", self.mode)),
        }
        Ok(())
    }

    fn person_window(&self, i: usize, start: usize, len: usize) -> PersonCues<f32> {
        let p = &self.persons[i];
        PersonCues {
            gaze: rows(&p.gaze, start, len),
            pose: (start..start + len).map(|t| frame_slice(&p.pose, t)).collect(),
            ego: p
                .ego
                .as_ref()
                .map(|e| (start..start + len).map(|t| frame_slice(e, t)).collect())
                .unwrap_or_default(),
        }
    }

    fn window(&self, start: usize, len: usize) -> Window<f32> {
        let boxes = rows(&self.boxes, start, len)
            .reshape([len, BOX_SLOTS * BOX_FIELDS])
            .expect("box rows");
        Window {
            frames: (start..start + len).map(|t| frame_slice(&self.frames, t)).collect(),
            boxes,
            ocr: self.ocr.clone(),
            persons: [self.person_window(0, start, len), self.person_window(1, start, len)],
        }
    }

    /// Model-ready samples: the whole episode in boss mode, one per clip in tbd mode.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        match &self.labels {
            Labels::PerFrame { beliefs } => Ok(vec![Sample {
                window: self.window(0, self.len()),
                targets: beliefs.to_vec(),
                false_belief: None,
                episode: self.id.clone(),
                clip: 0,
            }]),
            Labels::Dynamics { minds, false_belief } => {
                let clips = make_clips(self)?;
                Ok(clips
                    .into_iter()
                    .map(|(k, window)| Sample {
                        window,
                        targets: minds[k].iter().map(|&d| vec![d as usize]).collect(),
                        false_belief: Some(false_belief[k]),
                        episode: self.id.clone(),
                        clip: k,
                    })
                    .collect())
            }
        }
    }
}

/// Splits a tbd episode into non-overlapping five-frame windows. A trailing
/// remainder is dropped with a warning.
pub fn make_clips(ep: &Episode) -> Result<Vec<(usize, Window<f32>)>> {
    if ep.mode != Mode::FiveMinds {
        return Err(Error::Incompatible("clips are defined for tbd episodes only".into()));
    }
    let t = ep.len();
    if t < CLIP_LEN {
        return Err(Error::validation("T", format!("{t} frames is shorter than one clip")));
    }
    if !t.is_multiple_of(CLIP_LEN) {
        log::warn!("episode {}: dropping {} trailing frames", ep.id, t % CLIP_LEN);
    }
    Ok((0..t / CLIP_LEN)
        .map(|k| (k, ep.window(k * CLIP_LEN, CLIP_LEN)))
        .collect())
}

/// Joint whose position is the skeleton origin: the midpoint of the hips.
pub const ROOT_JOINTS: (usize, usize) = (11, 12);

fn normalize_pose(pose: &mut Tensor<f32>) {
    let d = pose.shape()[2];
    let per = POSE_JOINTS * d;
    for frame in pose.data_mut().chunks_mut(per) {
        let root: Vec<f32> = (0..d)
            .map(|k| 0.5 * (frame[ROOT_JOINTS.0 * d + k] + frame[ROOT_JOINTS.1 * d + k]))
            .collect();
        for j in 0..POSE_JOINTS {
            for k in 0..d {
                frame[j * d + k] -= root[k];
            }
        }
        let height = (0..POSE_JOINTS)
            .map(|j| frame[j * d..(j + 1) * d].iter().map(|v| v * v).sum::<f32>().sqrt())
            .fold(0.0f32, f32::max);
        if height > 0.0 {
            frame.iter_mut().for_each(|v| *v /= height);
        }
    }
}

fn normalize_gaze(gaze: &mut Tensor<f32>) -> Result<()> {
    let d = gaze.shape()[1];
    for row in gaze.data_mut().chunks_mut(d) {
        let n = row.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::validation("gaze", "zero-length gaze vector"));
        }
        row.iter_mut().for_each(|v| *v = (*v as f64 / n) as f32);
    }
    Ok(())
}

/// Brings raw cues into model units.
///
/// Raw episodes hold 0..255 pixels and pixel-unit boxes; both are rescaled
/// once, to `[0, 1]`. Gaze rows become unit vectors. Each pose frame is
/// centred on the hip midpoint and scaled so the farthest joint lies at
/// distance 1. Applying the function twice equals applying it once.
pub fn normalize_features(ep: &Episode) -> Result<Episode> {
    let mut out = ep.clone();
    let (h, w) = (ep.frames.shape()[2], ep.frames.shape()[3]);
    if h == 0 || w == 0 {
        return Err(Error::validation("frames", "zero extent"));
    }
    if !ep.normalized {
        let px = |v: f32| (v / 255.0).clamp(0.0, 1.0);
        out.frames = ep.frames.map(px);
        for p in out.persons.iter_mut() {
            if let Some(e) = p.ego.as_mut() {
                *e = e.map(px);
            }
        }
        for slot in out.boxes.data_mut().chunks_mut(BOX_FIELDS) {
            slot[0] = (slot[0] / w as f32).clamp(0.0, 1.0);
            slot[1] = (slot[1] / h as f32).clamp(0.0, 1.0);
            slot[2] = (slot[2] / w as f32).clamp(0.0, 1.0);
            slot[3] = (slot[3] / h as f32).clamp(0.0, 1.0);
        }
    }
    for p in out.persons.iter_mut() {
        normalize_gaze(&mut p.gaze)?;
        normalize_pose(&mut p.pose);
    }
    out.normalized = true;
    Ok(out)
}

#[cfg(test)]
mod tests;
