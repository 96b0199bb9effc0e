use std::path::{Path, PathBuf};

use super::{Dynamics, Episode, Labels, PersonTrack};
use crate::binfmt::{self, ArrayData, Container, NamedArray};
use crate::error::{Error, Result};
use crate::model::{Mode, BOX_FIELDS, BOX_SLOTS, CLIP_LEN, NUM_OBJECTS, POSE_JOINTS};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"MTEP1";

/// Manifest file name inside a corpus directory.
pub const CORPUS_MANIFEST: &str = "manifest.txt";
/// Directory holding `train.txt`, `val.txt` and `test.txt`.
pub const SPLIT_DIR: &str = "splits";

fn pair(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

pub fn save_episode(ep: &Episode, path: &Path) -> Result<()> {
    ep.validate()?;
    let t = ep.len();
    let (h, w) = ep.frame_size();
    let clips = match &ep.labels {
        Labels::Dynamics { minds, .. } => minds.len(),
        Labels::PerFrame { .. } => 0,
    };
    let manifest = vec![
        pair("format", "mtom-episode"),
        pair("id", &ep.id),
        pair("mode", ep.mode.dataset()),
        pair("T", t),
        pair("height", h),
        pair("width", w),
        pair("gaze_dim", ep.mode.gaze_dim()),
        pair("joint_dim", ep.mode.joint_dim()),
        pair("clips", clips),
        pair("normalized", ep.normalized),
    ];
    let f = |name: &str, x: &Tensor<f32>| NamedArray::f32(name, x.shape().to_vec(), x.data().to_vec());
    let mut arrays = vec![f("frames", &ep.frames), f("boxes", &ep.boxes)];
    if let Some(o) = &ep.ocr {
        arrays.push(f("ocr", o));
    }
    for (i, p) in ep.persons.iter().enumerate() {
        arrays.push(f(&format!("person{}.gaze", i + 1), &p.gaze));
        arrays.push(f(&format!("person{}.pose", i + 1), &p.pose));
        if let Some(e) = &p.ego {
            arrays.push(f(&format!("person{}.ego", i + 1), e));
        }
    }
    match &ep.labels {
        Labels::PerFrame { beliefs } => {
            let data = (0..t)
                .flat_map(|i| [beliefs[0][i] as i32, beliefs[1][i] as i32])
                .collect();
            arrays.push(NamedArray::i32("labels.beliefs", vec![t, 2], data));
        }
        Labels::Dynamics { minds, false_belief } => {
            let m = minds.iter().flatten().map(|&d| d as i32).collect();
            let fb = false_belief.iter().flatten().map(|&b| b as i32).collect();
            arrays.push(NamedArray::i32("labels.minds", vec![clips, 5], m));
            arrays.push(NamedArray::i32("labels.false_belief", vec![clips, 5], fb));
        }
    }
    binfmt::write_file(path, &binfmt::encode(MAGIC, &manifest, &arrays))
}

struct Fields<'a> {
    c: &'a Container,
    path: &'a Path,
}

impl Fields<'_> {
    fn corrupt(&self, reason: String) -> Error {
        Error::Corrupt {
            path: self.path.to_path_buf(),
            reason,
        }
    }

    fn text(&self, key: &str) -> Result<&str> {
        self.c
            .get(key)
            .ok_or_else(|| self.corrupt(format!("manifest lacks `{key}`")))
    }

    fn num(&self, key: &str) -> Result<usize> {
        self.text(key)?
            .parse()
            .map_err(|_| Error::validation(key, format!("`{}` is not a count", self.text(key).unwrap_or(""))))
    }

    /// Fetches an array, checking its extents against the manifest. `dims`
    /// pairs each expected extent with the manifest field it comes from.
    fn array(&self, name: &str, dims: &[(usize, &str)]) -> Result<&NamedArray> {
        let a = self
            .c
            .array(name)
            .ok_or_else(|| self.corrupt(format!("missing array `{name}`")))?;
        if a.shape.len() != dims.len() {
            return Err(Error::validation(
                name,
                format!("rank {}, want {}", a.shape.len(), dims.len()),
            ));
        }
        for (axis, (&got, &(want, field))) in a.shape.iter().zip(dims).enumerate() {
            if got != want {
                return Err(Error::validation(
                    field,
                    format!("manifest says {want} but `{name}` axis {axis} has extent {got}"),
                ));
            }
        }
        Ok(a)
    }

    fn f32(&self, name: &str, dims: &[(usize, &str)]) -> Result<Tensor<f32>> {
        let a = self.array(name, dims)?;
        match &a.data {
            ArrayData::F32(v) => Tensor::new(a.shape.clone(), v.clone()),
            ArrayData::I32(_) => Err(self.corrupt(format!("array `{name}` should hold f32"))),
        }
    }

    fn i32(&self, name: &str, dims: &[(usize, &str)]) -> Result<Vec<i32>> {
        let a = self.array(name, dims)?;
        match &a.data {
            ArrayData::I32(v) => Ok(v.clone()),
            ArrayData::F32(_) => Err(self.corrupt(format!("array `{name}` should hold i32"))),
        }
    }
}

pub fn load_episode(path: &Path) -> Result<Episode> {
    let c = binfmt::decode(&binfmt::read_file(path)?, MAGIC, path)?;
    let fields = Fields { c: &c, path };
    let mode = Mode::from_dataset(fields.text("mode")?)?;
    let t = fields.num("T")?;
    let h = fields.num("height")?;
    let w = fields.num("width")?;
    let gd = fields.num("gaze_dim")?;
    let jd = fields.num("joint_dim")?;
    let clips = fields.num("clips")?;
    if gd != mode.gaze_dim() {
        return Err(Error::validation(
            "gaze_dim",
            format!("{gd} does not match mode {}", mode.dataset()),
        ));
    }
    if jd != mode.joint_dim() {
        return Err(Error::validation(
            "joint_dim",
            format!("{jd} does not match mode {}", mode.dataset()),
        ));
    }
    let normalized = match fields.text("normalized")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::validation("normalized", format!("`{other}` is not a boolean"))),
    };
    let frame_dims = [(t, "T"), (3, "channels"), (h, "height"), (w, "width")];
    let boss = mode == Mode::PerFrameBeliefs;
    let person = |i: usize| -> Result<PersonTrack> {
        Ok(PersonTrack {
            gaze: fields.f32(&format!("person{i}.gaze"), &[(t, "T"), (gd, "gaze_dim")])?,
            pose: fields.f32(
                &format!("person{i}.pose"),
                &[(t, "T"), (POSE_JOINTS, "joints"), (jd, "joint_dim")],
            )?,
            ego: if boss {
                None
            } else {
                Some(fields.f32(&format!("person{i}.ego"), &frame_dims)?)
            },
        })
    };
    let labels = if boss {
        let raw = fields.i32("labels.beliefs", &[(t, "T"), (2, "persons")])?;
        let class = |v: i32| -> Result<usize> {
            usize::try_from(v)
                .ok()
                .filter(|&c| c < NUM_OBJECTS)
                .ok_or_else(|| Error::validation("labels.beliefs", format!("class {v} outside 0..{NUM_OBJECTS}")))
        };
        let mut beliefs = [Vec::with_capacity(t), Vec::with_capacity(t)];
        for row in raw.chunks(2) {
            beliefs[0].push(class(row[0])?);
            beliefs[1].push(class(row[1])?);
        }
        Labels::PerFrame { beliefs }
    } else {
        if clips != t / CLIP_LEN {
            return Err(Error::validation("clips", format!("{clips} clips cannot tile T={t}")));
        }
        let m = fields.i32("labels.minds", &[(clips, "clips"), (5, "minds")])?;
        let fb = fields.i32("labels.false_belief", &[(clips, "clips"), (5, "minds")])?;
        let mut minds = Vec::with_capacity(clips);
        let mut false_belief = Vec::with_capacity(clips);
        for (mr, fr) in m.chunks(5).zip(fb.chunks(5)) {
            let mut dm = [Dynamics::Null; 5];
            let mut df = [false; 5];
            for k in 0..5 {
                dm[k] = usize::try_from(mr[k])
                    .ok()
                    .and_then(Dynamics::from_index)
                    .ok_or_else(|| Error::validation("labels.minds", format!("value {} outside 0..4", mr[k])))?;
                df[k] = match fr[k] {
                    0 => false,
                    1 => true,
                    v => {
                        return Err(Error::validation(
                            "labels.false_belief",
                            format!("value {v} is not 0 or 1"),
                        ))
                    }
                };
            }
            minds.push(dm);
            false_belief.push(df);
        }
        Labels::Dynamics { minds, false_belief }
    };
    let ep = Episode {
        id: fields.text("id")?.to_string(),
        mode,
        normalized,
        frames: fields.f32("frames", &frame_dims)?,
        boxes: fields.f32(
            "boxes",
            &[(t, "T"), (BOX_SLOTS, "box_slots"), (BOX_FIELDS, "box_fields")],
        )?,
        ocr: if boss {
            Some(fields.f32("ocr", &[(NUM_OBJECTS, "objects"), (NUM_OBJECTS, "objects")])?)
        } else {
            None
        },
        persons: [person(1)?, person(2)?],
        labels,
    };
    let expected = if boss { 8 } else { 10 };
    if c.arrays.len() != expected {
        return Err(fields.corrupt(format!("{} arrays, want {expected}", c.arrays.len())));
    }
    ep.validate()?;
    Ok(ep)
}

/// Reads a manifest or split file: one relative path per non-blank line.
pub fn read_path_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_path_list(path: &Path, entries: &[String]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(e);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// An episode directory with its manifest.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    /// Episode paths relative to `root`, in manifest order.
    pub episodes: Vec<String>,
}

pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let episodes = read_path_list(&root.join(CORPUS_MANIFEST))?;
    if episodes.is_empty() {
        return Err(Error::Empty(format!(
            "{} lists no episodes",
            root.join(CORPUS_MANIFEST).display()
        )));
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        episodes,
    })
}

impl Corpus {
    pub fn split_path(&self, name: &str) -> PathBuf {
        self.root.join(SPLIT_DIR).join(format!("{name}.txt"))
    }

    /// Loads every episode of a split file. Entries must appear in the manifest.
    pub fn load_split(&self, split: &Path) -> Result<Vec<Episode>> {
        let entries = read_path_list(split)?;
        if entries.is_empty() {
            return Err(Error::Empty(format!("split {} is empty", split.display())));
        }
        entries
            .iter()
            .map(|e| {
                if !self.episodes.contains(e) {
                    return Err(Error::validation("split", format!("{e} is not in the corpus manifest")));
                }
                load_episode(&self.root.join(e))
            })
            .collect()
    }

    pub fn load_all(&self) -> Result<Vec<Episode>> {
        self.episodes.iter().map(|e| load_episode(&self.root.join(e))).collect()
    }
}

/// Writes episodes, event logs, manifest and `train`/`val`/`test` split files.
///
/// `splits` holds indices into `episodes` and must partition them.
pub fn write_corpus(
    root: &Path,
    episodes: &[super::GeneratedEpisode],
    splits: &[Vec<usize>; 3],
    config_text: &str,
) -> Result<Corpus> {
    let mut seen = vec![false; episodes.len()];
    for &i in splits.iter().flatten() {
        if i >= episodes.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::validation(
                "splits",
                format!("index {i} repeated or out of range"),
            ));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::validation("splits", "splits do not cover the corpus"));
    }
    let ep_dir = root.join("episodes");
    std::fs::create_dir_all(&ep_dir).map_err(|e| Error::io(&ep_dir, e))?;
    std::fs::create_dir_all(root.join(SPLIT_DIR)).map_err(|e| Error::io(root.join(SPLIT_DIR), e))?;
    let mut rel = Vec::with_capacity(episodes.len());
    for g in episodes {
        let name = format!("episodes/{}.mtep", g.episode.id);
        save_episode(&g.episode, &root.join(&name))?;
        let log_path = root.join(format!("episodes/{}.events", g.episode.id));
        std::fs::write(&log_path, g.log.to_text()).map_err(|e| Error::io(&log_path, e))?;
        rel.push(name);
    }
    write_path_list(&root.join(CORPUS_MANIFEST), &rel)?;
    for (name, idx) in ["train", "val", "test"].iter().zip(splits) {
        let list: Vec<String> = idx.iter().map(|&i| rel[i].clone()).collect();
        write_path_list(&root.join(SPLIT_DIR).join(format!("{name}.txt")), &list)?;
    }
    let cfg = root.join("config.txt");
    std::fs::write(&cfg, config_text).map_err(|e| Error::io(&cfg, e))?;
    Ok(Corpus {
        root: root.to_path_buf(),
        episodes: rel,
    })
}
