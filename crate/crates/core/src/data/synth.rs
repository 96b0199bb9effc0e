//! Grid-world simulator producing boss-like and tbd-like episodes.
//!
//! Objects sit on a `grid × grid` table. Two agents occupy seats just outside
//! the table edge and attend one cell each. An agent sees the cells within
//! Chebyshev distance 1 of its attended cell, and watches the other agent when
//! that agent's seat lies within distance 2 of it.
//!
//! Minds start equal to the initial layout and change only through object
//! events, one per clip at most:
//! * first-order: seeing the destination places the object there; seeing only
//!   the source removes it from the mind;
//! * `m^ij`: set to the true outcome when both agents see every affected cell
//!   and `i` watches `j`;
//! * `m^c`: as `m^ij`, with each agent watching the other.
//!
//! A mind's false-belief flag for a clip is set when, at clip end, its entry
//! for the clip's event object differs from the world.

use std::fmt::Write as _;

use super::{normalize_features, Dynamics, Episode, Labels, PersonTrack};
use crate::error::{Error, Result};
use crate::layers::MIN_FRAME;
use crate::model::{parse_num, Mode, BOX_FIELDS, BOX_SLOTS, CLIP_LEN, NUM_OBJECTS, POSE_JOINTS};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Script {
    Random,
    /// Agent 2 leaves, then agent 1 watches an object move.
    SallyAnne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub mode: Mode,
    pub episodes: usize,
    /// Frames per episode.
    pub frames: usize,
    /// Square frame side in pixels.
    pub frame_size: usize,
    /// Table cells per side.
    pub grid: usize,
    pub objects: usize,
    /// tbd: chance a clip contains an object event. boss: per-frame chance the target changes.
    pub move_rate: f64,
    /// Per-frame chance a present agent leaves.
    pub leave_rate: f64,
    /// Per-frame chance an agent looks at a random cell.
    pub attend_rate: f64,
    /// Per-frame chance agent 2 looks where agent 1 looks.
    pub joint_attend_rate: f64,
    /// Chance an object event is hidden from one agent.
    pub false_belief_rate: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub script: Script,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 1,
            mode: Mode::PerFrameBeliefs,
            episodes: 16,
            frames: 10,
            frame_size: 32,
            grid: 4,
            objects: 5,
            move_rate: 0.5,
            leave_rate: 0.1,
            attend_rate: 0.3,
            joint_attend_rate: 0.3,
            false_belief_rate: 0.3,
            train_fraction: 0.6,
            val_fraction: 0.2,
            script: Script::Random,
        }
    }
}

/// Probability of an absent agent returning on a given frame.
const RETURN_RATE: f64 = 0.5;
const GAZE_NOISE: f64 = 0.05;
const SPLIT_STREAM: u64 = u64::MAX;
const WATCH_RADIUS: i32 = 2;

impl SyntheticConfig {
    pub const KEYS: [&'static str; 15] = [
        "seed",
        "mode",
        "episodes",
        "frames",
        "frame_size",
        "grid",
        "objects",
        "move_rate",
        "leave_rate",
        "attend_rate",
        "joint_attend_rate",
        "false_belief_rate",
        "train_fraction",
        "val_fraction",
        "script",
    ];

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("move_rate", self.move_rate),
            ("leave_rate", self.leave_rate),
            ("attend_rate", self.attend_rate),
            ("joint_attend_rate", self.joint_attend_rate),
            ("false_belief_rate", self.false_belief_rate),
            ("train_fraction", self.train_fraction),
            ("val_fraction", self.val_fraction),
        ];
        for (k, p) in rates {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(k, format!("{p} is not a probability in [0, 1]")));
            }
        }
        if self.train_fraction + self.val_fraction > 1.0 + 1e-12 {
            return Err(Error::config("val_fraction", "train_fraction + val_fraction exceeds 1"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be positive"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be positive"));
        }
        if self.mode == Mode::FiveMinds && self.frames < CLIP_LEN {
            return Err(Error::config(
                "frames",
                format!("tbd episodes need at least {CLIP_LEN} frames"),
            ));
        }
        if self.frame_size < MIN_FRAME {
            return Err(Error::config(
                "frame_size",
                format!("{} is below the CNN minimum {MIN_FRAME}", self.frame_size),
            ));
        }
        if self.grid < 3 {
            return Err(Error::config("grid", "need at least 3 cells per side"));
        }
        if self.frame_size / self.grid < 4 {
            return Err(Error::config("grid", "cells would be narrower than 4 pixels"));
        }
        if self.objects == 0 {
            return Err(Error::config("objects", "at least one object is required"));
        }
        if self.objects > NUM_OBJECTS || self.objects >= self.grid * self.grid {
            return Err(Error::config("objects", "more objects than classes or free cells"));
        }
        if self.script == Script::SallyAnne {
            if self.mode != Mode::FiveMinds {
                return Err(Error::config("script", "sally_anne needs tbd mode"));
            }
            if self.frames < 2 * CLIP_LEN {
                return Err(Error::config("frames", "sally_anne needs at least 10 frames"));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let f = |x: f64| format!("{x:?}");
        vec![
            ("seed".into(), self.seed.to_string()),
            ("mode".into(), self.mode.to_string()),
            ("episodes".into(), self.episodes.to_string()),
            ("frames".into(), self.frames.to_string()),
            ("frame_size".into(), self.frame_size.to_string()),
            ("grid".into(), self.grid.to_string()),
            ("objects".into(), self.objects.to_string()),
            ("move_rate".into(), f(self.move_rate)),
            ("leave_rate".into(), f(self.leave_rate)),
            ("attend_rate".into(), f(self.attend_rate)),
            ("joint_attend_rate".into(), f(self.joint_attend_rate)),
            ("false_belief_rate".into(), f(self.false_belief_rate)),
            ("train_fraction".into(), f(self.train_fraction)),
            ("val_fraction".into(), f(self.val_fraction)),
            (
                "script".into(),
                match self.script {
                    Script::Random => "random",
                    Script::SallyAnne => "sally_anne",
                }
                .into(),
            ),
        ]
    }

    /// Applies one `key = value` setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "mode" => self.mode = v.parse().or_else(|_| Mode::from_dataset(v.trim()))?,
            "episodes" => self.episodes = parse_num(key, v)?,
            "frames" => self.frames = parse_num(key, v)?,
            "frame_size" => self.frame_size = parse_num(key, v)?,
            "grid" => self.grid = parse_num(key, v)?,
            "objects" => self.objects = parse_num(key, v)?,
            "move_rate" => self.move_rate = parse_num(key, v)?,
            "leave_rate" => self.leave_rate = parse_num(key, v)?,
            "attend_rate" => self.attend_rate = parse_num(key, v)?,
            "joint_attend_rate" => self.joint_attend_rate = parse_num(key, v)?,
            "false_belief_rate" => self.false_belief_rate = parse_num(key, v)?,
            "train_fraction" => self.train_fraction = parse_num(key, v)?,
            "val_fraction" => self.val_fraction = parse_num(key, v)?,
            "script" => {
                self.script = match v.trim() {
                    "random" => Script::Random,
                    "sally_anne" => Script::SallyAnne,
                    other => return Err(Error::config(key, format!("unknown script `{other}`"))),
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Episode indices for train, val and test, from a seeded shuffle.
    pub fn splits(&self) -> [Vec<usize>; 3] {
        let n = self.episodes;
        let mut idx: Vec<usize> = (0..n).collect();
        Rng::with_stream(self.seed, SPLIT_STREAM).shuffle(&mut idx);
        let n_train = ((n as f64 * self.train_fraction).round() as usize).min(n);
        let n_val = ((n as f64 * self.val_fraction).round() as usize).min(n - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        [train, val, test]
    }
}

/// A seat around the table, in cell coordinates `(row, col)`; always off the grid.
pub type Seat = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentState {
    pub seat: Seat,
    pub attend: usize,
    pub present: bool,
}

/// A world snapshot: objects with their class and cell, and two agents.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub grid: usize,
    pub frame_size: usize,
    /// `(class, cell)` per object; `None` when off the table.
    pub objects: Vec<(usize, Option<usize>)>,
    pub agents: [AgentState; 2],
}

fn cheb(a: (i32, i32), b: (i32, i32)) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Fill colour for an object class: three levels per channel.
pub fn class_color(class: usize) -> [f32; 3] {
    const LEVELS: [f32; 3] = [40.0, 150.0, 255.0];
    [LEVELS[class / 9 % 3], LEVELS[class / 3 % 3], LEVELS[class % 3]]
}

const BACKGROUND: [f32; 3] = [90.0, 90.0, 90.0];
const AGENT_COLORS: [[f32; 3]; 2] = [[255.0, 255.0, 255.0], [0.0, 0.0, 0.0]];

impl Scene {
    pub fn cell_rc(&self, cell: usize) -> (i32, i32) {
        ((cell / self.grid) as i32, (cell % self.grid) as i32)
    }

    fn cell_px(&self) -> f64 {
        (self.frame_size / self.grid) as f64
    }

    fn offset(&self) -> f64 {
        ((self.frame_size - (self.frame_size / self.grid) * self.grid) / 2) as f64
    }

    /// Pixel centre `(x, y)` of a cell-coordinate point.
    fn px(&self, rc: (f64, f64)) -> (f64, f64) {
        let c = self.cell_px();
        (self.offset() + (rc.1 + 0.5) * c, self.offset() + (rc.0 + 0.5) * c)
    }

    pub fn sees(&self, agent: usize, cell: usize) -> bool {
        let a = &self.agents[agent];
        a.present && cheb(self.cell_rc(a.attend), self.cell_rc(cell)) <= 1
    }

    /// Whether agent `i` has agent `j` in view.
    pub fn watches(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.agents[i], &self.agents[j]);
        a.present && b.present && cheb(self.cell_rc(a.attend), b.seat) <= WATCH_RADIUS
    }

    pub fn occupant(&self, cell: usize) -> Option<usize> {
        self.objects.iter().position(|&(_, c)| c == Some(cell))
    }

    fn blob_radius(&self) -> f64 {
        0.35 * self.cell_px()
    }

    /// Third-person frame `[3, S, S]` in 0..255 units.
    pub fn render(&self) -> Tensor<f32> {
        let s = self.frame_size;
        let mut img = Tensor::from_fn([3, s, s], |i| BACKGROUND[i / (s * s)]);
        let r = self.blob_radius();
        let d = img.data_mut();
        for &(class, cell) in &self.objects {
            let Some(cell) = cell else { continue };
            let (rr, cc) = self.cell_rc(cell);
            let (cx, cy) = self.px((rr as f64, cc as f64));
            let col = class_color(class);
            for y in 0..s {
                for x in 0..s {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        for ch in 0..3 {
                            d[ch * s * s + y * s + x] = col[ch];
                        }
                    }
                }
            }
        }
        for (k, a) in self.agents.iter().enumerate() {
            if !a.present {
                continue;
            }
            let (cx, cy) = self.px((a.seat.0 as f64, a.seat.1 as f64));
            let cx = (cx as i64).clamp(1, s as i64 - 2);
            let cy = (cy as i64).clamp(1, s as i64 - 2);
            for y in cy - 1..=cy + 1 {
                for x in cx - 1..=cx + 1 {
                    for ch in 0..3 {
                        d[ch * s * s + y as usize * s + x as usize] = AGENT_COLORS[k][ch];
                    }
                }
            }
        }
        img
    }

    /// Egocentric frame: the agent's 3×3 view neighbourhood stretched over
    /// the frame; off-table area and absent agents render black.
    pub fn render_ego(&self, agent: usize, world: &Tensor<f32>) -> Tensor<f32> {
        let s = self.frame_size;
        let a = &self.agents[agent];
        if !a.present {
            return Tensor::zeros([3, s, s]);
        }
        let (ar, ac) = self.cell_rc(a.attend);
        let (cpx, off, g) = (self.cell_px(), self.offset(), self.grid as f64);
        let src = world.data();
        Tensor::from_fn([3, s, s], |i| {
            let (ch, y, x) = (i / (s * s), i / s % s, i % s);
            let u = (ac - 1) as f64 + 3.0 * (x as f64 + 0.5) / s as f64;
            let v = (ar - 1) as f64 + 3.0 * (y as f64 + 0.5) / s as f64;
            if u < 0.0 || v < 0.0 || u >= g || v >= g {
                return 0.0;
            }
            let wx = ((off + u * cpx) as usize).min(s - 1);
            let wy = ((off + v * cpx) as usize).min(s - 1);
            src[ch * s * s + wy * s + wx]
        })
    }

    /// `[27, 5]` slots indexed by class, in pixels; absent classes stay zero.
    pub fn boxes(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; BOX_SLOTS * BOX_FIELDS];
        let r = self.blob_radius();
        for &(class, cell) in &self.objects {
            let Some(cell) = cell else { continue };
            let (rr, cc) = self.cell_rc(cell);
            let (cx, cy) = self.px((rr as f64, cc as f64));
            out[class * BOX_FIELDS..(class + 1) * BOX_FIELDS].copy_from_slice(&[
                (cx - r) as f32,
                (cy - r) as f32,
                (cx + r) as f32,
                (cy + r) as f32,
                1.0,
            ]);
        }
        out
    }

    /// Where the agent looks from and toward, in cell coordinates. Absent
    /// agents stand two cells behind their seat facing away.
    fn heading(&self, agent: usize) -> ((f64, f64), (f64, f64)) {
        let a = &self.agents[agent];
        let seat = (a.seat.0 as f64, a.seat.1 as f64);
        let g = self.grid as f64 - 1.0;
        // outward normal of the seat's side
        let out = (
            if a.seat.0 < 0 {
                -1.0
            } else if a.seat.0 as f64 > g {
                1.0
            } else {
                0.0
            },
            if a.seat.1 < 0 {
                -1.0
            } else if a.seat.1 as f64 > g {
                1.0
            } else {
                0.0
            },
        );
        if a.present {
            let (tr, tc) = self.cell_rc(a.attend);
            (seat, (tr as f64 - seat.0, tc as f64 - seat.1))
        } else {
            ((seat.0 + 2.0 * out.0, seat.1 + 2.0 * out.1), out)
        }
    }

    /// Raw gaze: unit direction (x right, y down, optional z up) plus noise.
    fn gaze(&self, agent: usize, dim: usize, rng: &mut Rng) -> Vec<f32> {
        let (_, (dr, dc)) = self.heading(agent);
        let mut v = vec![dc, dr];
        if dim == 3 {
            // looking down at the table when present
            v.push(if self.agents[agent].present { -1.0 } else { 0.0 });
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / n + rng.normal(0.0, GAZE_NOISE)) as f32).collect()
    }

    /// Raw pose: a standing template turned toward the attended cell, in pixels.
    fn pose(&self, agent: usize, dim: usize, rng: &mut Rng) -> Vec<f32> {
        let (pos, (dr, dc)) = self.heading(agent);
        let n = (dr * dr + dc * dc).sqrt();
        let fwd = (dc / n, dr / n);
        let right = (-fwd.1, fwd.0);
        let (cx, cy) = self.px(pos);
        let scale = self.cell_px();
        let mut out = Vec::with_capacity(POSE_JOINTS * dim);
        for &[bx, by, bz] in &POSE_TEMPLATE {
            let x = cx + (bx * right.0 + by * fwd.0) * scale + rng.normal(0.0, 0.01 * scale);
            let y = cy + (bx * right.1 + by * fwd.1) * scale + rng.normal(0.0, 0.01 * scale);
            let z = bz * scale;
            if dim == 3 {
                out.extend([x as f32, y as f32, z as f32]);
            } else {
                out.extend([x as f32, (y - z) as f32]);
            }
        }
        out
    }
}

/// COCO-ordered joints of a 1.7-unit figure: x right, y forward, z up.
const POSE_TEMPLATE: [[f64; 3]; POSE_JOINTS] = [
    [0.0, 0.10, 1.60],
    [-0.03, 0.08, 1.65],
    [0.03, 0.08, 1.65],
    [-0.07, 0.0, 1.62],
    [0.07, 0.0, 1.62],
    [-0.18, 0.0, 1.40],
    [0.18, 0.0, 1.40],
    [-0.22, 0.10, 1.10],
    [0.22, 0.10, 1.10],
    [-0.20, 0.25, 0.95],
    [0.20, 0.25, 0.95],
    [-0.10, 0.0, 0.90],
    [0.10, 0.0, 0.90],
    [-0.10, 0.02, 0.50],
    [0.10, 0.02, 0.50],
    [-0.10, 0.0, 0.05],
    [0.10, 0.0, 0.05],
];

/// One logged simulation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// Initial placement; `cell == None` keeps the object off the table.
    Object {
        object: usize,
        class: usize,
        cell: Option<usize>,
    },
    /// Initial agent state.
    Agent {
        agent: usize,
        seat: Seat,
        attend: usize,
        present: bool,
    },
    /// boss: the object agent 0 is instructed to convey.
    Target {
        object: usize,
    },
    /// boss: agent 1's initial guess.
    Belief {
        object: usize,
    },
    Attend {
        agent: usize,
        cell: usize,
    },
    Leave {
        agent: usize,
    },
    Return {
        agent: usize,
    },
    Move {
        object: usize,
        from: usize,
        to: usize,
    },
    Remove {
        object: usize,
        from: usize,
    },
    Place {
        object: usize,
        to: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorldEvent {
    pub frame: usize,
    pub kind: EventKind,
}

/// Everything needed to replay an episode's world and minds.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub episode: String,
    pub mode: Mode,
    pub grid: usize,
    pub frames: usize,
    pub events: Vec<WorldEvent>,
}

fn opt_cell(c: Option<usize>) -> String {
    c.map_or_else(|| "none".into(), |c| c.to_string())
}

impl EventLog {
    /// One header line, then `frame kind key=value ...` per event.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "episode={} mode={} grid={} frames={}\n",
            self.episode,
            self.mode.dataset(),
            self.grid,
            self.frames
        );
        for e in &self.events {
            let body = match e.kind {
                EventKind::Object { object, class, cell } => {
                    format!("object object={object} class={class} cell={}", opt_cell(cell))
                }
                EventKind::Agent {
                    agent,
                    seat,
                    attend,
                    present,
                } => format!(
                    "agent agent={agent} row={} col={} attend={attend} present={}",
                    seat.0,
                    seat.1,
                    u8::from(present)
                ),
                EventKind::Target { object } => format!("target object={object}"),
                EventKind::Belief { object } => format!("belief object={object}"),
                EventKind::Attend { agent, cell } => format!("attend agent={agent} cell={cell}"),
                EventKind::Leave { agent } => format!("leave agent={agent}"),
                EventKind::Return { agent } => format!("return agent={agent}"),
                EventKind::Move { object, from, to } => format!("move object={object} from={from} to={to}"),
                EventKind::Remove { object, from } => format!("remove object={object} from={from}"),
                EventKind::Place { object, to } => format!("place object={object} to={to}"),
            };
            let _ = writeln!(s, "{} {body}", e.frame);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: &str, why: &str| Error::validation("events", format!("{why}: `{line}`"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("", "empty log"))?;
        let kv = |line: &str, parts: &[&str], key: &str| -> Result<String> {
            parts
                .iter()
                .find_map(|p| p.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(String::from)
                .ok_or_else(|| bad(line, &format!("missing `{key}`")))
        };
        let hp: Vec<&str> = header.split_whitespace().collect();
        let num = |line: &str, s: String| -> Result<i64> { s.parse().map_err(|_| bad(line, "bad number")) };
        let mut log = EventLog {
            episode: kv(header, &hp, "episode")?,
            mode: Mode::from_dataset(&kv(header, &hp, "mode")?)?,
            grid: num(header, kv(header, &hp, "grid")?)? as usize,
            frames: num(header, kv(header, &hp, "frames")?)? as usize,
            events: Vec::new(),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 2 {
                return Err(bad(line, "too few fields"));
            }
            let frame = num(line, parts[0].to_string())? as usize;
            let u = |key: &str| -> Result<usize> {
                let v = num(line, kv(line, &parts, key)?)?;
                usize::try_from(v).map_err(|_| bad(line, "negative value"))
            };
            let kind = match parts[1] {
                "object" => EventKind::Object {
                    object: u("object")?,
                    class: u("class")?,
                    cell: match kv(line, &parts, "cell")?.as_str() {
                        "none" => None,
                        _ => Some(u("cell")?),
                    },
                },
                "agent" => EventKind::Agent {
                    agent: u("agent")?,
                    seat: (
                        num(line, kv(line, &parts, "row")?)? as i32,
                        num(line, kv(line, &parts, "col")?)? as i32,
                    ),
                    attend: u("attend")?,
                    present: u("present")? == 1,
                },
                "target" => EventKind::Target { object: u("object")? },
                "belief" => EventKind::Belief { object: u("object")? },
                "attend" => EventKind::Attend {
                    agent: u("agent")?,
                    cell: u("cell")?,
                },
                "leave" => EventKind::Leave { agent: u("agent")? },
                "return" => EventKind::Return { agent: u("agent")? },
                "move" => EventKind::Move {
                    object: u("object")?,
                    from: u("from")?,
                    to: u("to")?,
                },
                "remove" => EventKind::Remove {
                    object: u("object")?,
                    from: u("from")?,
                },
                "place" => EventKind::Place {
                    object: u("object")?,
                    to: u("to")?,
                },
                _ => return Err(bad(line, "unknown event")),
            };
            log.events.push(WorldEvent { frame, kind });
        }
        Ok(log)
    }
}

/// A generated episode with the log it was simulated from.
#[derive(Clone, Debug)]
pub struct GeneratedEpisode {
    pub episode: Episode,
    pub log: EventLog,
}

type Mind = Vec<Option<usize>>;

struct Sim {
    scene: Scene,
    /// m1, m2, m12, m21, mc.
    minds: [Mind; 5],
    target: usize,
    belief: usize,
    log: Vec<WorldEvent>,
    frame: usize,
}

impl Sim {
    fn emit(&mut self, kind: EventKind) {
        let s = &mut self.scene;
        match kind {
            EventKind::Object { object, class, cell } => {
                if s.objects.len() <= object {
                    s.objects.resize(object + 1, (0, None));
                }
                s.objects[object] = (class, cell);
                for m in self.minds.iter_mut() {
                    if m.len() <= object {
                        m.resize(object + 1, None);
                    }
                    m[object] = cell;
                }
            }
            EventKind::Agent {
                agent,
                seat,
                attend,
                present,
            } => {
                s.agents[agent] = AgentState { seat, attend, present };
            }
            EventKind::Target { object } => self.target = object,
            EventKind::Belief { object } => self.belief = object,
            EventKind::Attend { agent, cell } => {
                if s.agents[agent].attend == cell {
                    return;
                }
                s.agents[agent].attend = cell;
            }
            EventKind::Leave { agent } => s.agents[agent].present = false,
            EventKind::Return { agent } => s.agents[agent].present = true,
            EventKind::Move { object, from, to } => self.object_event(object, &[from, to], Some(to), Some(from)),
            EventKind::Remove { object, from } => self.object_event(object, &[from], None, Some(from)),
            EventKind::Place { object, to } => self.object_event(object, &[to], Some(to), None),
        }
        self.log.push(WorldEvent {
            frame: self.frame,
            kind,
        });
    }

    fn object_event(&mut self, object: usize, cells: &[usize], to: Option<usize>, from: Option<usize>) {
        let s = &mut self.scene;
        s.objects[object].1 = to;
        for a in 0..2 {
            let sees_to = to.is_some_and(|c| s.sees(a, c));
            let sees_from = from.is_some_and(|c| s.sees(a, c));
            if sees_to {
                self.minds[a][object] = to;
            } else if sees_from {
                self.minds[a][object] = None;
            }
        }
        let full = |a: usize| cells.iter().all(|&c| s.sees(a, c));
        let both = full(0) && full(1);
        if both && s.watches(0, 1) {
            self.minds[2][object] = to;
        }
        if both && s.watches(1, 0) {
            self.minds[3][object] = to;
        }
        if both && s.watches(0, 1) && s.watches(1, 0) {
            self.minds[4][object] = to;
        }
    }
}

fn transition(before: &Mind, after: &Mind) -> Dynamics {
    let mut changed = before.iter().zip(after).filter(|(b, a)| b != a);
    let out = match changed.next() {
        None => Dynamics::Null,
        Some((None, Some(_))) => Dynamics::Occur,
        Some((Some(_), None)) => Dynamics::Disappear,
        Some(_) => Dynamics::Update,
    };
    debug_assert!(changed.next().is_none(), "at most one object changes per clip");
    out
}

/// Per-episode cue buffers.
struct Recorder {
    frames: Vec<f32>,
    boxes: Vec<f32>,
    gaze: [Vec<f32>; 2],
    pose: [Vec<f32>; 2],
    ego: [Vec<f32>; 2],
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            frames: Vec::new(),
            boxes: Vec::new(),
            gaze: Default::default(),
            pose: Default::default(),
            ego: Default::default(),
        }
    }

    fn record(&mut self, scene: &Scene, mode: Mode, rng: &mut Rng) {
        let world = scene.render();
        for a in 0..2 {
            self.gaze[a].extend(scene.gaze(a, mode.gaze_dim(), rng));
            self.pose[a].extend(scene.pose(a, mode.joint_dim(), rng));
            if mode == Mode::FiveMinds {
                self.ego[a].extend_from_slice(scene.render_ego(a, &world).data());
            }
        }
        self.frames.extend_from_slice(world.data());
        self.boxes.extend(scene.boxes());
    }

    fn finish(self, id: String, mode: Mode, t: usize, s: usize, labels: Labels) -> Result<Episode> {
        let Recorder {
            frames,
            boxes,
            gaze,
            pose,
            ego,
        } = self;
        let [g0, g1] = gaze;
        let [p0, p1] = pose;
        let [e0, e1] = ego;
        let boss = mode == Mode::PerFrameBeliefs;
        let person = |g: Vec<f32>, p: Vec<f32>, e: Vec<f32>| -> Result<PersonTrack> {
            Ok(PersonTrack {
                gaze: Tensor::new([t, mode.gaze_dim()], g)?,
                pose: Tensor::new([t, POSE_JOINTS, mode.joint_dim()], p)?,
                ego: if boss {
                    None
                } else {
                    Some(Tensor::new([t, 3, s, s], e)?)
                },
            })
        };
        Ok(Episode {
            id,
            mode,
            normalized: false,
            frames: Tensor::new([t, 3, s, s], frames)?,
            boxes: Tensor::new([t, BOX_SLOTS, BOX_FIELDS], boxes)?,
            ocr: None,
            persons: [person(g0, p0, e0)?, person(g1, p1, e1)?],
            labels,
        })
    }
}

fn random_seat(grid: usize, side: usize, rng: &mut Rng) -> Seat {
    let g = grid as i32;
    let k = rng.below(grid) as i32;
    match side % 4 {
        0 => (g, k),
        1 => (-1, k),
        2 => (k, -1),
        _ => (k, g),
    }
}

fn initial_scene(cfg: &SyntheticConfig, rng: &mut Rng, sim: &mut Sim) {
    let cells = cfg.grid * cfg.grid;
    let mut classes: Vec<usize> = (0..NUM_OBJECTS).collect();
    rng.shuffle(&mut classes);
    let mut free: Vec<usize> = (0..cells).collect();
    rng.shuffle(&mut free);
    for o in 0..cfg.objects {
        sim.emit(EventKind::Object {
            object: o,
            class: classes[o],
            cell: Some(free[o]),
        });
    }
    if cfg.mode == Mode::FiveMinds && cfg.objects < NUM_OBJECTS {
        // one object waits off the table so it can be placed later
        sim.emit(EventKind::Object {
            object: cfg.objects,
            class: classes[cfg.objects],
            cell: None,
        });
    }
    let side = rng.below(4);
    for a in 0..2 {
        let seat = random_seat(cfg.grid, side + 1 - a, rng);
        let attend = rng.below(cells);
        sim.emit(EventKind::Agent {
            agent: a,
            seat,
            attend,
            present: true,
        });
    }
}

fn new_sim(cfg: &SyntheticConfig) -> Sim {
    let idle = AgentState {
        seat: (-1, 0),
        attend: 0,
        present: false,
    };
    Sim {
        scene: Scene {
            grid: cfg.grid,
            frame_size: cfg.frame_size,
            objects: Vec::new(),
            agents: [idle, idle],
        },
        minds: Default::default(),
        target: 0,
        belief: 0,
        log: Vec::new(),
        frame: 0,
    }
}

fn present_objects(scene: &Scene) -> Vec<usize> {
    (0..scene.objects.len())
        .filter(|&o| scene.objects[o].1.is_some())
        .collect()
}

fn boss_episode(cfg: &SyntheticConfig, index: usize, rng: &mut Rng) -> Result<(Episode, EventLog)> {
    let mut sim = new_sim(cfg);
    initial_scene(cfg, rng, &mut sim);
    let cells = cfg.grid * cfg.grid;
    let objs = present_objects(&sim.scene);
    sim.emit(EventKind::Target {
        object: objs[rng.below(objs.len())],
    });
    sim.emit(EventKind::Belief {
        object: objs[rng.below(objs.len())],
    });
    let mut rec = Recorder::new();
    let mut beliefs = [Vec::new(), Vec::new()];
    for f in 0..cfg.frames {
        sim.frame = f;
        if f > 0 && objs.len() > 1 && rng.bernoulli(cfg.move_rate) {
            let others: Vec<usize> = objs.iter().copied().filter(|&o| o != sim.target).collect();
            sim.emit(EventKind::Target {
                object: others[rng.below(others.len())],
            });
        }
        let goal = sim.scene.objects[sim.target].1.expect("targets stay on the table");
        let a0 = if rng.bernoulli(cfg.attend_rate) {
            rng.below(cells)
        } else {
            goal
        };
        sim.emit(EventKind::Attend { agent: 0, cell: a0 });
        if rng.bernoulli(cfg.joint_attend_rate) {
            sim.emit(EventKind::Attend { agent: 1, cell: a0 });
        } else if rng.bernoulli(cfg.attend_rate) {
            sim.emit(EventKind::Attend {
                agent: 1,
                cell: rng.below(cells),
            });
        }
        // agent 1 adopts whatever object both agents look at together
        let (c0, c1) = (sim.scene.agents[0].attend, sim.scene.agents[1].attend);
        if c0 == c1 {
            if let Some(o) = sim.scene.occupant(c0) {
                sim.belief = o;
            }
        }
        beliefs[0].push(sim.scene.objects[sim.target].0);
        beliefs[1].push(sim.scene.objects[sim.belief].0);
        rec.record(&sim.scene, cfg.mode, rng);
    }
    let id = format!("ep{index:04}");
    let ep = rec.finish(
        id.clone(),
        cfg.mode,
        cfg.frames,
        cfg.frame_size,
        Labels::PerFrame { beliefs },
    )?;
    Ok((ep, log_of(cfg, id, sim.log)))
}

fn log_of(cfg: &SyntheticConfig, episode: String, events: Vec<WorldEvent>) -> EventLog {
    EventLog {
        episode,
        mode: cfg.mode,
        grid: cfg.grid,
        frames: cfg.frames,
        events,
    }
}

/// Chooses and applies at most one object event, possibly hiding it from one agent first.
fn object_event(cfg: &SyntheticConfig, sim: &mut Sim, rng: &mut Rng) -> Option<usize> {
    let scene = &sim.scene;
    let cells = cfg.grid * cfg.grid;
    let present: Vec<usize> = (0..2).filter(|&a| scene.agents[a].present).collect();
    let focal = (!present.is_empty()).then(|| present[rng.below(present.len())]);
    let visible = |c: usize| focal.is_none_or(|a| scene.sees(a, c));
    let on_table = present_objects(scene);
    let off_table: Vec<usize> = (0..scene.objects.len()).filter(|o| !on_table.contains(o)).collect();
    let empty: Vec<usize> = (0..cells).filter(|&c| scene.occupant(c).is_none()).collect();
    let pick = |xs: &[usize], rng: &mut Rng| -> Option<usize> {
        let near: Vec<usize> = xs.iter().copied().filter(|&x| visible(x)).collect();
        let pool = if near.is_empty() { xs } else { &near };
        (!pool.is_empty()).then(|| pool[rng.below(pool.len())])
    };
    let roll = rng.below(3);
    let event = if roll == 0 && !off_table.is_empty() {
        let object = off_table[rng.below(off_table.len())];
        EventKind::Place {
            object,
            to: pick(&empty, rng)?,
        }
    } else if roll == 1 && on_table.len() > 1 {
        let cells_of: Vec<usize> = on_table
            .iter()
            .map(|&o| scene.objects[o].1.expect("on table"))
            .collect();
        let from = pick(&cells_of, rng)?;
        EventKind::Remove {
            object: scene.occupant(from).expect("occupied"),
            from,
        }
    } else {
        let cells_of: Vec<usize> = on_table
            .iter()
            .map(|&o| scene.objects[o].1.expect("on table"))
            .collect();
        let from = pick(&cells_of, rng)?;
        let rc = scene.cell_rc(from);
        let adjacent: Vec<usize> = empty
            .iter()
            .copied()
            .filter(|&c| cheb(scene.cell_rc(c), rc) <= 1)
            .collect();
        let to = if adjacent.is_empty() {
            pick(&empty, rng)?
        } else {
            adjacent[rng.below(adjacent.len())]
        };
        EventKind::Move {
            object: scene.occupant(from).expect("occupied"),
            from,
            to,
        }
    };
    let (object, touched) = match event {
        EventKind::Place { object, to } => (object, vec![to]),
        EventKind::Remove { object, from } => (object, vec![from]),
        EventKind::Move { object, from, to } => (object, vec![from, to]),
        _ => unreachable!("object events only"),
    };
    if rng.bernoulli(cfg.false_belief_rate) {
        let a = rng.below(2);
        if sim.scene.agents[a].present {
            let away: Vec<usize> = (0..cells)
                .filter(|&c| {
                    touched
                        .iter()
                        .all(|&t| cheb(sim.scene.cell_rc(c), sim.scene.cell_rc(t)) > 1)
                })
                .collect();
            if away.is_empty() || rng.bernoulli(0.5) {
                sim.emit(EventKind::Leave { agent: a });
            } else {
                sim.emit(EventKind::Attend {
                    agent: a,
                    cell: away[rng.below(away.len())],
                });
            }
        }
    }
    sim.emit(event);
    Some(object)
}

fn tbd_labels(sim: &Sim, start: &[Mind; 5], event: Option<usize>) -> ([Dynamics; 5], [bool; 5]) {
    let mut dm = [Dynamics::Null; 5];
    let mut fb = [false; 5];
    for m in 0..5 {
        dm[m] = transition(&start[m], &sim.minds[m]);
        fb[m] = event.is_some_and(|o| sim.minds[m][o] != sim.scene.objects[o].1);
    }
    (dm, fb)
}

fn tbd_episode(cfg: &SyntheticConfig, index: usize, rng: &mut Rng) -> Result<(Episode, EventLog)> {
    let mut sim = new_sim(cfg);
    initial_scene(cfg, rng, &mut sim);
    let cells = cfg.grid * cfg.grid;
    let mut rec = Recorder::new();
    let (mut minds, mut false_belief) = (Vec::new(), Vec::new());
    let mut start = sim.minds.clone();
    let mut event_obj = None;
    let mut event_frame = None;
    for f in 0..cfg.frames {
        sim.frame = f;
        if f % CLIP_LEN == 0 {
            start = sim.minds.clone();
            event_obj = None;
            event_frame = (f + CLIP_LEN <= cfg.frames && rng.bernoulli(cfg.move_rate)).then(|| f + rng.below(CLIP_LEN));
        }
        for a in 0..2 {
            if sim.scene.agents[a].present {
                if rng.bernoulli(cfg.leave_rate) {
                    sim.emit(EventKind::Leave { agent: a });
                }
            } else if cfg.leave_rate > 0.0 && rng.bernoulli(RETURN_RATE) {
                sim.emit(EventKind::Return { agent: a });
            }
        }
        for a in 0..2 {
            if rng.bernoulli(cfg.attend_rate) {
                sim.emit(EventKind::Attend {
                    agent: a,
                    cell: rng.below(cells),
                });
            }
        }
        if rng.bernoulli(cfg.joint_attend_rate) {
            let cell = sim.scene.agents[0].attend;
            sim.emit(EventKind::Attend { agent: 1, cell });
        }
        if event_frame == Some(f) {
            event_obj = object_event(cfg, &mut sim, rng);
        }
        rec.record(&sim.scene, cfg.mode, rng);
        if f % CLIP_LEN == CLIP_LEN - 1 {
            let (dm, fb) = tbd_labels(&sim, &start, event_obj);
            minds.push(dm);
            false_belief.push(fb);
        }
    }
    let id = format!("ep{index:04}");
    let ep = rec.finish(
        id.clone(),
        cfg.mode,
        cfg.frames,
        cfg.frame_size,
        Labels::Dynamics { minds, false_belief },
    )?;
    Ok((ep, log_of(cfg, id, sim.log)))
}

/// The false-belief script: both agents watch object 0; agent 1 leaves at
/// frame 2; at frame 7 object 0 moves one cell while agent 0 watches.
pub fn sally_anne(cfg: &SyntheticConfig, index: usize, rng: &mut Rng) -> Result<(Episode, EventLog)> {
    let mut sim = new_sim(cfg);
    let g = cfg.grid as i32;
    let cell = |r: usize, c: usize| r * cfg.grid + c;
    let script: Vec<(usize, EventKind)> = vec![
        (
            0,
            EventKind::Object {
                object: 0,
                class: 0,
                cell: Some(cell(1, 1)),
            },
        ),
        (
            0,
            EventKind::Object {
                object: 1,
                class: 1,
                cell: Some(cell(2, cfg.grid - 1)),
            },
        ),
        (
            0,
            EventKind::Agent {
                agent: 0,
                seat: (g, 1),
                attend: cell(1, 1),
                present: true,
            },
        ),
        (
            0,
            EventKind::Agent {
                agent: 1,
                seat: (-1, 1),
                attend: cell(1, 1),
                present: true,
            },
        ),
        (2, EventKind::Leave { agent: 1 }),
        (
            7,
            EventKind::Move {
                object: 0,
                from: cell(1, 1),
                to: cell(1, 2),
            },
        ),
    ];
    let mut rec = Recorder::new();
    let (mut minds, mut false_belief) = (Vec::new(), Vec::new());
    let mut start = sim.minds.clone();
    let mut event_obj = None;
    let mut next = 0;
    for f in 0..cfg.frames {
        sim.frame = f;
        if f % CLIP_LEN == 0 {
            start = sim.minds.clone();
            event_obj = None;
        }
        while next < script.len() && script[next].0 == f {
            let kind = script[next].1;
            if let EventKind::Move { object, .. } = kind {
                event_obj = Some(object);
            }
            sim.emit(kind);
            next += 1;
        }
        if f == 0 {
            start = sim.minds.clone();
        }
        rec.record(&sim.scene, cfg.mode, rng);
        if f % CLIP_LEN == CLIP_LEN - 1 {
            let (dm, fb) = tbd_labels(&sim, &start, event_obj);
            minds.push(dm);
            false_belief.push(fb);
        }
    }
    let id = format!("ep{index:04}");
    let ep = rec.finish(
        id.clone(),
        cfg.mode,
        cfg.frames,
        cfg.frame_size,
        Labels::Dynamics { minds, false_belief },
    )?;
    Ok((ep, log_of(cfg, id, sim.log)))
}

/// Row-normalised class co-occurrence over the initial layouts of all episodes.
fn ocr_from_logs(logs: &[EventLog]) -> Tensor<f32> {
    let mut counts = vec![0.0f64; NUM_OBJECTS * NUM_OBJECTS];
    for log in logs {
        let present: Vec<usize> = log
            .events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Object {
                    class, cell: Some(_), ..
                } if e.frame == 0 => Some(class),
                _ => None,
            })
            .collect();
        for &a in &present {
            for &b in &present {
                counts[a * NUM_OBJECTS + b] += 1.0;
            }
        }
    }
    for row in counts.chunks_mut(NUM_OBJECTS) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Tensor::new(
        [NUM_OBJECTS, NUM_OBJECTS],
        counts.into_iter().map(|v| v as f32).collect(),
    )
    .expect("27x27")
}

/// Simulates `cfg.episodes` episodes and returns them normalised, with their logs.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<GeneratedEpisode>> {
    cfg.validate()?;
    let mut raw = Vec::with_capacity(cfg.episodes);
    for i in 0..cfg.episodes {
        let mut rng = Rng::with_stream(cfg.seed, i as u64);
        raw.push(match (cfg.script, cfg.mode) {
            (Script::SallyAnne, _) => sally_anne(cfg, i, &mut rng)?,
            (Script::Random, Mode::PerFrameBeliefs) => boss_episode(cfg, i, &mut rng)?,
            (Script::Random, Mode::FiveMinds) => tbd_episode(cfg, i, &mut rng)?,
        });
    }
    let ocr = (cfg.mode == Mode::PerFrameBeliefs).then(|| {
        let logs: Vec<EventLog> = raw.iter().map(|(_, l)| l.clone()).collect();
        ocr_from_logs(&logs)
    });
    raw.into_iter()
        .map(|(mut episode, log)| {
            episode.ocr = ocr.clone();
            let episode = normalize_features(&episode)?;
            episode.validate()?;
            Ok(GeneratedEpisode { episode, log })
        })
        .collect()
}
