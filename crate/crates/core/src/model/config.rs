use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How (and whether) the two MindNets inform each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No exchange between MindNets.
    Base,
    /// Decision-time re-ranking of one MindNet's scores by the other's.
    Db,
    /// Each hidden state is fused with the partner's LSTM cell state.
    Ic,
    /// Each hidden state is fused with a common-ground vector built from both cell states.
    Cg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Sum,
    Mul,
    Concat,
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One object class per person per frame.
    PerFrameBeliefs,
    /// Belief dynamics of five minds per five-frame clip.
    FiveMinds,
}

/// Frames per clip in five-minds mode.
pub const CLIP_LEN: usize = 5;
/// Object classes in per-frame mode.
pub const NUM_OBJECTS: usize = 27;
/// occur, disappear, update, null.
pub const NUM_DYNAMICS: usize = 4;
pub const POSE_JOINTS: usize = 17;
/// Object slots in the box encoder input.
pub const BOX_SLOTS: usize = 27;
pub const BOX_FIELDS: usize = 5;

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($var:path => $s:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($var => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok($var),)+
                    other => Err(Error::config($what, format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

text_enum!(Variant, "variant", Variant::Base => "base", Variant::Db => "db", Variant::Ic => "ic", Variant::Cg => "cg");
text_enum!(
    Aggregation,
    "aggregation",
    Aggregation::Sum => "sum",
    Aggregation::Mul => "mul",
    Aggregation::Concat => "concat",
    Aggregation::Attention => "attention",
);
text_enum!(Mode, "mode", Mode::PerFrameBeliefs => "per_frame_beliefs", Mode::FiveMinds => "five_minds");

impl Mode {
    pub fn num_classes(self) -> usize {
        match self {
            Mode::PerFrameBeliefs => NUM_OBJECTS,
            Mode::FiveMinds => NUM_DYNAMICS,
        }
    }

    /// Gaze vector width: 3-d in per-frame mode, 2-d in five-minds mode.
    pub fn gaze_dim(self) -> usize {
        match self {
            Mode::PerFrameBeliefs => 3,
            Mode::FiveMinds => 2,
        }
    }

    pub fn joint_dim(self) -> usize {
        self.gaze_dim()
    }

    /// Dataset tag used in files.
    pub fn dataset(self) -> &'static str {
        match self {
            Mode::PerFrameBeliefs => "boss",
            Mode::FiveMinds => "tbd",
        }
    }

    pub fn from_dataset(s: &str) -> Result<Self> {
        match s {
            "boss" => Ok(Mode::PerFrameBeliefs),
            "tbd" => Ok(Mode::FiveMinds),
            other => Err(Error::config("mode", format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MToMnetConfig {
    pub variant: Variant,
    /// Ignored for `Base` and `Db`.
    pub aggregation: Aggregation,
    /// Exponent on a MindNet's own distribution during re-ranking.
    pub tau: f64,
    pub mode: Mode,
    pub dropout: f64,
    /// Clone MindNet 1 into MindNet 2 after initialisation and mirror the
    /// common-ground weight, so swapping the persons swaps the minds exactly.
    pub tied: bool,
}

impl Default for MToMnetConfig {
    fn default() -> Self {
        MToMnetConfig {
            variant: Variant::Base,
            aggregation: Aggregation::Concat,
            tau: 2.0,
            mode: Mode::PerFrameBeliefs,
            dropout: 0.1,
            tied: false,
        }
    }
}

impl MToMnetConfig {
    pub fn new(variant: Variant, aggregation: Aggregation, mode: Mode) -> Self {
        MToMnetConfig {
            variant,
            aggregation,
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", format!("{} must be positive", self.tau)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.mode.num_classes()
    }

    pub fn fused(&self) -> bool {
        matches!(self.variant, Variant::Ic | Variant::Cg)
    }

    /// Width of the vectors the heads read.
    pub fn head_input(&self) -> usize {
        let wide = matches!(self.aggregation, Aggregation::Concat | Aggregation::Attention);
        if self.fused() && wide {
            256
        } else {
            128
        }
    }

    /// Short label such as `CG-concat` or `Base`.
    pub fn label(&self) -> String {
        let v = match self.variant {
            Variant::Base => "Base",
            Variant::Db => "DB",
            Variant::Ic => "IC",
            Variant::Cg => "CG",
        };
        if self.fused() {
            format!("{v}-{}", self.aggregation)
        } else {
            v.to_string()
        }
    }

    /// `key=value` lines, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("variant".into(), self.variant.to_string()),
            ("aggregation".into(), self.aggregation.to_string()),
            ("tau".into(), format!("{:?}", self.tau)),
            ("mode".into(), self.mode.to_string()),
            ("dropout".into(), format!("{:?}", self.dropout)),
            ("tied".into(), self.tied.to_string()),
        ]
    }

    pub const KEYS: [&'static str; 6] = ["variant", "aggregation", "tau", "mode", "dropout", "tied"];

    /// Sets one key; `mode` also accepts the dataset names `boss` and `tbd`.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "variant" => self.variant = v.parse()?,
            "aggregation" => self.aggregation = v.parse()?,
            "mode" => self.mode = v.parse().or_else(|_| Mode::from_dataset(v))?,
            "tau" => self.tau = parse_num(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "tied" => self.tied = parse_bool(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses the keys written by [`MToMnetConfig::to_pairs`]; other keys are ignored.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = MToMnetConfig::default();
        for (k, v) in pairs {
            if Self::KEYS.contains(&k) {
                c.set(k, v)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

pub(crate) fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a number")))
}

pub(crate) fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("`{v}` is not a boolean"))),
    }
}

/// Published parameter totals for the full-size models, where listed.
pub fn reference_param_count(config: &MToMnetConfig) -> Option<usize> {
    use Aggregation::*;
    use Variant::*;
    let boss = config.mode == Mode::PerFrameBeliefs;
    let pick = |b: usize, t: usize| Some(if boss { b } else { t });
    match (config.variant, config.aggregation) {
        (Base | Db, _) => pick(452_374, 465_716),
        (Cg, Attention) => pick(493_654, 506_996),
        (Cg, _) => pick(460_886, 474_228),
        (Ic, Attention) => pick(485_398, 498_740),
        (Ic, _) => pick(452_630, 465_972),
    }
}
