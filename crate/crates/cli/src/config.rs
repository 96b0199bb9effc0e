//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::path::Path;

use mtomnet::data::SyntheticConfig;
use mtomnet::model::MToMnetConfig;
use mtomnet::train::TrainConfig;
use mtomnet::{Error, Result};

/// Model, training and generator settings resolved from a file plus overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: MToMnetConfig,
    pub train: TrainConfig,
    pub synth: SyntheticConfig,
    /// Keys given explicitly, in the file or by a flag.
    pub explicit: BTreeSet<String>,
}

impl RunConfig {
    pub fn is_known(key: &str) -> bool {
        MToMnetConfig::KEYS.contains(&key) || TrainConfig::KEYS.contains(&key) || SyntheticConfig::KEYS.contains(&key)
    }

    /// `seed` feeds both the generator and training; `mode` both the model and the generator.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !Self::is_known(key) {
            return Err(Error::config(key, "unknown key"));
        }
        if MToMnetConfig::KEYS.contains(&key) {
            self.model.set(key, value)?;
        }
        if TrainConfig::KEYS.contains(&key) {
            self.train.set(key, value)?;
        }
        if SyntheticConfig::KEYS.contains(&key) {
            self.synth.set(key, value)?;
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Parses config text; `#` starts a comment and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::config(k, "given twice"));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.as_str(), "override must look like key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()
    }

    /// The fully resolved configuration; parses back to an equal value up to `explicit`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut written = BTreeSet::new();
        for (title, pairs) in [
            ("model", self.model.to_pairs()),
            ("training", self.train.to_pairs()),
            ("synthetic data", self.synth.to_pairs()),
        ] {
            out.push_str(&format!("# {title}\n"));
            for (k, v) in pairs {
                if written.insert(k.clone()) {
                    out.push_str(&format!("{k} = {v}\n"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_shared_keys() {
        let c = RunConfig::parse("# run\n\nseed = 7  # both\nmode = tbd\nvariant = CG\nepisodes=4\n").unwrap();
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.model.mode, c.synth.mode);
        assert_eq!(c.synth.episodes, 4);
        assert!(c.explicit.contains("mode"));
    }

    #[test]
    fn unknown_and_repeated_keys_are_errors() {
        for text in ["colour = red\n", "seed = 1\nseed = 2\n", "seed 1\n"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config { .. })), "{text}");
        }
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::parse("variant = CG\naggregation = attention\nlr = 0.001\nmove_rate = 0.25\n").unwrap();
        c.apply_overrides(&["epochs=5".into(), "batch_size=8".into()]).unwrap();
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!((back.model, back.train, back.synth), (c.model, c.train, c.synth));
    }
}
