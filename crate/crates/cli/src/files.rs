//! Small file helpers shared by the commands.

use std::path::{Path, PathBuf};

use mtomnet::data::{load_corpus, Corpus, Episode, Sample};
use mtomnet::model::Mode;
use mtomnet::train::EpochRecord;
use mtomnet::{Error, Result};

pub const LOG_HEADER: &str = "epoch,train_loss,val_metric";

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Reads a training log written by `train`.
pub fn parse_log(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && l.trim() != LOG_HEADER)
        .map(EpochRecord::parse)
        .collect()
}

/// A split given as a name under the corpus or as a file; `all` means the manifest.
pub struct SplitSel {
    pub label: String,
    pub episodes: Vec<Episode>,
}

pub fn load_split(corpus_root: &Path, split: &str) -> Result<(Corpus, SplitSel)> {
    let corpus = load_corpus(corpus_root)?;
    let given = PathBuf::from(split);
    let (label, episodes) = if split == "all" {
        ("all".to_string(), corpus.load_all()?)
    } else if given.is_file() {
        let label = given
            .file_stem()
            .map_or_else(|| "split".into(), |s| s.to_string_lossy().into_owned());
        (label, corpus.load_split(&given)?)
    } else {
        (split.to_string(), corpus.load_split(&corpus.split_path(split))?)
    };
    Ok((corpus, SplitSel { label, episodes }))
}

/// Every episode must have the model's mode.
pub fn require_mode(mode: Mode, episodes: &[Episode]) -> Result<()> {
    match episodes.iter().find(|e| e.mode != mode) {
        Some(e) => Err(Error::Incompatible(format!(
            "model is {} but episode {} is {}",
            mode.dataset(),
            e.id,
            e.mode.dataset()
        ))),
        None => Ok(()),
    }
}

pub fn samples(episodes: &[Episode]) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for e in episodes {
        out.extend(e.samples()?);
    }
    Ok(out)
}

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| csv_error(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
