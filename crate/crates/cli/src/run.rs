//! generate, train and eval.

use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use mtomnet::data::{generate_synthetic, write_corpus};
use mtomnet::model::{load_checkpoint, save_checkpoint, MToMnet};
use mtomnet::train::{self, evaluate, predict_samples, thread_count};
use mtomnet::Error;

use crate::config::RunConfig;
use crate::files::{self, LOG_HEADER};
use crate::{ConfigArgs, EvalArgs, Failure, GenerateArgs, Outcome, TrainArgs};

/// Present in an output directory while `train` writes to it.
pub const MARKER: &str = ".running";

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train.log";
pub const CHECKPOINT_FILE: &str = "best.ckpt";

pub fn resolve(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    if let Some(s) = args.seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

pub fn generate(args: &GenerateArgs) -> Outcome {
    let cfg = resolve(&args.config)?;
    cfg.validate()?;
    let episodes = generate_synthetic(&cfg.synth)?;
    let corpus = write_corpus(&args.out, &episodes, &cfg.synth.splits(), &cfg.to_text())?;
    println!(
        "wrote {} {} episodes to {}",
        corpus.episodes.len(),
        cfg.synth.mode.dataset(),
        args.out.display()
    );
    Ok(())
}

/// Holds the run marker; removes it when dropped.
struct RunMarker(PathBuf);

impl RunMarker {
    fn acquire(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(MARKER);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunMarker(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Failure::Busy(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e).into()),
        }
    }
}

impl Drop for RunMarker {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub fn train(args: &TrainArgs) -> Outcome {
    let mut cfg = resolve(&args.config)?;
    if let Some(e) = args.epochs {
        cfg.set("epochs", &e.to_string())?;
    }
    let (_, train_split) = files::load_split(&args.corpus, "train")?;
    let (_, val_split) = files::load_split(&args.corpus, "val")?;
    let mode = train_split.episodes[0].mode;
    if cfg.explicit.contains("mode") && cfg.model.mode != mode {
        return Err(Error::Incompatible(format!(
            "config asks for {} but the corpus is {}",
            cfg.model.mode.dataset(),
            mode.dataset()
        ))
        .into());
    }
    cfg.model.mode = mode;
    cfg.synth.mode = mode;
    cfg.validate()?;
    let train_set = files::samples(&train_split.episodes)?;
    let val_set = files::samples(&val_split.episodes)?;

    files::create_dir(&args.out)?;
    let _marker = RunMarker::acquire(&args.out)?;
    files::write(&args.out.join(CONFIG_FILE), cfg.to_text())?;
    let log_path = args.out.join(LOG_FILE);
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;

    let (net, init) = MToMnet::build::<f32>(&cfg.model, cfg.train.seed)?;
    let outcome = train::train(&net, init, &train_set, &val_set, &cfg.train, thread_count(), |rec| {
        writeln!(log, "{}", rec.log_line())
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(ControlFlow::Continue(()))
    })?;
    let best = &outcome.best;
    save_checkpoint(&args.out.join(CHECKPOINT_FILE), &best.net, &best.params, &best.meta)?;
    println!(
        "{} {}: best val metric {:.4} at epoch {} of {}",
        net.config.label(),
        mode.dataset(),
        best.meta.metric,
        best.meta.epoch,
        outcome.history.len()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Outcome {
    let ck = load_checkpoint(&args.checkpoint)?;
    let (_, split) = files::load_split(&args.corpus, &args.split)?;
    files::require_mode(ck.net.config.mode, &split.episodes)?;
    let samples = files::samples(&split.episodes)?;
    let threads = thread_count();
    let report = evaluate(&ck.net, &ck.params, &samples, threads)?;
    let preds = predict_samples(&ck.net, &ck.params, &samples, threads)?;
    print!("{}", report.to_text());

    let out = match &args.out {
        Some(o) => o.clone(),
        None => args
            .checkpoint
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    files::create_dir(&out)?;
    files::write(&out.join(format!("report_{}.csv", split.label)), report.to_csv())?;
    let names = ck.net.head_names();
    let mut rows = Vec::new();
    for (s, p) in samples.iter().zip(&preds) {
        for (h, name) in names.iter().enumerate() {
            for (row, (pred, truth)) in p[h].iter().zip(&s.targets[h]).enumerate() {
                rows.push(vec![
                    s.episode.clone(),
                    s.clip.to_string(),
                    name.to_string(),
                    row.to_string(),
                    pred.to_string(),
                    truth.to_string(),
                ]);
            }
        }
    }
    files::write_csv(
        &out.join(format!("predictions_{}.csv", split.label)),
        &PREDICTION_HEADER,
        rows,
    )?;
    Ok(())
}

pub const PREDICTION_HEADER: [&str; 6] = ["episode", "clip", "head", "row", "prediction", "truth"];
