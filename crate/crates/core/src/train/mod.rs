//! Loss, optimiser, the epoch loop and evaluation.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use std::fmt::Write as _;
use std::ops::ControlFlow;

use crate::analyze::macro_f1;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{config_hash, parse_num, Checkpoint, CheckpointMeta, ForwardOut, MToMnet, Mode};
use crate::params::{Ctx, ParamStore};
use crate::tensor::{Real, Rng, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` picks 4 in boss mode and 64 in tbd mode.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: None,
            adam: AdamConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 7] = ["epochs", "batch_size", "lr", "beta1", "beta2", "eps", "seed"];

    pub fn batch_for(&self, mode: Mode) -> usize {
        self.batch_size.unwrap_or(match mode {
            Mode::PerFrameBeliefs => 4,
            Mode::FiveMinds => 64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be positive"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::config("lr", format!("{} must be positive", a.lr)));
        }
        for (k, b) in [("beta1", a.beta1), ("beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(k, format!("{b} outside [0, 1)")));
            }
        }
        if !(a.eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            (
                "batch_size".into(),
                self.batch_size.map_or_else(|| "auto".into(), |b| b.to_string()),
            ),
            ("lr".into(), format!("{:?}", self.adam.lr)),
            ("beta1".into(), format!("{:?}", self.adam.beta1)),
            ("beta2".into(), format!("{:?}", self.adam.beta2)),
            ("eps".into(), format!("{:?}", self.adam.eps)),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => {
                self.batch_size = if v.trim() == "auto" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "lr" => self.adam.lr = parse_num(key, v)?,
            "beta1" => self.adam.beta1 = parse_num(key, v)?,
            "beta2" => self.adam.beta2 = parse_num(key, v)?,
            "eps" => self.adam.eps = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }
}

/// Mean over rows of `-log_softmax(logits)[target]` for `[n, K]` logits.
pub fn cross_entropy<F: Real>(tape: &mut Tape<F>, logits: Var, targets: &[usize]) -> Result<Var> {
    let ls = tape.log_softmax(logits, 1)?;
    let picked = tape.pick(ls, targets)?;
    let m = tape.mean(picked)?;
    tape.scale(m, -F::one())
}

/// Unweighted sum over heads; per-frame heads average over their frames.
pub fn sample_loss<F: Real>(tape: &mut Tape<F>, out: &ForwardOut, targets: &[Vec<usize>]) -> Result<Var> {
    if targets.len() != out.logits.len() {
        return Err(Error::Incompatible(format!(
            "{} target lists for {} heads",
            targets.len(),
            out.logits.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&l, t) in out.logits.iter().zip(targets) {
        let ce = cross_entropy(tape, l, t)?;
        total = Some(match total {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    total.ok_or_else(|| Error::Empty("model has no heads".into()))
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

impl EpochRecord {
    /// `epoch,train_loss,val_metric` with shortest round-trip floats.
    pub fn log_line(&self) -> String {
        format!("{},{:?},{:?}", self.epoch, self.train_loss, self.val_metric)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::validation("log", format!("malformed line `{line}`"));
        let mut it = line.trim().split(',');
        let mut next = || it.next().ok_or_else(bad);
        let epoch = next()?.parse().map_err(|_| bad())?;
        let train_loss = next()?.parse().map_err(|_| bad())?;
        let val_metric = next()?.parse().map_err(|_| bad())?;
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_metric,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Parameters of the epoch with the highest validation metric (earliest on ties).
    pub best: Checkpoint,
}

/// Runs `f` over `0..n` and returns results in index order, on at most `threads` workers.
fn ordered_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if threads > 1 && n > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = threads;
    (0..n).map(f).collect()
}

/// Worker count: `MTOM_THREADS` if set, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var("MTOM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn rng_stream(epoch: usize, position: usize) -> u64 {
    // top bit keeps dropout streams apart from the shuffle streams
    (1 << 63) | ((epoch as u64) << 32) | position as u64
}

/// Training-mode loss and per-parameter gradients for one sample.
fn sample_gradients(
    net: &MToMnet,
    params: &ParamStore<f32>,
    sample: &Sample,
    rng: Rng,
) -> Result<(f64, Vec<Option<Tensor<f32>>>)> {
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, params, true, rng);
    let out = net.forward(&mut ctx, &sample.window)?;
    let loss = sample_loss(ctx.tape, &out, &sample.targets)?;
    ctx.tape.backward(loss)?;
    let value = ctx.tape.value(loss).data()[0].as_f64();
    Ok((value, ctx.param_grads()))
}

/// Seeded-shuffle minibatch training with Adam; keeps the best validation checkpoint.
///
/// Each sample's dropout stream depends only on `(seed, epoch, position)` and
/// gradients are summed in batch order, so results do not depend on the
/// worker count. `on_epoch` sees every record as soon as it exists and may
/// end training early by returning `Break`.
pub fn train(
    net: &MToMnet,
    init: ParamStore<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    threads: usize,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<ControlFlow<()>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training split has no samples".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation split has no samples".into()));
    }
    check_compatible(net, train_set)?;
    check_compatible(net, val_set)?;
    let batch = cfg.batch_for(net.config.mode);
    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(ParamStore<f32>, EpochRecord)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::with_stream(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let params_ref = &params;
            let results = ordered_map(chunk.len(), threads, |k| {
                let rng = Rng::with_stream(cfg.seed, rng_stream(epoch, b * batch + k));
                sample_gradients(net, params_ref, &train_set[chunk[k]], rng)
            });
            let mut grads: Vec<Tensor<f32>> = params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect();
            for (k, r) in results.into_iter().enumerate() {
                let (loss, g) = r.inspect_err(|e| {
                    log::error!("epoch {epoch}, sample {}: {e}", train_set[chunk[k]].episode);
                })?;
                if !loss.is_finite() {
                    log::error!("epoch {epoch}: non-finite loss on {}", train_set[chunk[k]].episode);
                    return Err(Error::NonFinite { op: "loss" });
                }
                loss_sum += loss;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    if let Some(gi) = gi {
                        acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, v)| *a += v);
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f32;
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            adam_step(&mut params, &grads, &mut state, &cfg.adam)?;
        }
        let report = evaluate(net, &params, val_set, threads)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_metric: report.metric,
        };
        log::info!("{}", rec.log_line());
        let flow = on_epoch(&rec)?;
        history.push(rec);
        if best.as_ref().is_none_or(|(_, r)| rec.val_metric > r.val_metric) {
            best = Some((params.clone(), rec));
        }
        if flow.is_break() {
            break;
        }
    }
    let (best_params, rec) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best: Checkpoint {
            net: net.clone(),
            params: best_params,
            meta: CheckpointMeta {
                seed: cfg.seed,
                epoch: rec.epoch,
                metric: rec.val_metric,
                config_hash: config_hash(&net.config),
            },
        },
    })
}

fn check_compatible(net: &MToMnet, samples: &[Sample]) -> Result<()> {
    let heads = net.head_names().len();
    let boss = net.config.mode == Mode::PerFrameBeliefs;
    for s in samples {
        if s.targets.len() != heads || s.window.ocr.is_some() != boss {
            return Err(Error::Incompatible(format!(
                "episode {} does not match a {} model",
                s.episode,
                net.config.mode.dataset()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadMetric {
    pub name: String,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mode: Mode,
    pub samples: usize,
    /// Over every predicted row of every head.
    pub accuracy: f64,
    /// Average of the per-head macro-F1 scores.
    pub macro_f1: f64,
    pub heads: Vec<HeadMetric>,
    /// Accuracy in boss mode, average macro-F1 in tbd mode.
    pub metric: f64,
}

impl MetricReport {
    /// `head,accuracy,macro_f1` rows plus an `all` row; floats round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("head,accuracy,macro_f1\n");
        for h in &self.heads {
            let _ = writeln!(s, "{},{:?},{:?}", h.name, h.accuracy, h.macro_f1);
        }
        let _ = writeln!(s, "all,{:?},{:?}", self.accuracy, self.macro_f1);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("mode {} over {} samples\n", self.mode.dataset(), self.samples);
        let _ = writeln!(s, "{:<6}{:>10}{:>10}", "head", "accuracy", "macro-F1");
        for h in &self.heads {
            let _ = writeln!(s, "{:<6}{:>10.4}{:>10.4}", h.name, h.accuracy, h.macro_f1);
        }
        let _ = writeln!(s, "{:<6}{:>10.4}{:>10.4}", "all", self.accuracy, self.macro_f1);
        let _ = writeln!(s, "selection metric {:?}", self.metric);
        s
    }
}

/// Eval-mode decisions per sample, head and row.
pub fn predict_samples(
    net: &MToMnet,
    params: &ParamStore<f32>,
    samples: &[Sample],
    threads: usize,
) -> Result<Vec<Vec<Vec<usize>>>> {
    check_compatible(net, samples)?;
    ordered_map(samples.len(), threads, |i| {
        net.predict(params, &samples[i].window)
            .map(|o| o.heads.into_iter().map(|h| h.labels).collect())
    })
    .into_iter()
    .collect()
}

/// Boss: accuracy over all frames of both persons. tbd: mean per-mind macro-F1.
pub fn evaluate(net: &MToMnet, params: &ParamStore<f32>, samples: &[Sample], threads: usize) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation split has no samples".into()));
    }
    let preds = predict_samples(net, params, samples, threads)?;
    let k = net.config.num_classes();
    let names = net.head_names();
    let mut heads = Vec::with_capacity(names.len());
    let (mut correct, mut total) = (0usize, 0usize);
    for (h, name) in names.iter().enumerate() {
        let p: Vec<usize> = preds.iter().flat_map(|s| s[h].iter().copied()).collect();
        let t: Vec<usize> = samples.iter().flat_map(|s| s.targets[h].iter().copied()).collect();
        if p.len() != t.len() {
            return Err(Error::Incompatible(format!(
                "head {name}: {} predictions for {} targets",
                p.len(),
                t.len()
            )));
        }
        let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
        correct += hits;
        total += t.len();
        heads.push(HeadMetric {
            name: name.to_string(),
            accuracy: hits as f64 / t.len() as f64,
            macro_f1: macro_f1(&p, &t, k)?.macro_f1,
        });
    }
    let accuracy = correct as f64 / total as f64;
    let macro_avg = heads.iter().map(|h| h.macro_f1).sum::<f64>() / heads.len() as f64;
    let metric = match net.config.mode {
        Mode::PerFrameBeliefs => accuracy,
        Mode::FiveMinds => macro_avg,
    };
    Ok(MetricReport {
        mode: net.config.mode,
        samples: samples.len(),
        accuracy,
        macro_f1: macro_avg,
        heads,
        metric,
    })
}

#[cfg(test)]
mod tests;
