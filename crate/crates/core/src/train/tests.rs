use super::*;
use crate::data::{generate_synthetic, SyntheticConfig};
use crate::model::{Aggregation, MToMnetConfig, Variant};
use std::ops::ControlFlow;

fn samples(mode: Mode, episodes: usize, seed: u64) -> Vec<Sample> {
    let cfg = SyntheticConfig {
        mode,
        episodes,
        frames: 5,
        seed,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg)
        .unwrap()
        .iter()
        .flat_map(|g| g.episode.samples().unwrap())
        .collect()
}

fn ce_value(logits: Vec<f64>, k: usize, targets: &[usize]) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let rows = logits.len() / k;
    let x = tape.leaf(Tensor::new([rows, k], logits).unwrap());
    let l = cross_entropy(&mut tape, x, targets).unwrap();
    tape.backward(l).unwrap();
    (tape.value(l).data()[0], tape.grad(x).unwrap().data().to_vec())
}

#[test]
fn uniform_logits_give_log_k() {
    let (v, _) = ce_value(vec![0.0; 8], 4, &[1, 3]);
    assert!((v - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_give_near_zero() {
    let (v, _) = ce_value(vec![50.0, 0.0, 0.0], 3, &[0]);
    assert!(v >= 0.0 && v < 1e-12);
}

#[test]
fn gradient_is_softmax_minus_onehot_over_rows() {
    let logits = vec![0.2, -1.0, 0.7, 1.5, 0.1, -0.3];
    let targets = [2, 0];
    let (_, g) = ce_value(logits.clone(), 3, &targets);
    for r in 0..2 {
        let row = &logits[r * 3..r * 3 + 3];
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        for c in 0..3 {
            let want = (row[c].exp() / z - if c == targets[r] { 1.0 } else { 0.0 }) / 2.0;
            assert!((g[r * 3 + c] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn out_of_range_target_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros([1, 4]));
    assert!(cross_entropy(&mut tape, x, &[4]).is_err());
}

#[test]
fn config_keys_round_trip() {
    let mut c = TrainConfig::default();
    assert_eq!(c.batch_for(Mode::PerFrameBeliefs), 4);
    assert_eq!(c.batch_for(Mode::FiveMinds), 64);
    c.set("batch_size", "7").unwrap();
    c.set("lr", "0.001").unwrap();
    let mut d = TrainConfig::default();
    for (k, v) in c.to_pairs() {
        d.set(&k, &v).unwrap();
    }
    assert_eq!(c, d);
    assert!(matches!(c.set("momentum", "1"), Err(Error::Config { .. })));
    c.set("beta2", "1.0").unwrap();
    assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "beta2"));
}

#[test]
fn epoch_record_line_round_trips() {
    let r = EpochRecord {
        epoch: 3,
        train_loss: 0.1 + 0.2,
        val_metric: 2.0 / 3.0,
    };
    assert_eq!(EpochRecord::parse(&r.log_line()).unwrap(), r);
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: Some(2),
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        seed: 3,
    }
}

#[test]
fn training_is_deterministic_and_keeps_the_best_epoch() {
    let data = samples(Mode::PerFrameBeliefs, 4, 2);
    let (tr, va) = data.split_at(3);
    let net_cfg = MToMnetConfig::new(Variant::Base, Aggregation::Concat, Mode::PerFrameBeliefs);
    let run = |threads| {
        let (net, p) = MToMnet::build::<f32>(&net_cfg, 5).unwrap();
        let mut seen = Vec::new();
        let out = train(&net, p, tr, va, &small_cfg(3), threads, |r| {
            seen.push(*r);
            Ok(ControlFlow::Continue(()))
        })
        .unwrap();
        assert_eq!(seen, out.history);
        out
    };
    let a = run(1);
    let b = run(2);
    assert_eq!(a.history, b.history);
    assert_eq!(a.best.params, b.best.params);
    let max = a.history.iter().map(|r| r.val_metric).fold(f64::MIN, f64::max);
    assert_eq!(a.best.meta.metric, max);
    let first = a.history.iter().find(|r| r.val_metric == max).unwrap();
    assert_eq!(a.best.meta.epoch, first.epoch);
    assert!(a.history.iter().all(|r| r.train_loss.is_finite()));
}

#[test]
fn evaluation_leaves_parameters_untouched() {
    let data = samples(Mode::FiveMinds, 2, 4);
    let net_cfg = MToMnetConfig::new(Variant::Cg, Aggregation::Concat, Mode::FiveMinds);
    let (net, p) = MToMnet::build::<f32>(&net_cfg, 1).unwrap();
    let before = p.clone();
    let r1 = evaluate(&net, &p, &data, 1).unwrap();
    let r2 = evaluate(&net, &p, &data, 1).unwrap();
    assert_eq!(p, before);
    assert_eq!(r1, r2);
    assert_eq!(r1.heads.len(), 5);
    assert_eq!(r1.metric, r1.macro_f1);
    assert_eq!(r1.to_csv().lines().count(), 7);
}

#[test]
fn non_finite_loss_aborts() {
    let data = samples(Mode::PerFrameBeliefs, 2, 2);
    let net_cfg = MToMnetConfig::new(Variant::Base, Aggregation::Sum, Mode::PerFrameBeliefs);
    let (net, mut p) = MToMnet::build::<f32>(&net_cfg, 5).unwrap();
    let ids: Vec<_> = p.ids().collect();
    for id in ids {
        p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = f32::NAN);
    }
    let r = train(&net, p, &data[..1], &data[1..], &small_cfg(1), 1, |_| {
        Ok(ControlFlow::Continue(()))
    });
    assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
}

#[test]
fn mode_mismatch_is_incompatible() {
    let data = samples(Mode::FiveMinds, 1, 2);
    let net_cfg = MToMnetConfig::new(Variant::Base, Aggregation::Sum, Mode::PerFrameBeliefs);
    let (net, p) = MToMnet::build::<f32>(&net_cfg, 5).unwrap();
    assert!(matches!(evaluate(&net, &p, &data, 1), Err(Error::Incompatible(_))));
}

#[test]
fn break_stops_after_the_current_epoch() {
    let data = samples(Mode::PerFrameBeliefs, 2, 2);
    let net_cfg = MToMnetConfig::new(Variant::Base, Aggregation::Sum, Mode::PerFrameBeliefs);
    let (net, p) = MToMnet::build::<f32>(&net_cfg, 5).unwrap();
    let out = train(&net, p, &data[..1], &data[1..], &small_cfg(5), 1, |r| {
        Ok(if r.epoch == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    })
    .unwrap();
    assert_eq!(out.history.len(), 2);
}

#[test]
fn constant_predictor_accuracy_is_class_frequency() {
    let data = samples(Mode::PerFrameBeliefs, 3, 6);
    let net_cfg = MToMnetConfig::new(Variant::Base, Aggregation::Sum, Mode::PerFrameBeliefs);
    let (net, mut p) = MToMnet::build::<f32>(&net_cfg, 5).unwrap();
    let class = data[0].targets[0][0];
    // zero head weights and a dominant bias make every decision `class`
    for m in ["mind1", "mind2"] {
        let w = p.id(&format!("{m}.head_self.w")).unwrap();
        p.get_mut(w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let b = p.id(&format!("{m}.head_self.b")).unwrap();
        p.get_mut(b)
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = if i == class { 10.0 } else { 0.0 });
    }
    let r = evaluate(&net, &p, &data, 1).unwrap();
    let all: Vec<usize> = data.iter().flat_map(|s| s.targets.iter().flatten().copied()).collect();
    let freq = all.iter().filter(|&&c| c == class).count() as f64 / all.len() as f64;
    assert_eq!(r.accuracy, freq);
}
