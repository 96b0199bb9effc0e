use super::*;

fn cfg(variant: Variant, aggregation: Aggregation, mode: Mode) -> MToMnetConfig {
    MToMnetConfig::new(variant, aggregation, mode)
}

fn total(c: &MToMnetConfig) -> usize {
    let (_, s) = MToMnet::build::<f32>(c, 1).unwrap();
    count_parameters(&s).total
}

#[test]
fn parameter_totals_are_stable() {
    use Aggregation::*;
    use Mode::*;
    use Variant::*;
    assert_eq!(total(&cfg(Base, Concat, PerFrameBeliefs)), 441_750);
    assert_eq!(total(&cfg(Ic, Concat, PerFrameBeliefs)), 449_174);
    assert_eq!(total(&cfg(Cg, Concat, PerFrameBeliefs)), 482_070);
    assert_eq!(total(&cfg(Base, Concat, FiveMinds)), 443_636);
    assert_eq!(total(&cfg(Cg, Concat, FiveMinds)), 479_604);
}

#[test]
fn db_and_base_have_equal_counts() {
    for mode in [Mode::PerFrameBeliefs, Mode::FiveMinds] {
        assert_eq!(
            total(&cfg(Variant::Base, Aggregation::Sum, mode)),
            total(&cfg(Variant::Db, Aggregation::Sum, mode))
        );
    }
}

#[test]
fn concat_and_sum_differ_only_in_heads() {
    for v in [Variant::Ic, Variant::Cg] {
        let (_, a) = MToMnet::build::<f32>(&cfg(v, Aggregation::Sum, Mode::FiveMinds), 1).unwrap();
        let (_, b) = MToMnet::build::<f32>(&cfg(v, Aggregation::Concat, Mode::FiveMinds), 1).unwrap();
        let (ba, bb) = (count_parameters(&a), count_parameters(&b));
        for ((na, ca), (nb, cb)) in ba.categories.iter().zip(&bb.categories) {
            assert_eq!(na, nb);
            if *na == "heads" {
                assert_eq!(cb - ca, 5 * 128 * 4);
            } else {
                assert_eq!(ca, cb, "{na}");
            }
        }
    }
}

#[test]
fn breakdown_sums_to_total() {
    let (_, s) = MToMnet::build::<f32>(&cfg(Variant::Cg, Aggregation::Attention, Mode::PerFrameBeliefs), 1).unwrap();
    let b = count_parameters(&s);
    assert_eq!(b.components.iter().map(|c| c.1).sum::<usize>(), b.total);
    assert_eq!(b.categories.iter().map(|c| c.1).sum::<usize>(), b.total);
}

fn window(mode: Mode, t: usize, seed: u64) -> Window<f64> {
    random_window(mode, t, 20, &mut Rng::new(seed))
}

fn eval<'a>(net: &MToMnet, s: &'a ParamStore<f64>, w: &Window<f64>) -> (Tape<f64>, ForwardOut) {
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, s, false, Rng::new(0));
    let out = net.forward(&mut ctx, w).unwrap();
    drop(ctx);
    (tape, out)
}

#[test]
fn output_shapes_and_distributions() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Base, Aggregation::Sum, Mode::PerFrameBeliefs), 2).unwrap();
    let w = window(Mode::PerFrameBeliefs, 3, 1);
    let (tape, out) = eval(&net, &s, &w);
    assert_eq!(out.logits.len(), 2);
    for &l in &out.logits {
        assert_eq!(tape.shape(l), &[3, 27]);
    }
    assert_eq!(tape.shape(out.states[0].h), &[3, 128]);
    let b = net.decide(&tape, &out).unwrap();
    for h in &b.heads {
        for p in &h.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Cg, Aggregation::Concat, Mode::FiveMinds), 2).unwrap();
    let w = window(Mode::FiveMinds, 5, 1);
    let b = net.predict(&s, &w).unwrap();
    assert_eq!(b.heads.len(), 5);
    for h in &b.heads {
        assert_eq!(h.probs.len(), 1);
        assert_eq!(h.probs[0].len(), 4);
    }
}

#[test]
fn five_minds_requires_five_frames() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Base, Aggregation::Sum, Mode::FiveMinds), 2).unwrap();
    let w = window(Mode::FiveMinds, 4, 1);
    assert!(matches!(net.predict(&s, &w), Err(Error::Validation { .. })));
}

#[test]
fn single_frame_window() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Ic, Aggregation::Mul, Mode::PerFrameBeliefs), 2).unwrap();
    let w = window(Mode::PerFrameBeliefs, 1, 4);
    let (tape, out) = eval(&net, &s, &w);
    assert_eq!(tape.shape(out.states[0].h), &[1, 128]);
}

#[test]
fn contextual_and_individual_widths() {
    for (mode, c, i) in [(Mode::PerFrameBeliefs, 192, 128), (Mode::FiveMinds, 128, 192)] {
        let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Base, Aggregation::Sum, mode), 2).unwrap();
        let w = window(mode, 5, 3);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
        let xc = net.encode_contextual(&mut ctx, &w).unwrap();
        let xi = net.encode_individual(&mut ctx, &w, 0).unwrap();
        assert_eq!(ctx.tape.shape(xc), &[5, c]);
        assert_eq!(ctx.tape.shape(xi), &[5, i]);
        assert!(net.encode_individual(&mut ctx, &w, 2).is_err());
    }
}

#[test]
fn mindnets_encode_identical_cues_differently() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Base, Aggregation::Sum, Mode::FiveMinds), 2).unwrap();
    let mut w = window(Mode::FiveMinds, 5, 3);
    w.persons[1] = w.persons[0].clone();
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
    let a = net.encode_individual(&mut ctx, &w, 0).unwrap();
    let b = net.encode_individual(&mut ctx, &w, 1).unwrap();
    assert_ne!(ctx.tape.value(a), ctx.tape.value(b));
}

#[test]
fn base_and_db_share_distributions() {
    for mode in [Mode::PerFrameBeliefs, Mode::FiveMinds] {
        let (net_b, s) = MToMnet::build::<f64>(&cfg(Variant::Base, Aggregation::Sum, mode), 5).unwrap();
        let (net_d, s_d) = MToMnet::build::<f64>(&cfg(Variant::Db, Aggregation::Sum, mode), 5).unwrap();
        assert_eq!(s, s_d);
        let w = window(mode, 5, 6);
        let (ob, od) = (net_b.predict(&s, &w).unwrap(), net_d.predict(&s, &w).unwrap());
        for (hb, hd) in ob.heads.iter().zip(&od.heads) {
            assert_eq!(hb.probs, hd.probs);
        }
    }
}

#[test]
fn eval_forward_is_deterministic_and_dropout_is_not() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Cg, Aggregation::Sum, Mode::PerFrameBeliefs), 5).unwrap();
    let w = window(Mode::PerFrameBeliefs, 2, 6);
    assert_eq!(net.predict(&s, &w).unwrap(), net.predict(&s, &w).unwrap());
    let run = |seed| {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &s, true, Rng::new(seed));
        let out = net.forward(&mut ctx, &w).unwrap();
        drop(ctx);
        tape.value(out.logits[0]).clone()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn encoders_identical_across_variants() {
    let (_, base) = MToMnet::build::<f32>(&cfg(Variant::Base, Aggregation::Sum, Mode::FiveMinds), 9).unwrap();
    let (_, cg) = MToMnet::build::<f32>(&cfg(Variant::Cg, Aggregation::Attention, Mode::FiveMinds), 9).unwrap();
    for (_, name, t) in base.iter() {
        if name.contains("head") {
            continue;
        }
        assert_eq!(cg.get(cg.id(name).unwrap()), t, "{name}");
    }
}

#[test]
fn gradient_reaches_every_extractor() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Cg, Aggregation::Concat, Mode::PerFrameBeliefs), 5).unwrap();
    let w = window(Mode::PerFrameBeliefs, 2, 6);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
    let out = net.forward(&mut ctx, &w).unwrap();
    let a = ctx.tape.sum(out.logits[0]).unwrap();
    let b = ctx.tape.sum(out.logits[1]).unwrap();
    let l = ctx.tape.add(a, b).unwrap();
    ctx.tape.backward(l).unwrap();
    let grads = ctx.param_grads();
    for (id, name, _) in s.iter() {
        let g = grads[id.index()]
            .as_ref()
            .unwrap_or_else(|| panic!("no gradient for {name}"));
        assert!(g.data().iter().any(|&v| v != 0.0), "zero gradient for {name}");
    }
}

#[test]
fn sum_with_zero_and_mul_with_ones_are_identities() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Ic, Aggregation::Sum, Mode::PerFrameBeliefs), 5).unwrap();
    let (net_m, _) = MToMnet::build::<f64>(&cfg(Variant::Ic, Aggregation::Mul, Mode::PerFrameBeliefs), 5).unwrap();
    let mut rng = Rng::new(3);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
    let h = ctx.input(Tensor::uniform([4, 128], 1.0, &mut rng));
    let zero = ctx.input(Tensor::zeros([128]));
    let ones = ctx.input(Tensor::ones([128]));
    let fc = net.minds[0].fc_h.as_ref().unwrap().forward(&mut ctx, h).unwrap();
    let zs = net.aggregate(&mut ctx, 0, h, zero).unwrap();
    let zm = net_m.aggregate(&mut ctx, 0, h, ones).unwrap();
    assert_eq!(ctx.tape.value(zs), ctx.tape.value(fc));
    assert_eq!(ctx.tape.value(zm), ctx.tape.value(fc));
}

#[test]
fn fused_widths() {
    for (agg, width) in [
        (Aggregation::Concat, 256),
        (Aggregation::Attention, 256),
        (Aggregation::Sum, 128),
    ] {
        let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Cg, agg, Mode::PerFrameBeliefs), 5).unwrap();
        let w = window(Mode::PerFrameBeliefs, 3, 6);
        let (tape, out) = eval(&net, &s, &w);
        assert_eq!(tape.shape(out.z[0]), &[3, width]);
        assert_eq!(tape.shape(out.cg.unwrap()), &[128]);
    }
}

#[test]
fn tied_swap_exchanges_minds() {
    for variant in [Variant::Base, Variant::Ic, Variant::Cg] {
        for agg in [Aggregation::Sum, Aggregation::Mul] {
            let mut c = cfg(variant, agg, Mode::FiveMinds);
            c.tied = true;
            let (net, s) = MToMnet::build::<f64>(&c, 11).unwrap();
            let w = window(Mode::FiveMinds, 5, 12);
            let (ta, oa) = eval(&net, &s, &w);
            let (tb, ob) = eval(&net, &s, &w.swapped());
            let v = |t: &Tape<f64>, o: &ForwardOut, i: usize| t.value(o.logits[i]).clone();
            assert_eq!(v(&ta, &oa, 0), v(&tb, &ob, 1));
            assert_eq!(v(&ta, &oa, 1), v(&tb, &ob, 0));
            assert_eq!(v(&ta, &oa, 2), v(&tb, &ob, 3));
            assert_eq!(v(&ta, &oa, 3), v(&tb, &ob, 2));
            assert_eq!(v(&ta, &oa, 4), v(&tb, &ob, 4));
            if let (Some(a), Some(b)) = (oa.cg, ob.cg) {
                assert_eq!(ta.value(a), tb.value(b));
            }
        }
    }
}

#[test]
fn untied_cg_is_order_sensitive() {
    let (net, s) = MToMnet::build::<f64>(&cfg(Variant::Cg, Aggregation::Sum, Mode::FiveMinds), 11).unwrap();
    let mut rng = Rng::new(1);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
    let c1 = ctx.input(Tensor::uniform([128], 1.0, &mut rng));
    let c2 = ctx.input(Tensor::uniform([128], 1.0, &mut rng));
    let a = net.common_ground(&mut ctx, c1, c2).unwrap();
    let b = net.common_ground(&mut ctx, c2, c1).unwrap();
    assert_ne!(ctx.tape.value(a), ctx.tape.value(b));
    // the split evaluation equals FC applied to the concatenation
    let cat = ctx.tape.concat(&[c1, c2], 0).unwrap();
    let full = net.cg.as_ref().unwrap().forward_vec(&mut ctx, cat).unwrap();
    for (x, y) in ctx.tape.value(a).data().iter().zip(ctx.tape.value(full).data()) {
        assert!((x - y).abs() < 1e-12);
    }
}
