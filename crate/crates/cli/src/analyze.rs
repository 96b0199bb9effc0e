//! The `analyze` sub-commands.

use std::collections::HashMap;
use std::fmt::Write as _;

use mtomnet::analyze::{false_belief_accuracy, mind_states, paired_t_test, pca_project};
use mtomnet::data::Dynamics;
use mtomnet::model::{
    count_parameters, load_checkpoint, reference_param_count, Aggregation, MToMnet, MToMnetConfig, Mode, Variant,
    MIND_NAMES,
};
use mtomnet::train::{predict_samples, thread_count};
use mtomnet::verify::gradcheck_all;
use mtomnet::Error;

use crate::files;
use crate::run::{resolve, PREDICTION_HEADER};
use crate::{CountParamsArgs, Failure, FalseBeliefArgs, GradcheckArgs, Outcome, PcaArgs, TtestArgs};

/// Allowed relative gap between a built model and the published total.
pub const PARAM_TOLERANCE: f64 = 0.05;
/// Parameters added by attention aggregation over concatenation.
pub const ATTENTION_DELTA: usize = 32_768;

struct Counted {
    config: MToMnetConfig,
    total: usize,
}

fn deviation(total: usize, reference: usize) -> f64 {
    (total as f64 - reference as f64) / reference as f64
}

pub fn count_params(args: &CountParamsArgs) -> Outcome {
    let cfg = resolve(&args.config)?;
    cfg.model.validate()?;
    let configs: Vec<MToMnetConfig> = if args.all {
        let mut v = Vec::new();
        for mode in [Mode::PerFrameBeliefs, Mode::FiveMinds] {
            v.push(MToMnetConfig::new(Variant::Base, Aggregation::Concat, mode));
            for variant in [Variant::Ic, Variant::Cg] {
                for agg in [Aggregation::Concat, Aggregation::Attention] {
                    v.push(MToMnetConfig::new(variant, agg, mode));
                }
            }
        }
        v
    } else {
        vec![cfg.model.clone()]
    };

    let mut problems = Vec::new();
    let mut counted = Vec::new();
    for c in &configs {
        let (_, store) = MToMnet::build::<f32>(c, 0)?;
        let b = count_parameters(&store);
        println!("{} ({})  total {}", c.label(), c.mode.dataset(), b.total);
        if !args.all {
            for (name, n) in &b.components {
                println!("  {name:<24}{n:>10}");
            }
            for (name, n) in &b.categories {
                println!("  [{name}]{:>width$}", n, width = 32 - name.len() - 2);
            }
        }
        if let Some(r) = reference_param_count(c) {
            let d = deviation(b.total, r);
            let ok = d.abs() <= PARAM_TOLERANCE;
            println!(
                "  published {r}  deviation {:+.2}%  {}",
                100.0 * d,
                if ok { "within 5%" } else { "OUTSIDE 5%" }
            );
            if !ok {
                problems.push(format!(
                    "{} {} is {:+.2}% from {r}",
                    c.label(),
                    c.mode.dataset(),
                    100.0 * d
                ));
            }
        }
        counted.push(Counted {
            config: c.clone(),
            total: b.total,
        });
    }

    if args.all {
        for mode in [Mode::PerFrameBeliefs, Mode::FiveMinds] {
            for variant in [Variant::Ic, Variant::Cg] {
                let pick = |agg| {
                    counted
                        .iter()
                        .find(|k| k.config.mode == mode && k.config.variant == variant && k.config.aggregation == agg)
                        .map(|k| k.total)
                };
                if let (Some(attn), Some(cat)) = (pick(Aggregation::Attention), pick(Aggregation::Concat)) {
                    let delta = attn as i64 - cat as i64;
                    let name = if variant == Variant::Ic { "IC" } else { "CG" };
                    println!("{name}-attention - {name}-concat ({}) = {delta}", mode.dataset());
                    if delta != ATTENTION_DELTA as i64 {
                        problems.push(format!("{name} {} attention delta is {delta}", mode.dataset()));
                    }
                }
            }
        }
    }

    if let Some(out) = &args.out {
        let rows = counted.iter().map(|k| {
            let r = reference_param_count(&k.config);
            vec![
                k.config.label(),
                k.config.mode.dataset().to_string(),
                k.total.to_string(),
                r.map_or_else(String::new, |r| r.to_string()),
                r.map_or_else(String::new, |r| format!("{:?}", deviation(k.total, r))),
            ]
        });
        files::write_csv(
            out,
            &["model", "dataset", "total", "published", "relative_deviation"],
            rows,
        )?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(problems.join("; ")))
    }
}

pub fn gradcheck(args: &GradcheckArgs) -> Outcome {
    let cases = gradcheck_all(args.points, args.seed)?;
    for c in &cases {
        println!("{}", c.line());
    }
    let failed: Vec<&str> = cases.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = cases.iter().map(|c| c.report.max_rel_err).fold(0.0, f64::max);
    println!(
        "{} cases, {} failed, worst relative error {worst:.3e}",
        cases.len(),
        failed.len()
    );
    if let Some(out) = &args.out {
        let rows = cases.iter().map(|c| {
            vec![
                c.name.clone(),
                format!("{:?}", c.report.max_rel_err),
                c.report.checked.to_string(),
                c.report.kinks.to_string(),
                c.passed().to_string(),
            ]
        });
        files::write_csv(out, &["case", "max_rel_err", "checked", "kinks", "passed"], rows)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient mismatch in {}", failed.join(", "))))
    }
}

pub fn pca(args: &PcaArgs) -> Outcome {
    let ck = load_checkpoint(&args.checkpoint)?;
    let (_, split) = files::load_split(&args.corpus, &args.split)?;
    files::require_mode(ck.net.config.mode, &split.episodes)?;
    let samples = files::samples(&split.episodes)?;
    let (states, labels) = mind_states(&ck.net, &ck.params, &samples)?;
    let res = pca_project(&states, &labels)?;
    files::create_dir(&args.out)?;
    for mind in 0..2 {
        let rows = res
            .projected
            .iter()
            .zip(&res.labels)
            .filter(|(_, &l)| l == mind)
            .map(|(p, _)| vec![format!("{:?}", p[0]), format!("{:?}", p[1])]);
        files::write_csv(
            &args.out.join(format!("pca_mind{}.csv", mind + 1)),
            &["pc1", "pc2"],
            rows,
        )?;
    }
    let rows = (0..res.mean.len()).map(|i| {
        vec![
            i.to_string(),
            format!("{:?}", res.components[0][i]),
            format!("{:?}", res.components[1][i]),
        ]
    });
    files::write_csv(&args.out.join("pca_components.csv"), &["dim", "pc1", "pc2"], rows)?;
    let summary = [
        ("points", res.projected.len().to_string()),
        ("ratio_pc1", format!("{:?}", res.ratios[0])),
        ("ratio_pc2", format!("{:?}", res.ratios[1])),
        ("separability", format!("{:?}", res.separability)),
    ];
    files::write_csv(
        &args.out.join("pca_summary.csv"),
        &["key", "value"],
        summary.iter().map(|(k, v)| vec![k.to_string(), v.clone()]),
    )?;
    println!(
        "{} states from {} ({} split): explained variance {:.4} + {:.4}, MindNet separability {:.4}",
        res.projected.len(),
        ck.net.config.label(),
        split.label,
        res.ratios[0],
        res.ratios[1],
        res.separability
    );
    Ok(())
}

fn parse_class(s: &str) -> Result<usize, Error> {
    let s = s.trim();
    Dynamics::ALL
        .iter()
        .find(|d| d.name() == s.to_ascii_lowercase())
        .map(|&d| d as usize)
        .or_else(|| s.parse().ok().filter(|&i| i < Dynamics::ALL.len()))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown dynamics class `{s}`")))
}

pub fn false_belief(args: &FalseBeliefArgs) -> Outcome {
    let (_, split) = files::load_split(&args.corpus, &args.split)?;
    files::require_mode(Mode::FiveMinds, &split.episodes)?;
    let samples = files::samples(&split.episodes)?;
    let truths: Vec<[usize; 5]> = samples
        .iter()
        .map(|s| std::array::from_fn(|m| s.targets[m][0]))
        .collect();
    let flags: Vec<[bool; 5]> = samples.iter().map(|s| s.false_belief.unwrap_or([false; 5])).collect();
    let preds: Vec<[usize; 5]> = if let Some(ck) = &args.checkpoint {
        let ck = load_checkpoint(ck)?;
        let p = predict_samples(&ck.net, &ck.params, &samples, thread_count())?;
        p.iter().map(|s| std::array::from_fn(|m| s[m][0])).collect()
    } else if let Some(path) = &args.predictions {
        let (header, rows) = files::read_csv(path)?;
        if header != PREDICTION_HEADER {
            return Err(Error::validation("predictions", format!("{} has header {header:?}", path.display())).into());
        }
        let mut map = HashMap::new();
        for r in rows {
            let bad = || Error::validation("predictions", format!("malformed row {r:?}"));
            let pred: usize = r[4].parse().map_err(|_| bad())?;
            let clip: usize = r[1].parse().map_err(|_| bad())?;
            map.insert((r[0].clone(), clip, r[2].clone()), pred);
        }
        samples
            .iter()
            .map(|s| {
                let mut p = [0; 5];
                for (m, name) in MIND_NAMES.iter().enumerate() {
                    p[m] = *map.get(&(s.episode.clone(), s.clip, name.to_string())).ok_or_else(|| {
                        Error::validation(
                            "predictions",
                            format!("no {name} prediction for {} clip {}", s.episode, s.clip),
                        )
                    })?;
                }
                Ok(p)
            })
            .collect::<Result<_, Error>>()?
    } else {
        let c = parse_class(args.constant.as_deref().unwrap_or_default())?;
        vec![[c; 5]; samples.len()]
    };
    let report = false_belief_accuracy(&preds, &truths, &flags)?;
    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        files::create_dir(out)?;
        files::write(&out.join("false_belief.csv"), report.to_csv())?;
        files::write(&out.join("label_counts.csv"), report.counts.to_csv())?;
    }
    Ok(())
}

fn keyed_column(path: &std::path::Path, keys: &[&str], column: &str) -> Result<Vec<(String, f64)>, Error> {
    let (header, rows) = files::read_csv(path)?;
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no column `{name}`", path.display())))
    };
    let key_idx = keys.iter().map(|k| find(k)).collect::<Result<Vec<_>, _>>()?;
    let col = find(column)?;
    rows.iter()
        .map(|r| {
            let key = key_idx.iter().map(|&i| r[i].as_str()).collect::<Vec<_>>().join(",");
            let v = r[col].trim().parse().map_err(|_| {
                Error::validation(column, format!("`{}` in {} is not a number", r[col], path.display()))
            })?;
            Ok((key, v))
        })
        .collect()
}

pub fn ttest(args: &TtestArgs) -> Outcome {
    let keys: Vec<&str> = args
        .pair_by
        .split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .collect();
    if keys.is_empty() {
        return Err(Error::InvalidArgument("--pair-by names no column".into()).into());
    }
    let a = keyed_column(&args.a, &keys, &args.column)?;
    let b: HashMap<String, f64> = keyed_column(&args.b, &keys, &args.column)?.into_iter().collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, x) in &a {
        if let Some(&y) = b.get(k) {
            xs.push(*x);
            ys.push(y);
        }
    }
    let r = paired_t_test(&xs, &ys)?;
    let mut text = String::new();
    let _ = writeln!(text, "paired t-test on `{}` over {} pairs", args.column, r.n);
    let _ = writeln!(text, "  mean difference (a - b) {:.6}", r.mean_diff);
    let _ = writeln!(text, "  t = {:.4}, df = {}, p = {:.4}", r.t, r.df, r.p);
    let _ = writeln!(
        text,
        "  {} at the 0.05 level{}",
        if r.significant {
            "significant"
        } else {
            "not significant"
        },
        if r.degenerate {
            " (differences are constant)"
        } else {
            ""
        }
    );
    print!("{text}");
    if let Some(out) = &args.out {
        files::write_csv(
            out,
            &["n", "mean_diff", "t", "df", "p", "significant"],
            [vec![
                r.n.to_string(),
                format!("{:?}", r.mean_diff),
                format!("{:?}", r.t),
                r.df.to_string(),
                format!("{:?}", r.p),
                r.significant.to_string(),
            ]],
        )?;
    }
    Ok(())
}
