use super::*;
use crate::tensor::Rng;

#[test]
fn perfect_predictions_score_one() {
    let t = [0, 1, 2, 3, 3, 1];
    let r = macro_f1(&t, &t, 4).unwrap();
    assert_eq!(r.macro_f1, 1.0);
    // class 5 never occurs and does not drag the mean down
    assert_eq!(macro_f1(&t, &t, 6).unwrap().macro_f1, 1.0);
}

#[test]
fn constant_predictor_counting_oracle() {
    let truths: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let preds = vec![0; 400];
    let r = macro_f1(&preds, &truths, 4).unwrap();
    // class 0: tp 100, fp 300, fn 0 -> 200 / 500
    assert!((r.per_class[0] - 0.4).abs() < 1e-15);
    assert_eq!(&r.per_class[1..], &[0.0, 0.0, 0.0]);
    assert!((r.macro_f1 - 0.1).abs() < 1e-15);
}

#[test]
fn f1_errors() {
    assert!(macro_f1(&[0, 4], &[0, 1], 4).is_err());
    assert!(macro_f1(&[0], &[0, 1], 4).is_err());
    assert!(macro_f1(&[], &[], 4).is_err());
}

#[test]
fn confusion_total_and_accuracy() {
    let cm = ConfusionMatrix::new(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
    assert_eq!(cm.total(), 4);
    assert_eq!(cm.get(2, 1), 1);
    assert_eq!(cm.accuracy(), 0.75);
}

fn clips() -> (Vec<[usize; 5]>, Vec<[bool; 5]>) {
    let truths = vec![[2, 3, 3, 3, 3], [3, 3, 3, 3, 3], [0, 2, 3, 2, 3], [1, 3, 3, 3, 3]];
    let flags = vec![
        [false, true, true, true, true],
        [false; 5],
        [true, false, false, false, false],
        [false, true, true, false, false],
    ];
    (truths, flags)
}

#[test]
fn all_flagged_correct_is_one() {
    let (t, f) = clips();
    let r = false_belief_accuracy(&t, &t, &f).unwrap();
    assert_eq!(r.joint.accuracy(), Some(1.0));
    assert_eq!(r.first_order.total, 3);
    assert_eq!(r.second_order.total, 3);
}

#[test]
fn empty_subset_is_marked() {
    let (t, _) = clips();
    let r = false_belief_accuracy(&t, &t, &vec![[false; 5]; 4]).unwrap();
    assert_eq!(r.first_order.accuracy(), None);
    assert!(r.to_text().contains("empty"));
    assert!(r.to_csv().contains("first_order,empty,0,0"));
}

#[test]
fn flag_all_equals_plain_accuracy() {
    let (t, _) = clips();
    let p: Vec<[usize; 5]> = t.iter().map(|r| [r[0], 3, r[2], 0, r[4]]).collect();
    let r = false_belief_accuracy(&p, &t, &vec![[true; 5]; 4]).unwrap();
    for m in 0..5 {
        let plain = t.iter().zip(&p).filter(|(a, b)| a[m] == b[m]).count() as f64 / 4.0;
        assert_eq!(r.per_mind[m].accuracy(), Some(plain));
    }
}

#[test]
fn label_count_table() {
    let (t, f) = clips();
    let c = LabelCounts::from_labels(&t, &f).unwrap();
    assert_eq!(c.all[0], [1, 1, 1, 1]);
    assert_eq!(c.false_belief[1], [0, 0, 0, 2]);
    assert_eq!(c.all.iter().map(|r| r.iter().sum::<usize>()).sum::<usize>(), 20);
    let csv = c.to_csv();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.contains("m2,false_belief,0,0,0,2"));
}

#[test]
fn pca_on_a_line() {
    let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let r = pca_project(&pts, &[0; 10]).unwrap();
    assert!((r.ratios[0] - 1.0).abs() <= 1e-9);
    let norm: f64 = r.components[0].iter().map(|x| x * x).sum();
    assert!((norm - 1.0).abs() <= 1e-9);
}

#[test]
fn pca_isotropic_cloud() {
    let mut rng = Rng::new(5);
    let pts: Vec<Vec<f64>> = (0..20_000)
        .map(|_| vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)])
        .collect();
    let r = pca_project(&pts, &vec![0; pts.len()]).unwrap();
    // standard error of each ratio is about 0.005 at this n
    assert!((r.ratios[0] - 0.5).abs() < 0.02 && (r.ratios[1] - 0.5).abs() < 0.02);
}

#[test]
fn pca_duplication_invariant_and_orthonormal() {
    let mut rng = Rng::new(9);
    let pts: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            (0..5)
                .map(|k| rng.normal(0.0, 1.0 + k as f64) + i as f64 * 0.01)
                .collect()
        })
        .collect();
    let a = pca_project(&pts, &vec![0; 40]).unwrap();
    let doubled: Vec<Vec<f64>> = pts.iter().chain(&pts).cloned().collect();
    let b = pca_project(&doubled, &vec![0; 80]).unwrap();
    for k in 0..2 {
        assert!((a.ratios[k] - b.ratios[k]).abs() < 1e-12);
        for (x, y) in a.components[k].iter().zip(&b.components[k]) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    let dot: f64 = a.components[0].iter().zip(&a.components[1]).map(|(x, y)| x * y).sum();
    assert!(dot.abs() <= 1e-9);
    assert!(a.ratios[0] >= a.ratios[1] && a.ratios[0] + a.ratios[1] <= 1.0 + 1e-9);
}

#[test]
fn pca_needs_three_samples() {
    assert!(pca_project(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[0, 1]).is_err());
}

#[test]
fn separable_clusters_score_one() {
    let mut rng = Rng::new(2);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60 {
        let l = i % 2;
        let off = if l == 0 { -5.0 } else { 5.0 };
        pts.push(vec![
            off + rng.normal(0.0, 1.0),
            rng.normal(0.0, 1.0),
            rng.normal(0.0, 0.1),
        ]);
        labels.push(l);
    }
    let r = pca_project(&pts, &labels).unwrap();
    assert_eq!(r.separability, 1.0);
    // identical points cannot be told apart
    assert_eq!(separability(&[[0.0, 0.0]; 4], &[0, 1, 0, 1]), 0.5);
}

#[test]
fn t_test_degenerate_cases() {
    let a = [1.0, 2.0, 3.0];
    let same = paired_t_test(&a, &a).unwrap();
    assert!(same.degenerate && same.p == 1.0 && !same.significant);
    let b = [0.0, 1.0, 2.0];
    let shift = paired_t_test(&a, &b).unwrap();
    assert!(shift.degenerate && shift.p == 0.0 && shift.significant);
    assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
}

#[test]
fn t_test_hand_computation() {
    let a = [5.1, 4.9, 6.2, 5.8, 6.0];
    let b = [4.8, 4.7, 5.9, 5.2, 5.1];
    // d = (.3, .2, .3, .6, .9): mean .46, sample variance .332 / 4
    let r = paired_t_test(&a, &b).unwrap();
    let t = 0.46 / ((0.332f64 / 4.0).sqrt() / 5f64.sqrt());
    assert!((r.t - t).abs() < 1e-9);
    assert_eq!(r.df, 4);
    // t lies between the tabulated df=4 critical values 2.776 (p=.05) and 3.747 (p=.02)
    assert!(r.p < 0.05 && r.p > 0.02);
}

#[test]
fn t_test_matches_table_values() {
    // two-sided critical values for df = 4: p = .05 at 2.776445, p = .01 at 4.604095
    let base = [0.3, -0.1, 0.4, 0.0, 0.2];
    let n = base.len() as f64;
    let mean = base.iter().sum::<f64>() / n;
    let sd = (base.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    for (t_star, p_star) in [(2.776445, 0.05), (4.604095, 0.01)] {
        let c = t_star * sd / n.sqrt() - mean;
        let d: Vec<f64> = base.iter().map(|x| x + c).collect();
        let r = paired_t_test(&d, &[0.0; 5]).unwrap();
        assert!((r.t - t_star).abs() < 1e-9);
        assert!((r.p - p_star).abs() < 2e-6, "p = {}", r.p);
    }
}
