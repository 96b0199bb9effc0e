//! Post-hoc evaluation: F1, false-belief accuracy, PCA of MindNet states, paired t-tests.

mod pca;
mod stats;

pub use pca::{mind_states, pca_project, separability, PcaResult, SEPARABILITY_DIRECTIONS};
pub use stats::{paired_t_test, TTestResult};

use std::fmt::Write as _;

use crate::data::Dynamics;
use crate::error::{Error, Result};
use crate::model::MIND_NAMES;

/// Rows are truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], truths: &[usize], k: usize) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} truths",
                preds.len(),
                truths.len()
            )));
        }
        let mut counts = vec![0u64; k * k];
        for (&p, &t) in preds.iter().zip(truths) {
            if p >= k || t >= k {
                return Err(Error::InvalidArgument(format!("class {} outside 0..{k}", p.max(t))));
            }
            counts[t * k + p] += 1;
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.k).map(|c| self.get(c, c)).sum();
        diag as f64 / self.total().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct F1Report {
    /// Per-class F1; 0 when precision and recall are both 0/0.
    pub per_class: Vec<f64>,
    /// Classes occurring in the truths or the predictions.
    pub present: Vec<bool>,
    /// Mean of `per_class` over present classes.
    pub macro_f1: f64,
}

/// Per-class F1 and their unweighted mean over the classes that occur.
///
/// A class absent from both truths and predictions has no defined F1 and is
/// left out of the mean, so perfect predictions always score 1.
pub fn macro_f1(preds: &[usize], truths: &[usize], k: usize) -> Result<F1Report> {
    let cm = ConfusionMatrix::new(preds, truths, k)?;
    if cm.total() == 0 {
        return Err(Error::Empty("macro F1 of no samples".into()));
    }
    let mut per_class = vec![0.0; k];
    let mut present = vec![false; k];
    for c in 0..k {
        let tp = cm.get(c, c) as f64;
        let fn_: f64 = (0..k).filter(|&p| p != c).map(|p| cm.get(c, p) as f64).sum();
        let fp: f64 = (0..k).filter(|&t| t != c).map(|t| cm.get(t, c) as f64).sum();
        present[c] = tp + fn_ + fp > 0.0;
        let denom = 2.0 * tp + fp + fn_;
        per_class[c] = if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    let n = present.iter().filter(|&&p| p).count();
    let macro_f1 = per_class
        .iter()
        .zip(&present)
        .filter(|(_, &p)| p)
        .map(|(f, _)| f)
        .sum::<f64>()
        / n as f64;
    Ok(F1Report {
        per_class,
        present,
        macro_f1,
    })
}

/// Correct/total over a subset; `total == 0` is the empty marker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubsetAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl SubsetAccuracy {
    /// `None` for an empty subset.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }

    fn cell(&self) -> String {
        self.accuracy().map_or_else(|| "empty".into(), |a| format!("{a:.4}"))
    }
}

/// Label counts per mind and dynamics class, over all clips and over flagged clips.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub all: [[usize; 4]; 5],
    pub false_belief: [[usize; 4]; 5],
}

impl LabelCounts {
    pub fn from_labels(truths: &[[usize; 5]], flags: &[[bool; 5]]) -> Result<Self> {
        if truths.len() != flags.len() {
            return Err(Error::InvalidArgument("flags not aligned with clips".into()));
        }
        let mut c = LabelCounts::default();
        for (t, f) in truths.iter().zip(flags) {
            for m in 0..5 {
                if t[m] >= 4 {
                    return Err(Error::InvalidArgument(format!("dynamics class {} outside 0..4", t[m])));
                }
                c.all[m][t[m]] += 1;
                if f[m] {
                    c.false_belief[m][t[m]] += 1;
                }
            }
        }
        Ok(c)
    }

    /// Rows `m1 (all)`, `m1 (false belief)`, ... with one column per dynamics class.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<22}", "mind");
        for d in Dynamics::ALL {
            let _ = write!(s, "{:>10}", d.name());
        }
        s.push('\n');
        for (m, name) in MIND_NAMES.iter().enumerate() {
            for (tag, row) in [("all", &self.all[m]), ("false belief", &self.false_belief[m])] {
                let _ = write!(s, "{:<22}", format!("{name} ({tag})"));
                for v in row {
                    let _ = write!(s, "{v:>10}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mind,subset,occur,disappear,update,null\n");
        for (m, name) in MIND_NAMES.iter().enumerate() {
            for (tag, row) in [("all", &self.all[m]), ("false_belief", &self.false_belief[m])] {
                let _ = writeln!(s, "{name},{tag},{},{},{},{}", row[0], row[1], row[2], row[3]);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FalseBeliefReport {
    pub per_mind: [SubsetAccuracy; 5],
    /// m1 and m2.
    pub first_order: SubsetAccuracy,
    /// m12 and m21.
    pub second_order: SubsetAccuracy,
    /// First and second order together.
    pub joint: SubsetAccuracy,
    pub counts: LabelCounts,
}

/// Accuracy over clips whose truth is flagged as a false belief, per mind and order.
pub fn false_belief_accuracy(
    preds: &[[usize; 5]],
    truths: &[[usize; 5]],
    flags: &[[bool; 5]],
) -> Result<FalseBeliefReport> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidArgument("predictions not aligned with clips".into()));
    }
    let counts = LabelCounts::from_labels(truths, flags)?;
    let mut per_mind = [SubsetAccuracy::default(); 5];
    let (mut first, mut second) = (SubsetAccuracy::default(), SubsetAccuracy::default());
    for ((p, t), f) in preds.iter().zip(truths).zip(flags) {
        for m in 0..5 {
            if !f[m] {
                continue;
            }
            let ok = p[m] == t[m];
            per_mind[m].add(ok);
            match m {
                0 | 1 => first.add(ok),
                2 | 3 => second.add(ok),
                _ => {}
            }
        }
    }
    let joint = SubsetAccuracy {
        correct: first.correct + second.correct,
        total: first.total + second.total,
    };
    Ok(FalseBeliefReport {
        per_mind,
        first_order: first,
        second_order: second,
        joint,
        counts,
    })
}

impl FalseBeliefReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("false-belief accuracy\n");
        for (name, a) in [
            ("first order", &self.first_order),
            ("second order", &self.second_order),
            ("joint", &self.joint),
        ] {
            let _ = writeln!(s, "  {name:<14}{:>8}  ({}/{})", a.cell(), a.correct, a.total);
        }
        for (name, a) in MIND_NAMES.iter().zip(&self.per_mind) {
            let _ = writeln!(s, "  {name:<14}{:>8}  ({}/{})", a.cell(), a.correct, a.total);
        }
        s.push_str("\nlabel counts\n");
        s.push_str(&self.counts.to_table());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,accuracy,correct,total\n");
        let named = [
            ("first_order", &self.first_order),
            ("second_order", &self.second_order),
            ("joint", &self.joint),
        ];
        for (name, a) in named.into_iter().chain(MIND_NAMES.iter().copied().zip(&self.per_mind)) {
            let _ = writeln!(s, "{name},{},{},{}", a.cell(), a.correct, a.total);
        }
        s
    }
}

#[cfg(test)]
mod tests;
