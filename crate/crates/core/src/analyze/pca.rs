use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{MToMnet, Mode, CLIP_LEN};
use crate::params::{Ctx, ParamStore};
use crate::tensor::{Real, Rng, Tape};

/// Directions swept by [`separability`]: one per tenth of a degree.
pub const SEPARABILITY_DIRECTIONS: usize = 3600;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Top two unit eigenvectors of the covariance, largest first.
    pub components: [Vec<f64>; 2],
    /// Their shares of the total variance.
    pub ratios: [f64; 2],
    /// `(pc1, pc2)` coordinates per input point.
    pub projected: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    /// Best threshold-classifier accuracy separating label 0 from label 1 in the PC plane.
    pub separability: f64,
}

/// Mean-centred covariance eigendecomposition, keeping two components.
///
/// Each component's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_project(states: &[Vec<f64>], labels: &[usize]) -> Result<PcaResult> {
    let n = states.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 3 samples, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::InvalidArgument("one label per state required".into()));
    }
    let d = states[0].len();
    if d < 2 || states.iter().any(|s| s.len() != d) {
        return Err(Error::InvalidArgument(
            "states must share a dimension of at least 2".into(),
        ));
    }
    let mut mean = vec![0.0; d];
    for s in states {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, d, |i, j| states[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let component = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [component(0), component(1)];
    let ratio = |k: usize| {
        if total > 0.0 {
            eig.eigenvalues[order[k]].max(0.0) / total
        } else {
            0.0
        }
    };
    let ratios = [ratio(0), ratio(1)];
    let projected: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let row = x.row(i);
            let dot = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    let separability = separability(&projected, labels);
    Ok(PcaResult {
        mean,
        components,
        ratios,
        projected,
        labels: labels.to_vec(),
        separability,
    })
}

/// Accuracy of the best rule `label = 1 iff u·p > t` over unit directions
/// `u` at [`SEPARABILITY_DIRECTIONS`] angles and all thresholds `t`.
/// Points labelled other than 0 or 1 are ignored; the result lies in `[0.5, 1]`
/// whenever any point remains.
pub fn separability(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let pts: Vec<([f64; 2], bool)> = points
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l <= 1)
        .map(|(p, &l)| (*p, l == 1))
        .collect();
    let n = pts.len();
    if n == 0 {
        return 0.0;
    }
    let positives = pts.iter().filter(|(_, l)| *l).count();
    let mut best = 0usize;
    let mut proj: Vec<(f64, bool)> = Vec::with_capacity(n);
    for k in 0..SEPARABILITY_DIRECTIONS {
        let theta = std::f64::consts::TAU * k as f64 / SEPARABILITY_DIRECTIONS as f64;
        let (s, c) = theta.sin_cos();
        proj.clear();
        proj.extend(pts.iter().map(|(p, l)| (p[0] * c + p[1] * s, *l)));
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        // threshold below everything: all predicted positive
        let mut correct = positives;
        best = best.max(correct);
        let mut i = 0;
        while i < n {
            // move every point tied at this value below the threshold together
            let v = proj[i].0;
            while i < n && proj[i].0 == v {
                if proj[i].1 {
                    correct -= 1;
                } else {
                    correct += 1;
                }
                i += 1;
            }
            best = best.max(correct);
        }
    }
    best as f64 / n as f64
}

/// The vectors each MindNet hands to its heads at clip-final timesteps, from
/// eval-mode passes. Labels are 0 for MindNet 1 and 1 for MindNet 2.
///
/// Per-frame models contribute `H` rows at frames 5, 10, ... (the last frame
/// when the window is shorter than a clip); five-minds models contribute each
/// direction's final hidden state.
pub fn mind_states(net: &MToMnet, params: &ParamStore<f32>, samples: &[Sample]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut states = Vec::new();
    let mut labels = Vec::new();
    for s in samples {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, params, false, Rng::new(0)).frozen();
        let out = net.forward(&mut ctx, &s.window)?;
        drop(ctx);
        for (m, st) in out.states.iter().enumerate() {
            let rows: Vec<Vec<f64>> = match net.config.mode {
                Mode::FiveMinds => vec![tape.value(st.h_final).data().iter().map(|v| v.as_f64()).collect()],
                Mode::PerFrameBeliefs => {
                    let h = tape.value(st.h);
                    let t = h.shape()[0];
                    let mut ts: Vec<usize> = (CLIP_LEN - 1..t).step_by(CLIP_LEN).collect();
                    if ts.is_empty() {
                        ts.push(t - 1);
                    }
                    ts.iter()
                        .map(|&r| h.row(r).iter().map(|v| v.as_f64()).collect())
                        .collect()
                }
            };
            labels.extend(std::iter::repeat_n(m, rows.len()));
            states.extend(rows);
        }
    }
    Ok((states, labels))
}
