use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestResult {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p: f64,
    pub significant: bool,
    /// The differences have zero variance; `p` is set by convention.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `a - b` at the 0.05 level.
///
/// The Student-t tail comes from the regularised incomplete beta function,
/// evaluated by continued fraction. Constant differences are degenerate:
/// zero mean gives `p = 1`, any other mean `p = 0` with an infinite `t`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {n} vs {}",
            b.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs n >= 2, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p, degenerate) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0, true)
        } else {
            (f64::INFINITY.copysign(mean), 0.0, true)
        }
    } else {
        let t = mean / (var.sqrt() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (t, (2.0 * dist.sf(t.abs())).min(1.0), false)
    };
    Ok(TTestResult {
        n,
        mean_diff: mean,
        t,
        df,
        p,
        significant: p < 0.05,
        degenerate,
    })
}
