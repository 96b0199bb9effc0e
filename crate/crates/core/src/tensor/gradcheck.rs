use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients with central finite differences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the non-flagged coordinates.
    pub max_rel_err: f64,
    /// Coordinates compared, including flagged ones.
    pub checked: usize,
    /// Coordinates whose stencil crosses a ReLU or pooling boundary; excluded from `max_rel_err`.
    pub kinks: usize,
    /// `(input, flat index)` of the worst non-flagged coordinate.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<G>(f: &G, inputs: &[Tensor<f64>]) -> Result<(f64, u64)>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 || v.ndim() > 1 {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    Ok((v.data()[0], tape.branch_signature()))
}

/// Checks `d f / d inputs[i][j]` for every `(i, j)` in `coords`.
///
/// `f` receives one leaf per input and must return a scalar. The numeric
/// derivative uses the fourth-order stencil at `±h, ±2h`. A coordinate is
/// counted as a kink, and excluded, when any stencil point takes a different
/// ReLU or pooling branch than the unperturbed pass.
pub fn check_gradients<G>(f: G, inputs: &[Tensor<f64>], coords: &[(usize, usize)], h: f64) -> Result<GradCheckReport>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 || v.ndim() > 1 {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    tape.backward(out)?;
    let base = tape.branch_signature();
    let grads: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();
    drop(tape);

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for &(i, j) in coords {
        let x0 = inputs[i].data()[j];
        let mut at = |k: f64| -> Result<(f64, u64)> {
            work[i].data_mut()[j] = x0 + k * h;
            let r = eval(&f, &work);
            work[i].data_mut()[j] = x0;
            r
        };
        let (p1, s1) = at(1.0)?;
        let (m1, s2) = at(-1.0)?;
        let (p2, s3) = at(2.0)?;
        let (m2, s4) = at(-2.0)?;
        report.checked += 1;
        if [s1, s2, s3, s4].iter().any(|&s| s != base) {
            report.kinks += 1;
            continue;
        }
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        let err = relative_error(grads[i].data()[j], numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((i, j));
        }
    }
    Ok(report)
}

/// Checks every coordinate of a single input.
pub fn finite_diff_check<G>(f: G, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    G: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = (0..x.numel()).map(|j| (0, j)).collect();
    check_gradients(|t, v| f(t, v[0]), std::slice::from_ref(x), &coords, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn linear_map_is_exact() {
        let mut rng = Rng::new(5);
        let w = Tensor::<f64>::uniform([6], 1.0, &mut rng);
        let x = Tensor::<f64>::uniform([6], 1.0, &mut rng);
        let r = finite_diff_check(
            |t, x| {
                let w = t.constant(w.clone());
                let y = t.mul(x, w)?;
                t.sum(y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err <= 1e-9, "{r:?}");
        assert_eq!(r.kinks, 0);
    }

    #[test]
    fn relu_at_kink_is_flagged() {
        let x = Tensor::new([3], vec![0.0, 1.0, -1.0]).unwrap();
        let r = finite_diff_check(
            |t, x| {
                let y = t.relu(x)?;
                t.sum(y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(r.kinks, 1);
        assert!(r.max_rel_err <= 1e-9);
    }

    #[test]
    fn wrong_gradient_is_not_excused_as_kink() {
        // Scale-by-constant after detaching: the tape sees no dependence on x
        // through the constant path, so the reported gradient is deliberately wrong.
        let x = Tensor::new([2], vec![0.3, -0.7]).unwrap();
        let r = finite_diff_check(
            |t, x| {
                let frozen = t.constant(t.value(x).clone());
                let y = t.mul(x, frozen)?;
                t.sum(y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(r.kinks, 0);
        assert!(r.max_rel_err > 0.4, "{r:?}");
    }

    #[test]
    fn rejects_non_scalar_output() {
        let x = Tensor::<f64>::zeros([3]);
        assert!(matches!(
            finite_diff_check(|t, x| t.relu(x), &x, 1e-5),
            Err(Error::NonScalarLoss(_))
        ));
    }
}
