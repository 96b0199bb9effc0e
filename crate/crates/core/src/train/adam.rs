use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamStore<F>) -> Self {
        let zeros: Vec<Tensor<F>> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<F: Real>(
    params: &mut ParamStore<F>,
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.shape() != params.get(id).shape() || state.m[id.index()].shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "gradient {:?} for parameter {} {:?}",
                    g.shape(),
                    params.name(id),
                    params.get(id).shape()
                ),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (F::lit(cfg.beta1), F::lit(cfg.beta2));
    let c1 = F::lit(1.0 - cfg.beta1.powi(t));
    let c2 = F::lit(1.0 - cfg.beta2.powi(t));
    let (lr, eps, one) = (F::lit(cfg.lr), F::lit(cfg.eps), F::one());
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let i = id.index();
        let p = params.get_mut(id).data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, &gk) in grads[i].data().iter().enumerate() {
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new([1], vec![x]).unwrap());
        s
    }

    #[test]
    fn three_hand_steps() {
        let cfg = AdamConfig::default();
        let mut p = scalar_store(1.0);
        let mut st = AdamState::new(&p);
        let gs = [0.5, -0.2, 0.1];
        // hand recurrence with the same constants
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            adam_step(&mut p, &[Tensor::new([1], vec![*g]).unwrap()], &mut st, &cfg).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.99 * v + 0.01 * g * g;
            let k = t as i32 + 1;
            x -= 5e-4 * (m / (1.0 - 0.9f64.powi(k))) / ((v / (1.0 - 0.99f64.powi(k))).sqrt() + 1e-8);
            assert!((p.tensors()[0].data()[0] - x).abs() < 1e-12);
        }
        // step 1 moves by lr * g / (|g| + eps), i.e. almost exactly lr
        let expected_1 = 1.0 - 5e-4 * 0.5 / (0.5 + 1e-8);
        let mut q = scalar_store(1.0);
        let mut s = AdamState::new(&q);
        adam_step(&mut q, &[Tensor::new([1], vec![0.5]).unwrap()], &mut s, &cfg).unwrap();
        assert!((q.tensors()[0].data()[0] - expected_1).abs() < 1e-15);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_store(0.7);
        let mut st = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &[Tensor::zeros([1])], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.tensors()[0].data()[0], 0.7);
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut p = scalar_store(0.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[Tensor::new([1], vec![1.0]).unwrap()], &mut st, &cfg).unwrap();
        let (m1, v1) = (st.m[0].data()[0], st.v[0].data()[0]);
        adam_step(&mut p, &[Tensor::zeros([1])], &mut st, &cfg).unwrap();
        assert!((st.m[0].data()[0] - 0.9 * m1).abs() < 1e-15);
        assert!((st.v[0].data()[0] - 0.99 * v1).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = scalar_store(0.3);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[Tensor::new([1], vec![2.0]).unwrap()], &mut st, &cfg).unwrap();
        assert_eq!(p.tensors()[0].data()[0], 0.3);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = scalar_store(0.3);
        let mut st = AdamState::new(&p);
        let r = adam_step(&mut p, &[Tensor::zeros([2])], &mut st, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Shape { .. })));
    }
}
