use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update of every trainable entry.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.entries.len() || state.m.len() != params.entries.len() {
        return Err(Error::Shape("gradient/state/parameter counts differ".into()));
    }
    for (e, g) in params.entries.iter().zip(grads) {
        if e.tensor.shape() != g.shape() {
            return Err(Error::Shape(format!("gradient shape mismatch for `{}`", e.name)));
        }
        if e.trainable && !g.all_finite() {
            return Err(Error::numeric(format!("gradient of `{}`", e.name), "non-finite value"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let step = T::from_f64(lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);
    let eps = T::from_f64(cfg.eps);
    for (i, entry) in params.entries.iter_mut().enumerate() {
        if !entry.trainable {
            continue;
        }
        let p = entry.tensor.data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[i].data()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ParamEntry;

    fn params(vals: &[f64]) -> ModelParams<f64> {
        ModelParams {
            entries: vec![ParamEntry {
                name: "w".into(),
                tensor: Tensor::from_f64(&[vals.len()], vals).unwrap(),
                trainable: true,
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = params(&[1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = vec![Tensor::zeros(&[3])];
        adam_step(&mut s, &mut p, &g, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut p = params(&[0.0, 0.0, 0.0]);
        let mut s = AdamState::new(&p);
        let g = vec![Tensor::from_f64(&[3], &[0.3, -5.0, 1e-2]).unwrap()];
        adam_step(&mut s, &mut p, &g, 1e-3, &AdamConfig::default()).unwrap();
        // m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
        let want = [-1e-3, 1e-3, -1e-3];
        for (got, w) in p.entries[0].tensor.data().iter().zip(want) {
            assert!((got - w).abs() < 1e-9, "{got} vs {w}");
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = params(&[0.0]);
        let mut s = AdamState::new(&p);
        let g = vec![Tensor::from_f64(&[1], &[f64::INFINITY]).unwrap()];
        assert!(matches!(
            adam_step(&mut s, &mut p, &g, 1e-3, &AdamConfig::default()),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = params(&[1.0]);
        p.entries[0].trainable = false;
        let mut s = AdamState::new(&p);
        let g = vec![Tensor::from_f64(&[1], &[1.0]).unwrap()];
        adam_step(&mut s, &mut p, &g, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p.entries[0].tensor.data(), &[1.0]);
    }
}
