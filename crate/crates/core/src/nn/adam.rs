use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real = f32> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Real>(
    name: &str,
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    ensure_same_shape("adam_step", param, grad)?;
    ensure_same_shape("adam_step state", param, &state.m)?;
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient(name.to_string()));
    }
    let c = state.config;
    state.t += 1;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
    let (inv_bc1, inv_bc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
    let (lr, eps) = (T::from_f64(lr), T::from_f64(c.eps));
    let p = param.data_mut().iter_mut();
    let m = state.m.data_mut().iter_mut();
    let v = state.v.data_mut().iter_mut();
    for (((p, m), v), &g) in p.zip(m).zip(v).zip(grad.data()) {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        let m_hat = *m * inv_bc1;
        let v_hat = *v * inv_bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over an ordered list of named parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    lr: f64,
    config: AdamConfig,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, config: AdamConfig) -> Self {
        Adam {
            lr,
            config,
            states: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn step(&mut self, params: Vec<(String, &mut Tensor<T>)>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.states.is_empty() {
            self.states = params
                .iter()
                .map(|(_, p)| AdamState::new(p.shape(), self.config))
                .collect();
        }
        // Validate every gradient before touching any parameter.
        for ((name, _), g) in params.iter().zip(grads) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        for (((name, p), g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(&name, p, g, s, self.lr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&[3], AdamConfig::default());
        adam_step("p", &mut p, &Tensor::zeros(&[3]), &mut s, 0.001).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // t = 1: m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25
        let mut p = Tensor::<f64>::from_vec(&[1], vec![1.0]).unwrap();
        let g = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let mut s = AdamState::new(&[1], AdamConfig::default());
        adam_step("theta", &mut p, &g, &mut s, 0.001).unwrap();
        let expect = 1.0 - 0.001 * (0.5 / (0.5 + 1e-8));
        assert!((p.data()[0] - expect).abs() < 1e-15);
        assert!((p.data()[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn repeated_gradient_step_bounded_by_lr() {
        let mut p = Tensor::<f64>::from_vec(&[2], vec![0.0, 0.0]).unwrap();
        let g = Tensor::from_vec(&[2], vec![0.3, -7.0]).unwrap();
        let mut s = AdamState::new(&[2], AdamConfig::default());
        let lr = 0.001;
        for _ in 0..2 {
            let before = p.clone();
            adam_step("p", &mut p, &g, &mut s, lr).unwrap();
            for (a, b) in p.data().iter().zip(before.data()) {
                assert!((a - b).abs() <= lr * (1.0 + 1e-12));
            }
        }
        assert_eq!(s.t, 2);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let g = Tensor::from_vec(&[2], vec![1.0, f32::NAN]).unwrap();
        let mut s = AdamState::new(&[2], AdamConfig::default());
        let err = adam_step("enc1.kernel", &mut p, &g, &mut s, 0.001).unwrap_err();
        assert!(err.to_string().contains("enc1.kernel"));
        assert_eq!(s.t, 0);
    }
}
