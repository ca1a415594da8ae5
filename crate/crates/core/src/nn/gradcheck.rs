//! Central finite-difference gradient checker (64-bit).

use crate::error::Result;
use crate::nn::{conv2d_backward, conv2d_forward, mse_loss, relu, relu_backward, ConvParams};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait GradCheck {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, values: &[f64]);
    fn loss(&self) -> Result<f64>;
    fn gradient(&self) -> Result<Vec<f64>>;
}

/// `|a - n| / max(1, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

/// Maximum relative error between analytic and central-difference gradients
/// over every parameter.
pub fn grad_check<M: GradCheck + ?Sized>(model: &mut M, eps: f64) -> Result<f64> {
    let n = model.params().len();
    grad_check_indices(model, eps, &(0..n).collect::<Vec<_>>())
}

/// Like [`grad_check`], restricted to the given parameter indices.
pub fn grad_check_indices<M: GradCheck + ?Sized>(model: &mut M, eps: f64, indices: &[usize]) -> Result<f64> {
    let base = model.params();
    let analytic = model.gradient()?;
    let mut worst = 0.0f64;
    let mut probe = base.clone();
    for &i in indices {
        probe[i] = base[i] + eps;
        model.set_params(&probe);
        let plus = model.loss()?;
        probe[i] = base[i] - eps;
        model.set_params(&probe);
        let minus = model.loss()?;
        probe[i] = base[i];
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    model.set_params(&base);
    Ok(worst)
}

pub(crate) fn flatten(tensors: &[&Tensor<f64>]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub(crate) fn unflatten(tensors: &mut [&mut Tensor<f64>], values: &[f64]) {
    let mut offset = 0;
    for t in tensors.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    debug_assert_eq!(offset, values.len());
}

/// `mse(relu(conv(x)), target)` with respect to the conv kernel and bias.
#[derive(Clone, Debug)]
pub struct ConvReluMse {
    pub conv: ConvParams<f64>,
    pub input: Tensor<f64>,
    pub target: Tensor<f64>,
}

impl GradCheck for ConvReluMse {
    fn params(&self) -> Vec<f64> {
        flatten(&[&self.conv.kernel, &self.conv.bias])
    }

    fn set_params(&mut self, values: &[f64]) {
        unflatten(&mut [&mut self.conv.kernel, &mut self.conv.bias], values);
    }

    fn loss(&self) -> Result<f64> {
        let z = conv2d_forward(&self.input, &self.conv)?;
        Ok(mse_loss(&relu(&z), &self.target)?.0)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let z = conv2d_forward(&self.input, &self.conv)?;
        let (_, g) = mse_loss(&relu(&z), &self.target)?;
        let gz = relu_backward(&z, &g)?;
        let grads = conv2d_backward(&self.input, &self.conv, &gz)?;
        Ok(flatten(&[&grads.kernel, &grads.bias]))
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    fn chain(seed: u64) -> ConvReluMse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConvReluMse {
            conv: ConvParams::new(random(&[3, 2, 3, 3], &mut rng, 1.0), random(&[3], &mut rng, 0.5), 2).unwrap(),
            input: random(&[2, 2, 6, 6], &mut rng, 1.0),
            target: random(&[2, 3, 3, 3], &mut rng, 1.0).map(|v| v - 4.0),
        }
    }

    struct Doubled(ConvReluMse);

    impl GradCheck for Doubled {
        fn params(&self) -> Vec<f64> {
            self.0.params()
        }
        fn set_params(&mut self, v: &[f64]) {
            self.0.set_params(v)
        }
        fn loss(&self) -> Result<f64> {
            self.0.loss()
        }
        fn gradient(&self) -> Result<Vec<f64>> {
            Ok(self.0.gradient()?.into_iter().map(|g| 2.0 * g).collect())
        }
    }

    struct Constant;

    impl GradCheck for Constant {
        fn params(&self) -> Vec<f64> {
            Vec::new()
        }
        fn set_params(&mut self, _: &[f64]) {}
        fn loss(&self) -> Result<f64> {
            Ok(3.0)
        }
        fn gradient(&self) -> Result<Vec<f64>> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn conv_relu_mse_chain_passes() {
        let err = grad_check(&mut chain(11), DEFAULT_EPS).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn doubled_gradient_is_caught() {
        let err = grad_check(&mut Doubled(chain(11)), DEFAULT_EPS).unwrap();
        assert!(err > 0.3, "max relative error {err}");
    }

    #[test]
    fn parameterless_fragment_is_exact() {
        assert_eq!(grad_check(&mut Constant, DEFAULT_EPS).unwrap(), 0.0);
    }

    #[test]
    fn check_restores_parameters() {
        let mut c = chain(5);
        let before = c.params();
        grad_check(&mut c, DEFAULT_EPS).unwrap();
        assert_eq!(c.params(), before);
    }
}
