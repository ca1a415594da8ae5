//! Winner classifier: five 3x3 convolutions with ReLU, 2x2 max-pools after
//! the second and fourth, then a two-way head.
//!
//! The head is a 1x1 convolution to two channels followed by global average
//! pooling. Both are linear, so it is computed as pooling first and a
//! `(2, c)` matrix product second, which gives identical logits with a
//! smaller intermediate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamestate::{FeatureMap, CHANNELS};
use crate::nn::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, derive_seed, maxpool2, maxpool2_backward, relu,
    relu_backward, softmax, xavier_init, ConvParams,
};
use crate::tensor::{Real, Tensor};

/// Convolution index after which a max-pool follows.
const POOL_AFTER: [usize; 2] = [1, 3];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_channels: usize,
    pub channels: [usize; 5],
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_channels: CHANNELS,
            channels: [16, 16, 32, 32, 32],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T: Real = f32> {
    convs: Vec<ConvParams<T>>,
    /// `(2, c5)`; row 0 scores "side A wins".
    head_weight: Tensor<T>,
    head_bias: Tensor<T>,
}

pub struct ClassifierCache<T: Real> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
    pooled_from: Vec<(Vec<usize>, Vec<usize>)>,
    features: Tensor<T>,
    pooled: Tensor<T>,
}

impl<T: Real> Classifier<T> {
    pub fn new(config: &ClassifierConfig, seed: u64) -> Result<Self> {
        if config.input_channels == 0 || config.channels.contains(&0) {
            return Err(Error::invalid("classifier channels must be non-zero"));
        }
        let mut convs = Vec::new();
        let mut prev = config.input_channels;
        for (k, &c) in config.channels.iter().enumerate() {
            let kernel = xavier_init(&[c, prev, 3, 3], derive_seed(seed, k as u64));
            convs.push(ConvParams::new(kernel, Tensor::zeros(&[c]), 1)?);
            prev = c;
        }
        Ok(Classifier {
            convs,
            head_weight: xavier_init(&[2, prev], derive_seed(seed, 5)),
            head_bias: Tensor::zeros(&[2]),
        })
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("clf{i}.kernel"), &c.kernel));
            out.push((format!("clf{i}.bias"), &c.bias));
        }
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("clf{i}.kernel"), &mut c.kernel));
            out.push((format!("clf{i}.bias"), &mut c.bias));
        }
        out.push(("head.weight".into(), &mut self.head_weight));
        out.push(("head.bias".into(), &mut self.head_bias));
        out
    }

    pub fn from_named(tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<String, Tensor<T>> = tensors.into_iter().collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor {name}")))
        };
        let mut convs = Vec::new();
        for i in 0..5 {
            let kernel = take(&format!("clf{i}.kernel"))?;
            let bias = take(&format!("clf{i}.bias"))?;
            convs.push(ConvParams::new(kernel, bias, 1)?);
        }
        let head_weight = take("head.weight")?;
        let head_bias = take("head.bias")?;
        if let Some(extra) = map.keys().next() {
            return Err(Error::invalid(format!("unexpected tensor {extra} for a classifier")));
        }
        for w in convs.windows(2) {
            if w[1].in_channels() != w[0].out_channels() {
                return Err(Error::invalid("classifier stages do not chain"));
            }
        }
        let c = convs[4].out_channels();
        if head_weight.shape() != [2, c] || head_bias.shape() != [2] {
            return Err(Error::ShapeMismatch {
                op: "classifier head",
                left: head_weight.shape().to_vec(),
                right: vec![2, c],
            });
        }
        Ok(Classifier {
            convs,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> ClassifierConfig {
        let mut channels = [0; 5];
        for (c, p) in channels.iter_mut().zip(&self.convs) {
            *c = p.out_channels();
        }
        ClassifierConfig {
            input_channels: self.convs[0].in_channels(),
            channels,
        }
    }

    /// Output of the last convolution stage, `(n, c5, h/4, w/4)`.
    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.1.features)
    }

    /// Head logits `(n, 2)` from a feature map.
    pub fn head_logits(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.head(&global_average(features)?))
    }

    fn head(&self, pooled: &Tensor<T>) -> Tensor<T> {
        let (n, c) = (pooled.shape()[0], pooled.shape()[1]);
        let w = self.head_weight.data();
        let mut out = Tensor::zeros(&[n, 2]);
        for (row, f) in out.data_mut().chunks_mut(2).zip(pooled.data().chunks(c)) {
            for (k, r) in row.iter_mut().enumerate() {
                *r = self.head_bias.data()[k] + w[k * c..(k + 1) * c].iter().zip(f).map(|(&a, &b)| a * b).sum();
            }
        }
        out
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ClassifierCache<T>)> {
        let [_, c, h, w] = x.dims4()?;
        if c != self.convs[0].in_channels() || h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch {
                op: "classifier input",
                left: x.shape().to_vec(),
                right: vec![0, self.convs[0].in_channels(), 32, 32],
            });
        }
        let mut inputs = Vec::with_capacity(5);
        let mut pre = Vec::with_capacity(5);
        let mut pooled_from = Vec::new();
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let z = conv2d_forward(&h, conv)?;
            inputs.push(h);
            let a = relu(&z);
            pre.push(z);
            h = if POOL_AFTER.contains(&i) {
                let p = maxpool2(&a)?;
                pooled_from.push((a.shape().to_vec(), p.argmax));
                p.output
            } else {
                a
            };
        }
        let pooled = global_average(&h)?;
        let logits = self.head(&pooled);
        Ok((
            logits,
            ClassifierCache {
                inputs,
                pre,
                pooled_from,
                features: h,
                pooled,
            },
        ))
    }

    /// Gradients in [`named_params`](Self::named_params) order, given
    /// `dL/d logits`.
    pub fn backward(&self, cache: &ClassifierCache<T>, upstream: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let [n, c, fh, fw] = cache.features.dims4()?;
        if upstream.shape() != [n, 2] {
            return Err(Error::ShapeMismatch {
                op: "classifier backward",
                left: upstream.shape().to_vec(),
                right: vec![n, 2],
            });
        }
        // Head: logits = pooled * W^T + b.
        let w = self.head_weight.data();
        let mut head_weight = Tensor::<T>::zeros(&[2, c]);
        let mut head_bias = Tensor::<T>::zeros(&[2]);
        let mut g_pooled = Tensor::<T>::zeros(&[n, c]);
        for ((u, f), gp) in upstream
            .data()
            .chunks(2)
            .zip(cache.pooled.data().chunks(c))
            .zip(g_pooled.data_mut().chunks_mut(c))
        {
            for k in 0..2 {
                head_bias.data_mut()[k] += u[k];
                for j in 0..c {
                    head_weight.data_mut()[k * c + j] += u[k] * f[j];
                    gp[j] += u[k] * w[k * c + j];
                }
            }
        }
        // Global average pool spreads evenly over the plane.
        let plane = fh * fw;
        let scale = T::from_f64(1.0 / plane as f64);
        let mut g = Tensor::zeros(cache.features.shape());
        for (dst, &v) in g.data_mut().chunks_mut(plane).zip(g_pooled.data()) {
            dst.fill(v * scale);
        }

        let mut grads: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; 5];
        let mut pools = cache.pooled_from.iter().rev();
        for i in (0..5).rev() {
            if POOL_AFTER.contains(&i) {
                let (shape, argmax) = pools.next().expect("one record per pool");
                g = maxpool2_backward(shape, argmax, &g)?;
            }
            g = relu_backward(&cache.pre[i], &g)?;
            let gr = if i == 0 {
                conv2d_backward_params(&cache.inputs[i], &self.convs[i], &g)?
            } else {
                conv2d_backward(&cache.inputs[i], &self.convs[i], &g)?
            };
            grads[i] = Some((gr.kernel, gr.bias));
            if let Some(next) = gr.input {
                g = next;
            }
        }
        let mut out = Vec::with_capacity(12);
        for (k, b) in grads.into_iter().map(|p| p.expect("filled")) {
            out.push(k);
            out.push(b);
        }
        out.push(head_weight);
        out.push(head_bias);
        Ok(out)
    }

    /// `(P(A wins), P(B wins))` for one map.
    pub fn predict(&self, map: &FeatureMap) -> Result<(f64, f64)> {
        let x = FeatureMap::batch(&[map]).cast::<T>();
        let p = softmax(&self.logits(&x)?)?;
        Ok((p[0][0], p[0][1]))
    }

    pub fn cast<U: Real>(&self) -> Classifier<U> {
        Classifier {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    kernel: c.kernel.cast(),
                    bias: c.bias.cast(),
                    stride: c.stride,
                })
                .collect(),
            head_weight: self.head_weight.cast(),
            head_bias: self.head_bias.cast(),
        }
    }
}

/// Mean over each `(h, w)` plane: `(n, c, h, w) -> (n, c)`.
fn global_average<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let data = x
        .data()
        .chunks(plane)
        .map(|p| T::from_f64(p.iter().map(|v| v.as_f64()).sum::<f64>() * inv))
        .collect();
    Tensor::from_vec(&[n, c], data)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{grad_check, softmax_ce_loss, GradCheck};

    fn tiny() -> ClassifierConfig {
        ClassifierConfig {
            input_channels: 3,
            channels: [2, 2, 3, 3, 2],
        }
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let clf = Classifier::<f32>::new(&ClassifierConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = FeatureMap::zeros();
        for v in m.as_mut_slice() {
            *v = rng.gen_range(0.0..3.0f32).floor();
        }
        let (a, b) = clf.predict(&m).unwrap();
        assert!((a + b - 1.0).abs() < 1e-6 && (0.0..=1.0).contains(&a));
    }

    #[test]
    fn head_matches_manual_evaluation() {
        let clf = Classifier::<f64>::new(&tiny(), 3).unwrap();
        let x = random(&[2, 3, 8, 8], &mut ChaCha8Rng::seed_from_u64(5), 0.0, 2.0);
        let f = clf.features(&x).unwrap();
        assert_eq!(f.shape(), &[2, 2, 2, 2]);
        let logits = clf.logits(&x).unwrap();
        let w = &clf.head_weight;
        for b in 0..2 {
            for k in 0..2 {
                // 1x1 convolution at every cell, then the spatial mean.
                let mut acc = 0.0;
                for cell in 0..4 {
                    let mut v = clf.head_bias.data()[k];
                    for c in 0..2 {
                        v += w.data()[k * 2 + c] * f.data()[(b * 2 + c) * 4 + cell];
                    }
                    acc += v / 4.0;
                }
                assert!((acc - logits.data()[b * 2 + k]).abs() < 1e-12);
            }
        }
        assert_eq!(clf.head_logits(&f).unwrap(), logits);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Classifier::<f32>::new(&tiny(), 4).unwrap();
        assert_eq!(a, Classifier::new(&tiny(), 4).unwrap());
        assert_ne!(a, Classifier::new(&tiny(), 5).unwrap());
    }

    #[test]
    fn wrong_shape_rejected() {
        let clf = Classifier::<f32>::new(&tiny(), 4).unwrap();
        assert!(clf.logits(&Tensor::zeros(&[1, 3, 6, 6])).is_err());
        assert!(clf.logits(&Tensor::zeros(&[1, 2, 8, 8])).is_err());
    }

    struct Net {
        clf: Classifier<f64>,
        x: Tensor<f64>,
        labels: Vec<usize>,
    }

    impl GradCheck for Net {
        fn params(&self) -> Vec<f64> {
            self.clf.named_params().iter().flat_map(|(_, t)| t.data().to_vec()).collect()
        }
        fn set_params(&mut self, v: &[f64]) {
            let mut off = 0;
            for (_, t) in self.clf.named_params_mut() {
                let n = t.len();
                t.data_mut().copy_from_slice(&v[off..off + n]);
                off += n;
            }
        }
        fn loss(&self) -> Result<f64> {
            Ok(softmax_ce_loss(&self.clf.logits(&self.x)?, &self.labels)?.0)
        }
        fn gradient(&self) -> Result<Vec<f64>> {
            let (logits, cache) = self.clf.forward_cached(&self.x)?;
            let g = softmax_ce_loss(&logits, &self.labels)?.1;
            Ok(self.clf.backward(&cache, &g)?.iter().flat_map(|t| t.data().to_vec()).collect())
        }
    }

    #[test]
    fn classifier_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut clf = Classifier::<f64>::new(&tiny(), 6).unwrap();
        for (_, t) in clf.named_params_mut() {
            if t.rank() == 1 {
                *t = random(t.shape(), &mut rng, 0.05, 0.3);
            }
        }
        let mut net = Net {
            clf,
            x: random(&[3, 3, 8, 8], &mut rng, 0.0, 2.0),
            labels: vec![0, 1, 1],
        };
        let err = grad_check(&mut net, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
