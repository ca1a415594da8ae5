//! Fully convolutional encoder-decoder with tied kernels and an additive
//! input-to-output skip.
//!
//! The encoder is a stride-1 stem followed by stride-2 stages that double
//! the channel count at each halving. Decoder stage `k` is a transpose
//! convolution that reads the kernel of encoder stage `S-1-k` directly, so
//! one tensor serves both directions. Every layer but the last decoder
//! stage is followed by ReLU; the last adds the input and then applies ReLU:
//!
//! ```text
//! out = relu(decode(encode(x)) + x)
//! ```
//!
//! Parameter count for channels `c_0..c_S` over input channels `c_in`:
//! `sum 9 * c_{k-1} * c_k` kernels (with `c_{-1} = c_in`), encoder biases
//! `sum c_k`, decoder biases `c_in + sum_{k<S} c_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamestate::{CHANNELS, GRID};
use crate::nn::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, derive_seed, mse_loss, relu, relu_backward,
    tconv2d_backward, tconv2d_forward, xavier_init, ConvParams, GradCheck,
};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDecoderConfig {
    pub input_channels: usize,
    /// Output channels of the stem followed by each stride-2 stage.
    pub channels: Vec<usize>,
}

impl Default for EncoderDecoderConfig {
    fn default() -> Self {
        Self::from_base(CHANNELS, 32, 3)
    }
}

impl EncoderDecoderConfig {
    /// Stem of `base` channels then `down_stages` doublings.
    pub fn from_base(input_channels: usize, base: usize, down_stages: usize) -> Self {
        EncoderDecoderConfig {
            input_channels,
            channels: (0..=down_stages).map(|k| base << k).collect(),
        }
    }

    pub fn down_stages(&self) -> usize {
        self.channels.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.channels.is_empty() || self.channels[0] == 0 {
            return Err(Error::invalid("encoder-decoder needs non-zero input and stem channels"));
        }
        for w in self.channels.windows(2) {
            if w[1] != 2 * w[0] {
                return Err(Error::invalid(format!(
                    "channels must double at every stride-2 stage, got {:?}",
                    self.channels
                )));
            }
        }
        Ok(())
    }

    /// Input extent must survive `down_stages` halvings exactly.
    pub fn check_extent(&self, extent: usize) -> Result<()> {
        let div = 1usize << self.down_stages();
        if extent == 0 || extent % div != 0 {
            return Err(Error::invalid(format!(
                "spatial extent {extent} is not divisible by {div}"
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let mut prev = self.input_channels;
        let mut n = 0;
        for &c in &self.channels {
            n += 9 * prev * c + c + prev;
            prev = c;
        }
        n
    }
}

/// Encoder stages plus untied decoder biases; decoder kernels are the
/// encoder kernels themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderDecoder<T: Real = f32> {
    config: EncoderDecoderConfig,
    encoder: Vec<ConvParams<T>>,
    /// `decoder_bias[k]` belongs to decoder stage `k`, which uses encoder
    /// stage `S-1-k` (`S` = encoder length).
    decoder_bias: Vec<Tensor<T>>,
}

/// Gradients in [`EncoderDecoder::named_params`] order.
#[derive(Clone, Debug)]
pub struct EncoderDecoderGrads<T: Real = f32> {
    pub encoder_kernel: Vec<Tensor<T>>,
    pub encoder_bias: Vec<Tensor<T>>,
    pub decoder_bias: Vec<Tensor<T>>,
}

impl<T: Real> EncoderDecoderGrads<T> {
    pub fn into_vec(self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for (k, b) in self.encoder_kernel.into_iter().zip(self.encoder_bias) {
            out.push(k);
            out.push(b);
        }
        out.extend(self.decoder_bias);
        out
    }
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T: Real> {
    /// Encoder inputs `h_0 = x .. h_{S-1}` and the bottleneck `h_S`.
    enc_act: Vec<Tensor<T>>,
    enc_pre: Vec<Tensor<T>>,
    /// Decoder inputs `d_0 = h_S .. d_{S-1}`.
    dec_act: Vec<Tensor<T>>,
    dec_pre: Vec<Tensor<T>>,
    /// Pre-activation output including the skip.
    out_pre: Tensor<T>,
}

impl<T: Real> EncoderDecoder<T> {
    /// Xavier-uniform kernels (one derived seed per stage), zero biases.
    pub fn new(config: EncoderDecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::new();
        let mut prev = config.input_channels;
        for (k, &c) in config.channels.iter().enumerate() {
            let kernel = xavier_init(&[c, prev, 3, 3], derive_seed(seed, k as u64));
            let stride = if k == 0 { 1 } else { 2 };
            encoder.push(ConvParams::new(kernel, Tensor::zeros(&[c]), stride)?);
            prev = c;
        }
        let decoder_bias = encoder.iter().rev().map(|e| Tensor::zeros(&[e.in_channels()])).collect();
        Ok(EncoderDecoder {
            config,
            encoder,
            decoder_bias,
        })
    }

    /// Every kernel and bias zero.
    pub fn zeroed(config: EncoderDecoderConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        for (_, t) in m.named_params_mut() {
            t.fill(T::ZERO);
        }
        Ok(m)
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    pub fn encoder(&self) -> &[ConvParams<T>] {
        &self.encoder
    }

    pub fn stages(&self) -> usize {
        self.encoder.len()
    }

    /// Encoder stage whose kernel decoder stage `k` uses.
    pub fn paired_encoder(&self, k: usize) -> usize {
        self.stages() - 1 - k
    }

    pub fn decoder_kernel(&self, k: usize) -> &Tensor<T> {
        &self.encoder[self.paired_encoder(k)].kernel
    }

    pub fn decoder_bias(&self, k: usize) -> &Tensor<T> {
        &self.decoder_bias[k]
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Each stored tensor once; tied kernels appear under the encoder name.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, e) in self.encoder.iter().enumerate() {
            out.push((format!("enc{i}.kernel"), &e.kernel));
            out.push((format!("enc{i}.bias"), &e.bias));
        }
        for (k, b) in self.decoder_bias.iter().enumerate() {
            out.push((format!("dec{k}.bias"), b));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, e) in self.encoder.iter_mut().enumerate() {
            out.push((format!("enc{i}.kernel"), &mut e.kernel));
            out.push((format!("enc{i}.bias"), &mut e.bias));
        }
        for (k, b) in self.decoder_bias.iter_mut().enumerate() {
            out.push((format!("dec{k}.bias"), b));
        }
        out
    }

    /// Rebuilds a network from [`named_params`](Self::named_params) output.
    pub fn from_named(tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<String, Tensor<T>> = tensors.into_iter().collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor {name}")))
        };
        let mut encoder = Vec::new();
        let mut i = 0;
        loop {
            let name = format!("enc{i}.kernel");
            let kernel = match take(&name) {
                Ok(k) => k,
                Err(_) if i > 0 => break,
                Err(e) => return Err(e),
            };
            let bias = take(&format!("enc{i}.bias"))?;
            encoder.push(ConvParams::new(kernel, bias, if i == 0 { 1 } else { 2 })?);
            i += 1;
        }
        let decoder_bias = (0..encoder.len())
            .map(|k| take(&format!("dec{k}.bias")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = map.keys().next() {
            return Err(Error::invalid(format!("unexpected tensor {extra} for an encoder-decoder")));
        }
        let config = EncoderDecoderConfig {
            input_channels: encoder[0].in_channels(),
            channels: encoder.iter().map(|e| e.out_channels()).collect(),
        };
        config.validate()?;
        for (k, b) in decoder_bias.iter().enumerate() {
            let want = encoder[encoder.len() - 1 - k].in_channels();
            if b.shape() != [want] {
                return Err(Error::ShapeMismatch {
                    op: "decoder bias",
                    left: b.shape().to_vec(),
                    right: vec![want],
                });
            }
        }
        for w in encoder.windows(2) {
            if w[1].in_channels() != w[0].out_channels() {
                return Err(Error::invalid("encoder stages do not chain"));
            }
        }
        Ok(EncoderDecoder {
            config,
            encoder,
            decoder_bias,
        })
    }

    pub fn cast<U: Real>(&self) -> EncoderDecoder<U> {
        EncoderDecoder {
            config: self.config.clone(),
            encoder: self
                .encoder
                .iter()
                .map(|e| ConvParams {
                    kernel: e.kernel.cast(),
                    bias: e.bias.cast(),
                    stride: e.stride,
                })
                .collect(),
            decoder_bias: self.decoder_bias.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = x.dims4()?;
        if c != self.config.input_channels {
            return Err(Error::ShapeMismatch {
                op: "encoder-decoder input channels",
                left: x.shape().to_vec(),
                right: vec![0, self.config.input_channels, GRID, GRID],
            });
        }
        self.config.check_extent(h)?;
        self.config.check_extent(w)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let s = self.stages();
        let mut enc_act = vec![x.clone()];
        let mut enc_pre = Vec::with_capacity(s);
        for e in &self.encoder {
            let z = conv2d_forward(enc_act.last().expect("non-empty"), e)?;
            enc_act.push(relu(&z));
            enc_pre.push(z);
        }
        let mut dec_act = vec![enc_act.pop().expect("bottleneck")];
        let mut dec_pre = Vec::with_capacity(s);
        for k in 0..s {
            let e = &self.encoder[self.paired_encoder(k)];
            let u = tconv2d_forward(dec_act.last().expect("non-empty"), &e.kernel, &self.decoder_bias[k], e.stride)?;
            if k + 1 < s {
                dec_act.push(relu(&u));
            }
            dec_pre.push(u);
        }
        let mut out_pre = dec_pre.last().expect("at least one stage").clone();
        out_pre.add_assign(x)?;
        let out = relu(&out_pre);
        Ok((
            out,
            ForwardCache {
                enc_act,
                enc_pre,
                dec_act,
                dec_pre,
                out_pre,
            },
        ))
    }

    /// Parameter gradients given `dL/d out`. Tied kernels receive the sum of
    /// their encoder and decoder contributions.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &Tensor<T>) -> Result<EncoderDecoderGrads<T>> {
        let s = self.stages();
        let mut kernel_grad: Vec<Option<Tensor<T>>> = vec![None; s];
        let mut decoder_bias = vec![None; s];
        let mut g = relu_backward(&cache.out_pre, upstream)?;
        for k in (0..s).rev() {
            if k + 1 < s {
                g = relu_backward(&cache.dec_pre[k], &g)?;
            }
            let e = &self.encoder[self.paired_encoder(k)];
            let gr = tconv2d_backward(&cache.dec_act[k], &e.kernel, e.stride, &g, true)?;
            kernel_grad[self.paired_encoder(k)] = Some(gr.kernel);
            decoder_bias[k] = Some(gr.bias);
            g = gr.input.expect("requested");
        }
        let mut encoder_bias = vec![None; s];
        for i in (0..s).rev() {
            g = relu_backward(&cache.enc_pre[i], &g)?;
            let input = &cache.enc_act[i];
            let gr = if i == 0 {
                conv2d_backward_params(input, &self.encoder[i], &g)?
            } else {
                conv2d_backward(input, &self.encoder[i], &g)?
            };
            let total = kernel_grad[i].as_mut().expect("decoder pass filled every stage");
            total.add_assign(&gr.kernel)?;
            encoder_bias[i] = Some(gr.bias);
            if let Some(next) = gr.input {
                g = next;
            }
        }
        let unwrap = |v: Vec<Option<Tensor<T>>>| v.into_iter().map(|t| t.expect("filled")).collect();
        Ok(EncoderDecoderGrads {
            encoder_kernel: unwrap(kernel_grad),
            encoder_bias: unwrap(encoder_bias),
            decoder_bias: unwrap(decoder_bias),
        })
    }
}

/// `mse(ed(input), target)` over every stored parameter, for gradient
/// checking in 64-bit arithmetic.
#[derive(Clone, Debug)]
pub struct EncoderDecoderMse {
    pub model: EncoderDecoder<f64>,
    pub input: Tensor<f64>,
    pub target: Tensor<f64>,
}

impl EncoderDecoderMse {
    /// Random network, input and target on a `(1, c, extent, extent)`
    /// instance. Biases are drawn away from zero so no ReLU input sits
    /// exactly on its kink.
    pub fn random(config: EncoderDecoderConfig, extent: usize, seed: u64) -> Result<Self> {
        config.check_extent(extent)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let mut model = EncoderDecoder::<f64>::new(config.clone(), derive_seed(seed, 0))?;
        for (_, t) in model.named_params_mut() {
            if t.rank() == 1 {
                t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.05..0.3));
            }
        }
        let shape = [1, config.input_channels, extent, extent];
        let n: usize = shape.iter().product();
        // Sparse unit counts, with hidden extra units in the target.
        let input: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.1) { rng.gen_range(1..4) as f64 } else { 0.0 })
            .collect();
        let target = input
            .iter()
            .map(|&v| if rng.gen_bool(0.1) { v + rng.gen_range(1..3) as f64 } else { v })
            .collect();
        Ok(EncoderDecoderMse {
            model,
            input: Tensor::from_vec(&shape, input)?,
            target: Tensor::from_vec(&shape, target)?,
        })
    }
}

impl GradCheck for EncoderDecoderMse {
    fn params(&self) -> Vec<f64> {
        self.model.named_params().iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    fn set_params(&mut self, values: &[f64]) {
        let mut off = 0;
        for (_, t) in self.model.named_params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }

    fn loss(&self) -> Result<f64> {
        Ok(mse_loss(&self.model.forward(&self.input)?, &self.target)?.0)
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        let (out, cache) = self.model.forward_cached(&self.input)?;
        let g = mse_loss(&out, &self.target)?.1;
        let grads = self.model.backward(&cache, &g)?;
        Ok(grads.into_vec().iter().flat_map(|t| t.data().iter().copied()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn small() -> EncoderDecoderConfig {
        EncoderDecoderConfig::from_base(3, 2, 2)
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        let c = EncoderDecoderConfig::default();
        assert_eq!(c.channels, vec![32, 64, 128, 256]);
        let kernels = 9 * (66 * 32 + 32 * 64 + 64 * 128 + 128 * 256);
        let biases = (32 + 64 + 128 + 256) + (66 + 32 + 64 + 128);
        assert_eq!(c.parameter_count(), kernels + biases);
        assert_eq!(c.parameter_count(), 406_850);
        assert_eq!(EncoderDecoder::<f32>::new(c, 1).unwrap().parameter_count(), 406_850);
    }

    #[test]
    fn doubling_rule_enforced() {
        let bad = EncoderDecoderConfig {
            input_channels: 66,
            channels: vec![32, 48, 96],
        };
        assert!(EncoderDecoder::<f32>::new(bad, 0).is_err());
    }

    #[test]
    fn zero_network_is_identity() {
        let m = EncoderDecoder::<f64>::zeroed(small()).unwrap();
        let x = random(&[2, 3, 8, 8], &mut ChaCha8Rng::seed_from_u64(1), 0.0, 5.0);
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_layer_by_layer_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m = EncoderDecoder::<f64>::new(small(), 5).unwrap();
        for (_, t) in m.named_params_mut() {
            if t.rank() == 1 {
                *t = random(t.shape(), &mut rng, -0.3, 0.3);
            }
        }
        let x = random(&[2, 3, 8, 8], &mut rng, 0.0, 3.0);

        let mut h = x.clone();
        for e in m.encoder() {
            h = relu(&conv2d_forward(&h, e).unwrap());
        }
        let stages = m.stages();
        for k in 0..stages {
            let stride = m.encoder()[m.paired_encoder(k)].stride;
            h = tconv2d_forward(&h, m.decoder_kernel(k), m.decoder_bias(k), stride).unwrap();
            if k + 1 < stages {
                h = relu(&h);
            }
        }
        h.add_assign(&x).unwrap();
        let expect = relu(&h);

        assert!(m.forward(&x).unwrap().max_abs_diff(&expect) <= 1e-12);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = EncoderDecoder::<f32>::new(small(), 9).unwrap();
        assert_eq!(a, EncoderDecoder::new(small(), 9).unwrap());
        assert_ne!(a, EncoderDecoder::new(small(), 10).unwrap());
    }

    #[test]
    fn zero_input_output_is_nonnegative() {
        let m = EncoderDecoder::<f64>::new(small(), 3).unwrap();
        let out = m.forward(&Tensor::zeros(&[1, 3, 8, 8])).unwrap();
        assert!(out.is_finite() && out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn reduced_full_width_gradient_check() {
        let cfg = EncoderDecoderConfig::from_base(CHANNELS, 2, 2);
        let mut net = EncoderDecoderMse::random(cfg, 8, 12).unwrap();
        let err = grad_check(&mut net, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn rejects_bad_extent() {
        let m = EncoderDecoder::<f64>::new(small(), 3).unwrap();
        assert!(m.forward(&Tensor::zeros(&[1, 3, 6, 6])).is_err());
        assert!(m.forward(&Tensor::zeros(&[1, 4, 8, 8])).is_err());
    }

    #[test]
    fn tied_network_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = EncoderDecoder::<f64>::new(small(), 2).unwrap();
        for (_, t) in m.named_params_mut() {
            if t.rank() == 1 {
                *t = random(t.shape(), &mut rng, 0.05, 0.3);
            }
        }
        let mut net = EncoderDecoderMse {
            model: m,
            input: random(&[2, 3, 8, 8], &mut rng, 0.0, 2.0),
            target: random(&[2, 3, 8, 8], &mut rng, 0.0, 4.0),
        };
        let err = grad_check(&mut net, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
