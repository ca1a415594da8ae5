use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`. Fans include the
/// kernel's receptive field; rank-2 shapes are `(out, in)`.
pub fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
        [out, inp] => (*inp, *out),
        [n] => (*n, *n),
        _ => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier-uniform weights; rank-1 (bias) shapes come back zeroed. Samples are
/// drawn in f64 so both precisions see the same initial values.
pub fn xavier_init<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    if shape.len() == 1 {
        return Tensor::zeros(shape);
    }
    let bound = xavier_bound(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// SplitMix64 step; gives each layer its own stream from one model seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
