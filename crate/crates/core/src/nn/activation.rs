use crate::error::Result;
use crate::tensor::{ensure_same_shape, Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes `upstream` where the pre-activation was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    ensure_same_shape("relu_backward", input, upstream)?;
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::ZERO {
            *g = T::ZERO;
        }
    }
    Ok(out)
}
