use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub struct MaxPoolOutput<T: Real> {
    pub output: Tensor<T>,
    /// Flat index into the input of each output element's maximum.
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major
/// window order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<MaxPoolOutput<T>> {
    let [n, c, h, w] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("maxpool2 needs even spatial extents, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = base + (2 * y) * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(MaxPoolOutput {
        output: Tensor::from_vec(&[n, c, ho, wo], out)?,
        argmax,
    })
}

pub fn maxpool2_backward<T: Real>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.len() != argmax.len() {
        return Err(Error::invalid(format!(
            "maxpool2_backward: {} upstream values for {} windows",
            upstream.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &u) in argmax.iter().zip(upstream.data()) {
        g[idx] += u;
    }
    Ok(grad)
}
