//! 3x3 convolution (padding 1, stride 1 or 2) and its transpose.
//!
//! Both directions lower to GEMM over an im2col buffer, one sample at a
//! time. Samples are processed in parallel but kernel/bias gradients are
//! reduced in sample order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const KERNEL: usize = 3;
pub const PADDING: usize = 1;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T: Real = f32> {
    /// `(out_ch, in_ch, 3, 3)`.
    pub kernel: Tensor<T>,
    /// `(out_ch,)`.
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernel: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        let p = ConvParams { kernel, bias, stride };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        ConvParams {
            kernel: Tensor::zeros(&[out_ch, in_ch, KERNEL, KERNEL]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        validate_kernel(&self.kernel, self.stride)?;
        if self.bias.shape() != [self.out_channels()] {
            return Err(Error::ShapeMismatch {
                op: "conv bias",
                left: self.bias.shape().to_vec(),
                right: vec![self.out_channels()],
            });
        }
        Ok(())
    }
}

fn validate_kernel<T: Real>(kernel: &Tensor<T>, stride: usize) -> Result<()> {
    match kernel.shape() {
        [_, _, KERNEL, KERNEL] => {}
        other => {
            return Err(Error::invalid(format!(
                "kernel must have shape (out, in, 3, 3), got {other:?}"
            )))
        }
    }
    if stride != 1 && stride != 2 {
        return Err(Error::invalid(format!("stride must be 1 or 2, got {stride}")));
    }
    Ok(())
}

/// Gradients of one convolution (or transpose convolution) layer.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real = f32> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Output extent of a padded 3x3 convolution along one axis.
pub fn conv_out_extent(extent: usize, stride: usize) -> usize {
    (extent + 2 * PADDING - KERNEL) / stride + 1
}

/// Output extent of the transpose convolution paired with a stride-`stride`
/// encoder stage. The output adjustment (`stride - 1`) makes it the exact
/// inverse of [`conv_out_extent`] on even extents.
pub fn tconv_out_extent(extent: usize, stride: usize) -> usize {
    stride * (extent - 1) + KERNEL - 2 * PADDING + (stride - 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    ho: usize,
    wo: usize,
    stride: usize,
}

impl Geometry {
    fn in_plane(&self) -> usize {
        self.ci * self.h * self.w
    }
    fn out_plane(&self) -> usize {
        self.co * self.ho * self.wo
    }
    fn positions(&self) -> usize {
        self.ho * self.wo
    }
    fn rows(&self) -> usize {
        self.ci * TAPS
    }
}

/// Unfolds `x` (ci, h, w) into `cols` (ci*9, ho*wo).
fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.positions();
    for i in 0..g.ci {
        let plane = &x[i * g.h * g.w..(i + 1) * g.h * g.w];
        for dy in 0..KERNEL {
            for dx in 0..KERNEL {
                let row = &mut cols[((i * TAPS) + dy * KERNEL + dx) * p..][..p];
                for y in 0..g.ho {
                    let yy = (y * g.stride + dy) as isize - PADDING as isize;
                    let out_row = &mut row[y * g.wo..(y + 1) * g.wo];
                    if yy < 0 || yy >= g.h as isize {
                        out_row.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[yy as usize * g.w..(yy as usize + 1) * g.w];
                    for (x, o) in out_row.iter_mut().enumerate() {
                        let xx = (x * g.stride + dx) as isize - PADDING as isize;
                        *o = if xx < 0 || xx >= g.w as isize {
                            T::ZERO
                        } else {
                            src[xx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Folds `cols` (ci*9, ho*wo) back into `x` (ci, h, w), accumulating.
fn col2im<T: Real>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let p = g.positions();
    for i in 0..g.ci {
        let plane = &mut x[i * g.h * g.w..(i + 1) * g.h * g.w];
        for dy in 0..KERNEL {
            for dx in 0..KERNEL {
                let row = &cols[((i * TAPS) + dy * KERNEL + dx) * p..][..p];
                for y in 0..g.ho {
                    let yy = (y * g.stride + dy) as isize - PADDING as isize;
                    if yy < 0 || yy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[yy as usize * g.w..(yy as usize + 1) * g.w];
                    for (x, &v) in row[y * g.wo..(y + 1) * g.wo].iter().enumerate() {
                        let xx = (x * g.stride + dx) as isize - PADDING as isize;
                        if xx >= 0 && xx < g.w as isize {
                            dst[xx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// out (co, P) = K (co, ci*9) . cols (ci*9, P) [+ bias]
fn forward_sample<T: Real>(x: &[T], kernel: &[T], bias: Option<&[T]>, g: &Geometry) -> Vec<T> {
    let p = g.positions();
    let mut cols = vec![T::ZERO; g.rows() * p];
    im2col(x, g, &mut cols);
    let mut out = vec![T::ZERO; g.out_plane()];
    if let Some(bias) = bias {
        for (o, &b) in bias.iter().enumerate() {
            out[o * p..(o + 1) * p].fill(b);
        }
    }
    let beta = if bias.is_some() { T::ONE } else { T::ZERO };
    let k = g.rows() as isize;
    T::gemm(g.co, g.rows(), p, T::ONE, kernel, k, 1, &cols, p as isize, 1, beta, &mut out, p as isize, 1);
    out
}

/// dcols (ci*9, P) = K^T (ci*9, co) . up (co, P), folded into (ci, h, w).
fn input_grad_sample<T: Real>(up: &[T], kernel: &[T], g: &Geometry) -> Vec<T> {
    let p = g.positions();
    let rows = g.rows();
    let mut dcols = vec![T::ZERO; rows * p];
    T::gemm(rows, g.co, p, T::ONE, kernel, 1, rows as isize, up, p as isize, 1, T::ZERO, &mut dcols, p as isize, 1);
    let mut dx = vec![T::ZERO; g.in_plane()];
    col2im(&dcols, g, &mut dx);
    dx
}

/// dK (co, ci*9) = up (co, P) . cols^T (P, ci*9)
fn kernel_grad_sample<T: Real>(x: &[T], up: &[T], g: &Geometry) -> Vec<T> {
    let p = g.positions();
    let rows = g.rows();
    let mut cols = vec![T::ZERO; rows * p];
    im2col(x, g, &mut cols);
    let mut dk = vec![T::ZERO; g.co * rows];
    T::gemm(g.co, p, rows, T::ONE, up, p as isize, 1, &cols, 1, p as isize, T::ZERO, &mut dk, rows as isize, 1);
    dk
}

fn geometry<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<(usize, Geometry)> {
    validate_kernel(kernel, stride)?;
    let [n, ci, h, w] = input.dims4()?;
    let [co, kci, _, _] = [kernel.shape()[0], kernel.shape()[1], 0, 0];
    if ci != kci {
        return Err(Error::ShapeMismatch {
            op: "conv2d input channels",
            left: input.shape().to_vec(),
            right: kernel.shape().to_vec(),
        });
    }
    let g = Geometry {
        ci,
        h,
        w,
        co,
        ho: conv_out_extent(h, stride),
        wo: conv_out_extent(w, stride),
        stride,
    };
    Ok((n, g))
}

fn concat<T: Real>(parts: Vec<Vec<T>>, shape: &[usize]) -> Result<Tensor<T>> {
    let data: Vec<T> = parts.into_iter().flatten().collect();
    Tensor::from_vec(shape, data)
}

fn sum_in_order<T: Real>(parts: Vec<Vec<T>>, shape: &[usize]) -> Tensor<T> {
    let mut acc = Tensor::zeros(shape);
    for part in parts {
        for (a, v) in acc.data_mut().iter_mut().zip(part) {
            *a += v;
        }
    }
    acc
}

fn bias_grad<T: Real>(upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = upstream.dims4()?;
    let plane = h * w;
    let mut grad = vec![T::ZERO; c];
    for b in 0..n {
        let s = upstream.sample(b);
        for (o, g) in grad.iter_mut().enumerate() {
            *g += s[o * plane..(o + 1) * plane].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(&[c], grad)
}

fn conv_forward_raw<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (n, g) = geometry(input, kernel, stride)?;
    let outs: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|b| forward_sample(input.sample(b), kernel.data(), bias.map(|t| t.data()), &g))
        .collect();
    concat(outs, &[n, g.co, g.ho, g.wo])
}

/// Padded 3x3 convolution: `out[b,o,y,x] = bias[o] + sum K[o,i,dy,dx] * xpad[b,i,y*s+dy,x*s+dx]`.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    params.validate()?;
    conv_forward_raw(input, &params.kernel, Some(&params.bias), params.stride)
}

/// Analytic gradients of [`conv2d_forward`], including the input gradient.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    conv_backward_raw(input, &params.kernel, params.stride, upstream, true)
}

/// Like [`conv2d_backward`] but skips the input gradient (first layers).
pub fn conv2d_backward_params<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    conv_backward_raw(input, &params.kernel, params.stride, upstream, false)
}

fn conv_backward_raw<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let (n, g) = geometry(input, kernel, stride)?;
    if upstream.shape() != [n, g.co, g.ho, g.wo] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward upstream",
            left: upstream.shape().to_vec(),
            right: vec![n, g.co, g.ho, g.wo],
        });
    }
    let kernel_parts: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|b| kernel_grad_sample(input.sample(b), upstream.sample(b), &g))
        .collect();
    let grad_kernel = sum_in_order(kernel_parts, kernel.shape());
    let grad_input = if need_input {
        let parts: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|b| input_grad_sample(upstream.sample(b), kernel.data(), &g))
            .collect();
        Some(concat(parts, input.shape())?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: bias_grad(upstream)?,
    })
}

fn tconv_geometry<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<(usize, Geometry)> {
    validate_kernel(kernel, stride)?;
    let [n, co, h, w] = input.dims4()?;
    if co != kernel.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "tconv2d input channels",
            left: input.shape().to_vec(),
            right: kernel.shape().to_vec(),
        });
    }
    // Geometry is expressed from the paired convolution's point of view:
    // its input is our output.
    let g = Geometry {
        ci: kernel.shape()[1],
        h: tconv_out_extent(h, stride),
        w: tconv_out_extent(w, stride),
        co,
        ho: h,
        wo: w,
        stride,
    };
    debug_assert_eq!(conv_out_extent(g.h, stride), h);
    Ok((n, g))
}

/// Transpose convolution with a kernel borrowed from the paired encoder
/// stage. Equal to the input gradient of [`conv2d_forward`] for upstream
/// `input`, plus the (untied) decoder bias.
pub fn tconv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (n, g) = tconv_geometry(input, kernel, stride)?;
    if bias.shape() != [g.ci] {
        return Err(Error::ShapeMismatch {
            op: "tconv2d bias",
            left: bias.shape().to_vec(),
            right: vec![g.ci],
        });
    }
    let plane = g.h * g.w;
    let outs: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mut out = input_grad_sample(input.sample(b), kernel.data(), &g);
            for (i, &bv) in bias.data().iter().enumerate() {
                out[i * plane..(i + 1) * plane].iter_mut().for_each(|v| *v += bv);
            }
            out
        })
        .collect();
    concat(outs, &[n, g.ci, g.h, g.w])
}

/// Gradients of [`tconv2d_forward`]. The kernel gradient has the shape of
/// the shared encoder kernel and must be added to the encoder's own.
pub fn tconv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let (n, g) = tconv_geometry(input, kernel, stride)?;
    if upstream.shape() != [n, g.ci, g.h, g.w] {
        return Err(Error::ShapeMismatch {
            op: "tconv2d_backward upstream",
            left: upstream.shape().to_vec(),
            right: vec![n, g.ci, g.h, g.w],
        });
    }
    // The transpose of the transpose is the forward convolution.
    let kernel_parts: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|b| kernel_grad_sample(upstream.sample(b), input.sample(b), &g))
        .collect();
    let grad_kernel = sum_in_order(kernel_parts, kernel.shape());
    let grad_input = if need_input {
        Some(conv_forward_raw(upstream, kernel, None, stride)?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: bias_grad(upstream)?,
    })
}
