//! 2-D cross-correlation over `H x W x C` tensors with `K x K x C x F` kernels.

use crate::error::{dim_err, Result};
use crate::ops::gemm::{gemm, Trans};
use crate::tensor::Tensor;

/// Geometry of one convolution, validated once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub filters: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        (in_h, in_w, in_c): (usize, usize, usize),
        kernel: usize,
        filters: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 || kernel == 0 {
            return Err(dim_err!("conv: kernel and stride must be positive"));
        }
        if in_h + 2 * pad < kernel || in_w + 2 * pad < kernel {
            return Err(dim_err!(
                "conv: padded input {}x{} smaller than kernel {kernel}",
                in_h + 2 * pad,
                in_w + 2 * pad
            ));
        }
        Ok(Self {
            in_h,
            in_w,
            in_c,
            kernel,
            filters,
            stride,
            pad,
            out_h: (in_h + 2 * pad - kernel) / stride + 1,
            out_w: (in_w + 2 * pad - kernel) / stride + 1,
        })
    }

    fn from_tensors(input: &Tensor, kernels: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let (h, w, c) = input.hwc()?;
        let (k, f) = match kernels.shape()[..] {
            [k1, k2, kc, f] if k1 == k2 && kc == c => (k1, f),
            _ => {
                return Err(dim_err!(
                    "conv: kernels {:?} incompatible with input {:?}",
                    kernels.shape(),
                    input.shape()
                ))
            }
        };
        Self::new((h, w, c), k, f, stride, pad)
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Zero-padded patches laid out `(out_h * out_w) x (K * K * C)`, patch
    /// order `(ky, kx, c)` to match the kernel tensor.
    fn im2col(&self, input: &[f32]) -> Vec<f32> {
        let pl = self.patch_len();
        let c = self.in_c;
        let mut cols = vec![0.0f32; self.out_positions() * pl];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &mut cols[(oy * self.out_w + ox) * pl..][..pl];
                for ky in 0..self.kernel {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..self.kernel {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let src = (iy as usize * self.in_w + ix as usize) * c;
                        let dst = (ky * self.kernel + kx) * c;
                        row[dst..dst + c].copy_from_slice(&input[src..src + c]);
                    }
                }
            }
        }
        cols
    }

    fn col2im_add(&self, cols: &[f32], out: &mut [f32]) {
        let pl = self.patch_len();
        let c = self.in_c;
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &cols[(oy * self.out_w + ox) * pl..][..pl];
                for ky in 0..self.kernel {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..self.kernel {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let dst = (iy as usize * self.in_w + ix as usize) * c;
                        let src = (ky * self.kernel + kx) * c;
                        for (o, v) in out[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = ConvGeometry::from_tensors(input, kernels, stride, pad)?;
    if bias.len() != g.filters {
        return Err(dim_err!(
            "conv: bias has {} entries for {} filters",
            bias.len(),
            g.filters
        ));
    }
    let positions = g.out_positions();
    let mut out = Vec::with_capacity(positions * g.filters);
    for _ in 0..positions {
        out.extend_from_slice(bias.data());
    }
    let cols = g.im2col(input.data());
    gemm(
        positions,
        g.patch_len(),
        g.filters,
        &cols,
        Trans::No,
        kernels.data(),
        Trans::No,
        1.0,
        &mut out,
    );
    Tensor::new(&[g.out_h, g.out_w, g.filters], out)
}

pub fn conv2d_backward(
    upstream: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let mut kgrad = Tensor::zeros(kernels.shape());
    let mut bgrad = Tensor::zeros(&[kernels.shape()[3]]);
    let input_grad = conv2d_backward_accumulate(
        upstream,
        input,
        kernels,
        stride,
        pad,
        &mut kgrad,
        &mut bgrad,
        true,
    )?
    .expect("input gradient requested");
    Ok(ConvGrads {
        input: input_grad,
        kernels: kgrad,
        bias: bgrad,
    })
}

/// Adds kernel and bias gradients into the given accumulators and, when
/// `want_input` is set, returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_accumulate(
    upstream: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
    kernel_grad: &mut Tensor,
    bias_grad: &mut Tensor,
    want_input: bool,
) -> Result<Option<Tensor>> {
    let g = ConvGeometry::from_tensors(input, kernels, stride, pad)?;
    if upstream.shape() != [g.out_h, g.out_w, g.filters] {
        return Err(dim_err!(
            "conv backward: upstream {:?}, expected {:?}",
            upstream.shape(),
            [g.out_h, g.out_w, g.filters]
        ));
    }
    kernel_grad.ensure_same_shape(kernels)?;
    if bias_grad.len() != g.filters {
        return Err(dim_err!("conv backward: bias gradient size"));
    }
    let positions = g.out_positions();
    let pl = g.patch_len();
    let dy = upstream.data();

    for row in dy.chunks_exact(g.filters) {
        for (b, v) in bias_grad.data_mut().iter_mut().zip(row) {
            *b += v;
        }
    }

    let cols = g.im2col(input.data());
    gemm(
        pl,
        positions,
        g.filters,
        &cols,
        Trans::Yes,
        dy,
        Trans::No,
        1.0,
        kernel_grad.data_mut(),
    );

    if !want_input {
        return Ok(None);
    }
    let mut dcols = vec![0.0f32; positions * pl];
    gemm(
        positions,
        g.filters,
        pl,
        dy,
        Trans::No,
        kernels.data(),
        Trans::Yes,
        0.0,
        &mut dcols,
    );
    let mut dx = vec![0.0f32; input.len()];
    g.col2im_add(&dcols, &mut dx);
    Ok(Some(Tensor::new(input.shape(), dx)?))
}
