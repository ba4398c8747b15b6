//! Convolution as a batched matrix product over flattened receptive fields.
//!
//! A field for output position `(u, v)` gathers input entries
//! `Y(m, i, u·D + h − P, v·D + w − P)` for every channel `i` and kernel offset
//! `(h, w)`, flattened in `(i, h, w)` row-major order so that a column of `Θ`
//! is the matching flattened kernel. Out-of-range reads are zero padding.

use ndarray::{Array4, Axis};

use super::{Activation, AugmentedParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type Tensor4 = Array4<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, "same" padding for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }

    /// Length of a flattened receptive field, `C·H·W`.
    pub fn field_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// `(U + 2P − H)/D + 1`, rejecting configurations that do not divide exactly.
    pub fn output_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
        {
            return Err(Error::config(format!("conv spec has a zero dimension: {self:?}")));
        }
        let axis = |len: usize, k: usize, name: &str| -> Result<usize> {
            let padded = len + 2 * self.padding;
            if padded < k {
                return Err(Error::config(format!(
                    "kernel {name} {k} exceeds padded input {padded}"
                )));
            }
            let span = padded - k;
            if span % self.stride != 0 {
                return Err(Error::config(format!(
                    "({len} + 2·{} − {k}) is not divisible by stride {}",
                    self.padding, self.stride
                )));
            }
            Ok(span / self.stride + 1)
        };
        Ok((axis(in_h, self.kernel_h, "height")?, axis(in_w, self.kernel_w, "width")?))
    }

    fn check_input(&self, y_prev: &Tensor4) -> Result<(usize, usize)> {
        let (_, c, h, w) = y_prev.dim();
        if c != self.in_channels {
            return Err(Error::dim(format!(
                "input has {c} channels, conv expects {}",
                self.in_channels
            )));
        }
        self.output_dims(h, w)
    }

    #[inline]
    fn source(&self, out: usize, k: usize, len: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
    }
}

/// Receptive fields as an `M×(C·H·W)×U×V` tensor.
pub fn extract_receptive_fields(y_prev: &Tensor4, spec: &ConvSpec) -> Result<Tensor4> {
    let (uo, vo) = spec.check_input(y_prev)?;
    let (m, c, h_in, w_in) = y_prev.dim();
    let mut out = Tensor4::zeros((m, spec.field_len(), uo, vo));
    for mi in 0..m {
        for i in 0..c {
            for kh in 0..spec.kernel_h {
                for kw in 0..spec.kernel_w {
                    let f = (i * spec.kernel_h + kh) * spec.kernel_w + kw;
                    for u in 0..uo {
                        let Some(r) = spec.source(u, kh, h_in) else { continue };
                        for v in 0..vo {
                            if let Some(q) = spec.source(v, kw, w_in) {
                                out[[mi, f, u, v]] = y_prev[[mi, i, r, q]];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Augmented field matrix with one row per `(m, u, v)` (row-major) and a
/// trailing ones column: `(M·U·V)×(C·H·W + 1)`.
pub fn im2col_augmented(y_prev: &Tensor4, spec: &ConvSpec) -> Result<Matrix> {
    let (uo, vo) = spec.check_input(y_prev)?;
    let (m, c, h_in, w_in) = y_prev.dim();
    let k = spec.field_len();
    let mut x = Matrix::zeros((m * uo * vo, k + 1));
    let src = y_prev.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let dst = x.as_slice_mut().expect("standard layout");
    for mi in 0..m {
        for u in 0..uo {
            for v in 0..vo {
                let row = ((mi * uo + u) * vo + v) * (k + 1);
                for i in 0..c {
                    for kh in 0..spec.kernel_h {
                        let Some(r) = spec.source(u, kh, h_in) else { continue };
                        let base = ((mi * c + i) * h_in + r) * w_in;
                        let fbase = row + (i * spec.kernel_h + kh) * spec.kernel_w;
                        for kw in 0..spec.kernel_w {
                            if let Some(q) = spec.source(v, kw, w_in) {
                                dst[fbase + kw] = src[base + q];
                            }
                        }
                    }
                }
                dst[row + k] = 1.0;
            }
        }
    }
    Ok(x)
}

/// Scatter-adds field-matrix gradients `(M·U·V)×(C·H·W)` back onto the input
/// tensor of shape `in_dims`.
pub(crate) fn col2im(
    dcols: &Matrix,
    spec: &ConvSpec,
    in_dims: (usize, usize, usize, usize),
) -> Result<Tensor4> {
    let (m, c, h_in, w_in) = in_dims;
    let (uo, vo) = spec.output_dims(h_in, w_in)?;
    let k = spec.field_len();
    if dcols.dim() != (m * uo * vo, k) {
        return Err(Error::dim("col2im gradient has the wrong shape"));
    }
    let mut out = Tensor4::zeros(in_dims);
    let src = dcols.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for mi in 0..m {
        for u in 0..uo {
            for v in 0..vo {
                let row = ((mi * uo + u) * vo + v) * k;
                for i in 0..c {
                    for kh in 0..spec.kernel_h {
                        let Some(r) = spec.source(u, kh, h_in) else { continue };
                        let base = ((mi * c + i) * h_in + r) * w_in;
                        let fbase = row + (i * spec.kernel_h + kh) * spec.kernel_w;
                        for kw in 0..spec.kernel_w {
                            if let Some(q) = spec.source(v, kw, w_in) {
                                dst[base + q] += src[fbase + kw];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reshapes an augmented field matrix back to the `M×(C·H·W)×U×V` layout of
/// [`extract_receptive_fields`], dropping the ones column.
pub fn fields_tensor(x_aug: &Matrix, m: usize, u: usize, v: usize) -> Tensor4 {
    let k = x_aug.ncols() - 1;
    Tensor4::from_shape_fn((m, k, u, v), |(mi, f, ui, vi)| x_aug[[(mi * u + ui) * v + vi, f]])
}

/// `(M·U·V)×C` matrix → `M×C×U×V` tensor.
pub(crate) fn rows_to_tensor(zmat: Matrix, m: usize, u: usize, v: usize) -> Tensor4 {
    let c = zmat.ncols();
    zmat.into_shape_with_order((m, u, v, c))
        .expect("row count is M·U·V")
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned()
}

/// `M×C×U×V` tensor → `(M·U·V)×C` matrix.
pub(crate) fn tensor_to_rows(t: &Tensor4) -> Matrix {
    let (m, c, u, v) = t.dim();
    t.view()
        .permuted_axes([0, 2, 3, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((m * u * v, c))
        .expect("contiguous")
}

#[derive(Debug, Clone)]
pub struct ConvOutput {
    pub z: Tensor4,
    pub y: Tensor4,
    /// Augmented field matrix, `(M·U·V)×(C·H·W + 1)`.
    pub x_aug: Matrix,
}

pub fn conv_forward(
    y_prev: &Tensor4,
    params: &AugmentedParams,
    spec: &ConvSpec,
    activation: Activation,
) -> Result<ConvOutput> {
    if params.theta.dim() != (spec.field_len() + 1, spec.out_channels) {
        return Err(Error::dim(format!(
            "conv Θ is {:?}, spec needs ({}, {})",
            params.theta.dim(),
            spec.field_len() + 1,
            spec.out_channels
        )));
    }
    let (uo, vo) = spec.check_input(y_prev)?;
    let m = y_prev.len_of(Axis(0));
    let x_aug = im2col_augmented(y_prev, spec)?;
    let z = rows_to_tensor(x_aug.dot(&params.theta), m, uo, vo);
    let y = activation.apply(&z);
    Ok(ConvOutput { z, y, x_aug })
}

/// Non-overlapping max pooling with a square window (stride = window).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub size: usize,
}

impl MaxPool {
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.size == 0 || h % self.size != 0 || w % self.size != 0 || h == 0 || w == 0 {
            return Err(Error::config(format!(
                "{h}x{w} input not divisible by pool size {}",
                self.size
            )));
        }
        Ok((h / self.size, w / self.size))
    }

    /// Returns the pooled tensor and, per output element, the flat index of
    /// the selected input element. Ties go to the first element in row-major
    /// window order.
    pub fn forward(&self, y: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
        let (m, c, h, w) = y.dim();
        let (ho, wo) = self.output_dims(h, w)?;
        let src = y.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let mut out = Tensor4::zeros((m, c, ho, wo));
        let mut argmax = Vec::with_capacity(m * c * ho * wo);
        let dst = out.as_slice_mut().expect("standard layout");
        let mut o = 0;
        for plane in 0..m * c {
            let base = plane * h * w;
            for ui in 0..ho {
                for vi in 0..wo {
                    let mut best = base + ui * self.size * w + vi * self.size;
                    for a in 0..self.size {
                        for b in 0..self.size {
                            let idx = base + (ui * self.size + a) * w + vi * self.size + b;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    dst[o] = src[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
        Ok((out, argmax))
    }

    pub(crate) fn backward(
        grad_out: &Tensor4,
        argmax: &[usize],
        in_dims: (usize, usize, usize, usize),
    ) -> Tensor4 {
        let mut g = Tensor4::zeros(in_dims);
        let dst = g.as_slice_mut().expect("standard layout");
        for (&idx, &gv) in argmax.iter().zip(grad_out.iter()) {
            dst[idx] += gv;
        }
        g
    }
}
