//! im2col-based 2-D convolution kernels.
//!
//! Convolution is cross-correlation: the kernel is not flipped. The transposed
//! convolution is the exact adjoint of [`conv2d_forward`] for the same kernel,
//! stride and padding.

use super::{gemm, Scalar};
use crate::error::{Error, Result};

/// Output extent of a strided convolution, or `None` when the kernel does not fit.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * padding {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

/// Output extent of a transposed convolution: `(input - 1) * stride - 2 * padding + kernel`.
pub fn conv_transpose_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return None;
    }
    let full = (input - 1) * stride + kernel;
    (full > 2 * padding).then(|| full - 2 * padding)
}

/// Spatial geometry of a convolution from a `height x width` plane to `out_h x out_w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source offset in a padded coordinate, or `None` when it falls in the padding.
    #[inline]
    fn source(&self, out: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Gathers `[C*kh*kw, out_h*out_w]` patches of one `[C, H, W]` image.
pub(crate) fn im2col<T: Scalar>(g: &Geometry, image: &[T], cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, i, g.height) else {
                        dst[oy * g.out_w..(oy + 1) * g.out_w].fill(T::zero());
                        continue;
                    };
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match g.source(ox, j, g.width) {
                            Some(x) => plane[y * g.width + x],
                            None => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch columns back into a `[C, H, W]` image (adjoint of [`im2col`]).
pub(crate) fn col2im<T: Scalar>(g: &Geometry, cols: &[T], image: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, i, g.height) else { continue };
                    for ox in 0..g.out_w {
                        if let Some(x) = g.source(ox, j, g.width) {
                            plane[y * g.width + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Shapes of a validated convolution call.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvShape {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Geometry from the wide side (conv input / transposed-conv output) to the narrow side.
    pub geometry: Geometry,
}

fn dims4(op: &'static str, shape: &[usize]) -> Result<[usize; 4]> {
    match shape {
        &[a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::shape(op, format!("expected rank-4 tensor, got {shape:?}"))),
    }
}

pub(crate) fn conv2d_shape(
    input: &[usize],
    kernel: &[usize],
    bias: &[usize],
    stride: usize,
    padding: usize,
) -> Result<ConvShape> {
    const OP: &str = "conv2d";
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
    }
    let [n, c, h, w] = dims4(OP, input)?;
    let [o, kc, kh, kw] = dims4(OP, kernel)?;
    if kc != c {
        return Err(Error::shape(OP, format!("kernel expects {kc} channels, input has {c}")));
    }
    if bias != [o] {
        return Err(Error::shape(OP, format!("bias {bias:?} for {o} output channels")));
    }
    let (Some(out_h), Some(out_w)) = (
        conv_output_extent(h, kh, stride, padding),
        conv_output_extent(w, kw, stride, padding),
    ) else {
        return Err(Error::shape(
            OP,
            format!("kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"),
        ));
    };
    Ok(ConvShape {
        batch: n,
        in_channels: c,
        out_channels: o,
        geometry: Geometry {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            padding,
            out_h,
            out_w,
        },
    })
}

pub(crate) fn conv_transpose2d_shape(
    input: &[usize],
    kernel: &[usize],
    bias: &[usize],
    stride: usize,
    padding: usize,
) -> Result<ConvShape> {
    const OP: &str = "conv_transpose2d";
    if stride == 0 {
        return Err(Error::InvalidArgument(
            "conv_transpose2d stride must be positive".into(),
        ));
    }
    let [n, c, h, w] = dims4(OP, input)?;
    let [kc, o, kh, kw] = dims4(OP, kernel)?;
    if kc != c {
        return Err(Error::shape(OP, format!("kernel expects {kc} channels, input has {c}")));
    }
    if bias != [o] {
        return Err(Error::shape(OP, format!("bias {bias:?} for {o} output channels")));
    }
    let (Some(out_h), Some(out_w)) = (
        conv_transpose_output_extent(h, kh, stride, padding),
        conv_transpose_output_extent(w, kw, stride, padding),
    ) else {
        return Err(Error::shape(
            OP,
            format!("padding {padding} too large for kernel {kh}x{kw}"),
        ));
    };
    Ok(ConvShape {
        batch: n,
        in_channels: c,
        out_channels: o,
        geometry: Geometry {
            channels: o,
            height: out_h,
            width: out_w,
            kh,
            kw,
            stride,
            padding,
            out_h: h,
            out_w: w,
        },
    })
}

impl ConvShape {
    pub fn conv_output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.geometry.out_h, self.geometry.out_w]
    }

    pub fn transpose_output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.geometry.height, self.geometry.width]
    }

    fn wide_len(&self) -> usize {
        self.geometry.channels * self.geometry.height * self.geometry.width
    }

    fn cols_len(&self) -> usize {
        self.geometry.col_rows() * self.geometry.col_cols()
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Scalar>(grad_out: &[T], channels: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for (idx, chunk) in grad_out.chunks(plane).enumerate() {
        db[idx % channels] += chunk.iter().copied().sum();
    }
    db
}

pub(crate) fn conv2d_forward<T: Scalar>(s: &ConvShape, input: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let g = &s.geometry;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = s.wide_len();
    let out_len = s.out_channels * ncols;
    let mut out = vec![T::zero(); s.batch * out_len];
    let mut cols = vec![T::zero(); s.cols_len()];
    for n in 0..s.batch {
        im2col(g, &input[n * in_len..(n + 1) * in_len], &mut cols);
        gemm(
            false,
            false,
            s.out_channels,
            ncols,
            rows,
            kernel,
            &cols,
            T::zero(),
            &mut out[n * out_len..(n + 1) * out_len],
        );
    }
    add_bias(&mut out, bias, ncols);
    out
}

/// Gradients of a convolution; each is computed only when requested.
pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    s: &ConvShape,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let g = &s.geometry;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = s.wide_len();
    let out_len = s.out_channels * ncols;
    let mut d_input = want[0].then(|| vec![T::zero(); s.batch * in_len]);
    let mut d_kernel = want[1].then(|| vec![T::zero(); kernel.len()]);
    let mut cols = vec![T::zero(); s.cols_len()];
    for n in 0..s.batch {
        let dy = &grad_out[n * out_len..(n + 1) * out_len];
        if let Some(dk) = d_kernel.as_mut() {
            im2col(g, &input[n * in_len..(n + 1) * in_len], &mut cols);
            gemm(false, true, s.out_channels, rows, ncols, dy, &cols, T::one(), dk);
        }
        if let Some(dx) = d_input.as_mut() {
            gemm(
                true,
                false,
                rows,
                ncols,
                s.out_channels,
                kernel,
                dy,
                T::zero(),
                &mut cols,
            );
            col2im(g, &cols, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: want[2].then(|| bias_grad(grad_out, s.out_channels, ncols)),
    }
}

pub(crate) fn conv_transpose2d_forward<T: Scalar>(s: &ConvShape, input: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let g = &s.geometry;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = s.in_channels * ncols;
    let out_len = s.wide_len();
    let mut out = vec![T::zero(); s.batch * out_len];
    let mut cols = vec![T::zero(); s.cols_len()];
    for n in 0..s.batch {
        gemm(
            true,
            false,
            rows,
            ncols,
            s.in_channels,
            kernel,
            &input[n * in_len..(n + 1) * in_len],
            T::zero(),
            &mut cols,
        );
        col2im(g, &cols, &mut out[n * out_len..(n + 1) * out_len]);
    }
    add_bias(&mut out, bias, g.height * g.width);
    out
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    s: &ConvShape,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let g = &s.geometry;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = s.in_channels * ncols;
    let out_len = s.wide_len();
    let mut d_input = want[0].then(|| vec![T::zero(); s.batch * in_len]);
    let mut d_kernel = want[1].then(|| vec![T::zero(); kernel.len()]);
    let mut cols = vec![T::zero(); s.cols_len()];
    if d_input.is_some() || d_kernel.is_some() {
        for n in 0..s.batch {
            im2col(g, &grad_out[n * out_len..(n + 1) * out_len], &mut cols);
            if let Some(dx) = d_input.as_mut() {
                gemm(
                    false,
                    false,
                    s.in_channels,
                    ncols,
                    rows,
                    kernel,
                    &cols,
                    T::zero(),
                    &mut dx[n * in_len..(n + 1) * in_len],
                );
            }
            if let Some(dk) = d_kernel.as_mut() {
                gemm(
                    false,
                    true,
                    s.in_channels,
                    rows,
                    ncols,
                    &input[n * in_len..(n + 1) * in_len],
                    &cols,
                    T::one(),
                    dk,
                );
            }
        }
    }
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias: want[2].then(|| bias_grad(grad_out, s.out_channels, g.height * g.width)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extents() {
        assert_eq!(conv_output_extent(32, 4, 2, 1), Some(16));
        assert_eq!(conv_output_extent(5, 3, 1, 1), Some(5));
        assert_eq!(conv_output_extent(2, 5, 1, 1), None);
        assert_eq!(conv_output_extent(5, 3, 0, 1), None);
        assert_eq!(conv_transpose_output_extent(16, 4, 2, 1), Some(32));
        assert_eq!(conv_transpose_output_extent(4, 2, 2, 0), Some(8));
        assert_eq!(conv_transpose_output_extent(1, 2, 1, 1), None);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let g = Geometry {
            channels: 2,
            height: 5,
            width: 4,
            kh: 3,
            kw: 2,
            stride: 2,
            padding: 1,
            out_h: conv_output_extent(5, 3, 2, 1).unwrap(),
            out_w: conv_output_extent(4, 2, 2, 1).unwrap(),
        };
        let x: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let c: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| ((i * 5) % 13) as f64 - 6.0)
            .collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&g, &x, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&g, &c, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
