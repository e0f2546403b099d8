//! Orthonormal 2-D wavelet transform and BayesShrink soft thresholding.
//!
//! The transform is separable and periodized on a domain padded (by
//! half-sample symmetric extension) to a multiple of `2^levels`, which keeps
//! it exactly orthonormal: reconstruction is perfect and energy is preserved
//! on the padded domain.

use std::f64::consts::SQRT_2;

use crate::datasets::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveletBasis {
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Daubechies4,
}

impl WaveletBasis {
    fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletBasis::Haar => vec![1.0 / SQRT_2, 1.0 / SQRT_2],
            WaveletBasis::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature mirror `g[n] = (-1)^n h[L-1-n]`.
    fn filters(self) -> (Vec<f64>, Vec<f64>) {
        let h = self.lowpass();
        let g = (0..h.len())
            .map(|n| {
                if n % 2 == 0 {
                    h[h.len() - 1 - n]
                } else {
                    -h[h.len() - 1 - n]
                }
            })
            .collect();
        (h, g)
    }
}

/// Wavelet denoising configuration. Shrinkage is always soft thresholding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WaveletParams {
    pub levels: usize,
    pub basis: WaveletBasis,
}

impl Default for WaveletParams {
    fn default() -> Self {
        WaveletParams {
            levels: 3,
            basis: WaveletBasis::Haar,
        }
    }
}

/// Row-major block of coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn zeros(rows: usize, cols: usize) -> Self {
        Plane {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }
}

/// Detail subbands of one decomposition level.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailBands {
    /// Lowpass along rows, highpass down columns.
    pub horizontal: Plane,
    /// Highpass along rows, lowpass down columns.
    pub vertical: Plane,
    pub diagonal: Plane,
}

impl DetailBands {
    pub fn bands(&self) -> [&Plane; 3] {
        [&self.horizontal, &self.vertical, &self.diagonal]
    }

    pub fn bands_mut(&mut self) -> [&mut Plane; 3] {
        [&mut self.horizontal, &mut self.vertical, &mut self.diagonal]
    }
}

/// Multi-level decomposition. `details[0]` is the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub approx: Plane,
    pub details: Vec<DetailBands>,
    pub basis: WaveletBasis,
    /// Extents of the source image before padding.
    pub height: usize,
    pub width: usize,
}

impl WaveletPyramid {
    /// Every coefficient, approximation first.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.approx
            .data
            .iter()
            .chain(
                self.details
                    .iter()
                    .flat_map(|d| d.bands().into_iter().flat_map(|b| b.data.iter())),
            )
            .copied()
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        let scale = 1 << self.details.len();
        (self.approx.rows * scale, self.approx.cols * scale)
    }
}

fn analyze(x: &[f64], h: &[f64], g: &[f64], low: &mut [f64], high: &mut [f64]) {
    let n = x.len();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for (j, (&hj, &gj)) in h.iter().zip(g).enumerate() {
            let v = x[(2 * k + j) % n];
            a += hj * v;
            d += gj * v;
        }
        low[k] = a;
        high[k] = d;
    }
}

fn synthesize(low: &[f64], high: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for k in 0..n / 2 {
        for (j, (&hj, &gj)) in h.iter().zip(g).enumerate() {
            out[(2 * k + j) % n] += hj * low[k] + gj * high[k];
        }
    }
}

/// One separable analysis step of a `rows x cols` plane (both even).
fn analyze_plane(src: &Plane, h: &[f64], g: &[f64]) -> (Plane, DetailBands) {
    let (rows, cols) = (src.rows, src.cols);
    let (hr, hc) = (rows / 2, cols / 2);
    // rows: [rows x hc] low and high halves
    let mut row_low = Plane::zeros(rows, hc);
    let mut row_high = Plane::zeros(rows, hc);
    for r in 0..rows {
        analyze(
            &src.data[r * cols..(r + 1) * cols],
            h,
            g,
            &mut row_low.data[r * hc..(r + 1) * hc],
            &mut row_high.data[r * hc..(r + 1) * hc],
        );
    }
    let columns = |p: &Plane| -> (Plane, Plane) {
        let mut lo = Plane::zeros(hr, hc);
        let mut hi = Plane::zeros(hr, hc);
        let mut col = vec![0.0; rows];
        let (mut a, mut d) = (vec![0.0; hr], vec![0.0; hr]);
        for c in 0..hc {
            for r in 0..rows {
                col[r] = p.data[r * hc + c];
            }
            analyze(&col, h, g, &mut a, &mut d);
            for r in 0..hr {
                lo.data[r * hc + c] = a[r];
                hi.data[r * hc + c] = d[r];
            }
        }
        (lo, hi)
    };
    let (ll, horizontal) = columns(&row_low);
    let (vertical, diagonal) = columns(&row_high);
    (
        ll,
        DetailBands {
            horizontal,
            vertical,
            diagonal,
        },
    )
}

fn synthesize_plane(approx: &Plane, bands: &DetailBands, h: &[f64], g: &[f64]) -> Plane {
    let (hr, hc) = (approx.rows, approx.cols);
    let (rows, cols) = (hr * 2, hc * 2);
    let columns = |lo: &Plane, hi: &Plane| -> Plane {
        let mut out = Plane::zeros(rows, hc);
        let (mut a, mut d) = (vec![0.0; hr], vec![0.0; hr]);
        let mut col = vec![0.0; rows];
        for c in 0..hc {
            for r in 0..hr {
                a[r] = lo.data[r * hc + c];
                d[r] = hi.data[r * hc + c];
            }
            synthesize(&a, &d, h, g, &mut col);
            for r in 0..rows {
                out.data[r * hc + c] = col[r];
            }
        }
        out
    };
    let row_low = columns(approx, &bands.horizontal);
    let row_high = columns(&bands.vertical, &bands.diagonal);
    let mut out = Plane::zeros(rows, cols);
    for r in 0..rows {
        synthesize(
            &row_low.data[r * hc..(r + 1) * hc],
            &row_high.data[r * hc..(r + 1) * hc],
            h,
            g,
            &mut out.data[r * cols..(r + 1) * cols],
        );
    }
    out
}

fn symmetric_index(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 1 - i
    }
}

/// Largest usable depth: `floor(log2(min(height, width)))`.
pub fn max_levels(height: usize, width: usize) -> usize {
    height.min(width).ilog2() as usize
}

/// Forward transform with `levels` decomposition steps.
pub fn dwt2(image: &Image, levels: usize, basis: WaveletBasis) -> Result<WaveletPyramid> {
    let (height, width) = (image.height(), image.width());
    if levels == 0 || levels > max_levels(height, width) {
        return Err(Error::InvalidArgument(format!(
            "{levels} wavelet levels invalid for a {height}x{width} image (at most {})",
            max_levels(height, width)
        )));
    }
    let block = 1 << levels;
    let rows = height.div_ceil(block) * block;
    let cols = width.div_ceil(block) * block;
    let mut current = Plane::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            current.data[r * cols + c] = image.get(symmetric_index(r, height), symmetric_index(c, width));
        }
    }
    let (h, g) = basis.filters();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (approx, bands) = analyze_plane(&current, &h, &g);
        details.push(bands);
        current = approx;
    }
    Ok(WaveletPyramid {
        approx: current,
        details,
        basis,
        height,
        width,
    })
}

/// Inverse transform on the padded domain, without cropping or clipping.
pub fn idwt2_padded(pyramid: &WaveletPyramid) -> Plane {
    let (h, g) = pyramid.basis.filters();
    pyramid
        .details
        .iter()
        .rev()
        .fold(pyramid.approx.clone(), |approx, bands| {
            synthesize_plane(&approx, bands, &h, &g)
        })
}

/// Inverse transform cropped to the source extents and clipped to `[0, 1]`.
pub fn idwt2(pyramid: &WaveletPyramid) -> Image {
    let plane = idwt2_padded(pyramid);
    let (height, width) = (pyramid.height, pyramid.width);
    Image::from_fn(height, width, |r, c| plane.data[r * plane.cols + c])
}

/// `sign(c) · max(|c| − t, 0)` elementwise.
pub fn soft_threshold(coeffs: &[f64], threshold: f64) -> Result<Vec<f64>> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be >= 0, got {threshold}"
        )));
    }
    Ok(coeffs
        .iter()
        .map(|&c| c.signum() * (c.abs() - threshold).max(0.0))
        .collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust noise level `median(|c|) / 0.6745` from the finest diagonal subband.
pub fn estimate_noise_sigma(finest_diagonal: &[f64]) -> f64 {
    if finest_diagonal.is_empty() {
        return 0.0;
    }
    let mut magnitudes: Vec<f64> = finest_diagonal.iter().map(|c| c.abs()).collect();
    median(&mut magnitudes) / 0.6745
}

/// BayesShrink threshold `σ_n² / σ_x`, with `σ_x = √max(E[c²] − σ_n², 0)`.
///
/// The subband second moment stands in for its variance (detail bands are
/// zero-mean). When the signal estimate vanishes the largest coefficient
/// magnitude is returned, which zeroes the whole subband.
pub fn bayes_threshold(subband: &[f64], sigma_noise: f64) -> Result<f64> {
    if subband.is_empty() {
        return Err(Error::InvalidArgument("empty subband".into()));
    }
    if !(sigma_noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be >= 0, got {sigma_noise}"
        )));
    }
    if sigma_noise == 0.0 {
        return Ok(0.0);
    }
    let second_moment = subband.iter().map(|c| c * c).sum::<f64>() / subband.len() as f64;
    let noise_var = sigma_noise * sigma_noise;
    let sigma_signal = (second_moment - noise_var).max(0.0).sqrt();
    if sigma_signal == 0.0 {
        return Ok(subband.iter().fold(0.0, |m, c| m.max(c.abs())));
    }
    Ok(noise_var / sigma_signal)
}

/// BayesShrink denoising: shrink every detail subband, keep the approximation.
pub fn wavelet_denoise(image: &Image, params: &WaveletParams) -> Result<Image> {
    let mut pyramid = dwt2(image, params.levels, params.basis)?;
    let sigma = estimate_noise_sigma(&pyramid.details[0].diagonal.data);
    for level in &mut pyramid.details {
        for band in level.bands_mut() {
            let t = bayes_threshold(&band.data, sigma)?;
            band.data = soft_threshold(&band.data, t)?;
        }
    }
    Ok(idwt2(&pyramid))
}
