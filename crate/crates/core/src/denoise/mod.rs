//! Classical denoisers used as baselines: total variation, wavelet
//! shrinkage and anisotropic diffusion.

mod diffusion;
mod tv;
mod wavelet;

use std::fmt;

use crate::datasets::Image;
use crate::error::Result;

pub use diffusion::{anisotropic_diffusion, Conductance, DiffusionParams};
pub use tv::{divergence, gradient, rof_energy, total_variation, tv_denoise, ChambolleTv, TvParams};
pub use wavelet::{
    bayes_threshold, dwt2, estimate_noise_sigma, idwt2, idwt2_padded, max_levels, soft_threshold, wavelet_denoise,
    DetailBands, Plane, WaveletBasis, WaveletParams, WaveletPyramid,
};

/// A classical denoiser together with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Denoiser {
    Tv(TvParams),
    Wavelet(WaveletParams),
    Diffusion(DiffusionParams),
}

impl Denoiser {
    pub fn apply(&self, image: &Image) -> Result<Image> {
        match self {
            Denoiser::Tv(p) => tv_denoise(image, p),
            Denoiser::Wavelet(p) => wavelet_denoise(image, p),
            Denoiser::Diffusion(p) => anisotropic_diffusion(image, p),
        }
    }

    /// Short name used in reports and file names.
    pub fn name(&self) -> &'static str {
        match self {
            Denoiser::Tv(_) => "tv",
            Denoiser::Wavelet(_) => "wavelet",
            Denoiser::Diffusion(_) => "ad",
        }
    }
}

impl fmt::Display for Denoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Smooth vertical step: a tanh ramp from 0.25 to 0.75 across the middle column.
///
/// The reference image for the baseline efficacy checks.
pub fn smooth_step(size: usize) -> Image {
    let mid = (size as f64 - 1.0) / 2.0;
    let width = size as f64 / 32.0;
    Image::from_fn(size, size, |_, c| 0.5 + 0.25 * ((c as f64 - mid) / width).tanh())
}
