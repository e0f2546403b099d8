//! Denoising toolkit for speckle-prone retinal OCT images.
//!
//! A convolutional autoencoder trained with a frozen disease classifier as
//! regularizer, the three classical baselines it is compared against (total
//! variation, BayesShrink wavelet shrinkage, Perona–Malik diffusion), and the
//! metrics and harness used to benchmark them side by side.

pub mod datasets;
pub mod denoise;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Adam, AdamConfig, Scalar, Tape, Tensor, Var};
