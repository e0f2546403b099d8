//! Seeded inputs shared by the benchmarks, so every run times the same work.

use octdenoise::datasets::{corrupt, images_to_tensor, make_synthetic, Image};
use octdenoise::denoise::smooth_step;
use octdenoise::Tensor;

/// Noise level used throughout the benchmarks.
pub const SIGMA: f64 = 0.1;

/// The smooth-step reference image corrupted at [`SIGMA`].
pub fn noisy_step(size: usize) -> Image {
    corrupt(&smooth_step(size), SIGMA, 2024).expect("sigma is valid")
}

/// A batch of `n` corrupted synthetic scans at the given resolution.
pub fn noisy_batch(n: usize, size: usize) -> Tensor<f32> {
    let data = make_synthetic(n.div_ceil(4).max(10), size, 7);
    let noisy: Vec<Image> = data
        .train
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, s)| corrupt(&s.image, SIGMA, i as u64).expect("sigma is valid"))
        .collect();
    images_to_tensor(&noisy).expect("images share one size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_have_the_requested_shapes() {
        assert_eq!(noisy_step(48).height(), 48);
        assert_eq!(noisy_batch(16, 32).shape(), [16, 1, 32, 32]);
    }
}
