//! Desk-scale stand-in for retinal OCT scans.
//!
//! Every image is a stack of bright, gently curved horizontal layers over a
//! dim background. The classes differ in one pathology each:
//!
//! * `NORMAL`: layers only.
//! * `DRUSEN`: the bottom (brightest) layer is lifted by localized bumps.
//! * `DME`: dark elliptical voids inside the inner layers.
//! * `CNV`: a bright irregular blob near the bottom layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassLabel, Image, LabeledDataset, LabeledSample};
use crate::seed::derive_seed;

struct Layer {
    offset: f64,
    width: f64,
    amplitude: f64,
}

fn gaussian(d: f64, width: f64) -> f64 {
    (-0.5 * (d / width).powi(2)).exp()
}

/// Renders one sample of `label`, quantized to 8-bit levels.
pub fn render_sample(label: ClassLabel, size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let background = rng.random_range(0.15..0.22);
    let top = rng.random_range(0.28..0.40) * s;
    let slope = rng.random_range(-0.08..0.08);
    let curvature = rng.random_range(-0.25..0.25);
    let thickness = rng.random_range(0.9..1.1);
    let layers = [
        Layer {
            offset: 0.0,
            width: 0.025 * s,
            amplitude: rng.random_range(0.45..0.6),
        },
        Layer {
            offset: 0.10 * s * thickness,
            width: 0.035 * s,
            amplitude: rng.random_range(0.25..0.35),
        },
        Layer {
            offset: 0.20 * s * thickness,
            width: 0.03 * s,
            amplitude: rng.random_range(0.35..0.45),
        },
        Layer {
            offset: 0.30 * s * thickness,
            width: 0.03 * s,
            amplitude: rng.random_range(0.6..0.7),
        },
    ];
    let surface = move |x: f64| {
        let u = x / s - 0.5;
        top + slope * u * s + curvature * u * u * s
    };
    let rpe = layers.len() - 1;

    // (centre x, height, half-width) of drusen bumps lifting the bottom layer
    let bumps: Vec<(f64, f64, f64)> = match label {
        ClassLabel::Drusen => (0..rng.random_range(1..=2))
            .map(|_| {
                (
                    rng.random_range(0.2..0.8) * s,
                    rng.random_range(0.14..0.20) * s,
                    rng.random_range(0.08..0.12) * s,
                )
            })
            .collect(),
        _ => Vec::new(),
    };
    // (centre x, centre y offset from surface, radius x, radius y)
    let voids: Vec<(f64, f64, f64, f64)> = match label {
        ClassLabel::Dme => (0..rng.random_range(1..=2))
            .map(|_| {
                (
                    rng.random_range(0.25..0.75) * s,
                    rng.random_range(0.12..0.18) * s * thickness,
                    rng.random_range(0.12..0.18) * s,
                    rng.random_range(0.08..0.11) * s,
                )
            })
            .collect(),
        _ => Vec::new(),
    };
    // (centre x, centre y offset from surface, spread, amplitude)
    let blob: Vec<(f64, f64, f64, f64)> = match label {
        ClassLabel::Cnv => {
            let cx = rng.random_range(0.25..0.75) * s;
            let cy = rng.random_range(0.24..0.30) * s * thickness;
            (0..rng.random_range(2..=4))
                .map(|_| {
                    (
                        cx + rng.random_range(-0.07..0.07) * s,
                        cy + rng.random_range(-0.04..0.04) * s,
                        rng.random_range(0.06..0.09) * s,
                        rng.random_range(0.45..0.6),
                    )
                })
                .collect()
        }
        _ => Vec::new(),
    };

    let image = Image::from_fn(size, size, |row, col| {
        let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
        let base = surface(x);
        let lift: f64 = bumps.iter().map(|&(bx, h, w)| h * gaussian(x - bx, w)).sum();
        let mut v = background;
        for (k, layer) in layers.iter().enumerate() {
            let mut centre = base + layer.offset;
            if k == rpe {
                centre -= lift;
            }
            v += layer.amplitude * gaussian(y - centre, layer.width);
        }
        for &(vx, vy, rx, ry) in &voids {
            let r2 = ((x - vx) / rx).powi(2) + ((y - base - vy) / ry).powi(2);
            // smooth-edged dark cavity
            let depth = 1.0 / (1.0 + (6.0 * (r2 - 1.0)).exp());
            v = v * (1.0 - depth) + 0.05 * depth;
        }
        for &(bx, by, spread, amp) in &blob {
            let d = ((x - bx).powi(2) + (y - base - by).powi(2)).sqrt();
            v += amp * gaussian(d, spread);
        }
        v
    });
    image.quantized()
}

fn split_counts(n: usize) -> (usize, usize, usize) {
    let held = if n >= 3 {
        ((n as f64 * 0.1).round() as usize).max(1)
    } else {
        0
    };
    (n - 2 * held, held, held)
}

/// Generates `n_per_class` images per class and splits each class 80/10/10.
///
/// Samples are ordered class-major in [`ClassLabel::ALL`] order. Held-out
/// splits get `max(1, round(n/10))` samples per class once `n_per_class >= 3`;
/// smaller requests put everything in `train`.
pub fn make_synthetic(n_per_class: usize, size: usize, seed: u64) -> LabeledDataset {
    assert!(n_per_class >= 1 && size >= 1, "n_per_class and size must be positive");
    let (n_train, n_val, _) = split_counts(n_per_class);
    let mut ds = LabeledDataset::default();
    for label in ClassLabel::ALL {
        for i in 0..n_per_class {
            let sample = LabeledSample {
                image: render_sample(label, size, derive_seed(seed, &[label.index() as u64, i as u64])),
                label,
                source_path: None,
            };
            let target = if i < n_train {
                &mut ds.train
            } else if i < n_train + n_val {
                &mut ds.val
            } else {
                &mut ds.test
            };
            target.push(sample);
        }
    }
    ds
}
