//! PSNR and classification accuracy, aggregated per denoising method.

use log::warn;

use crate::datasets::Image;
use crate::error::{Error, Result};

/// Peak signal-to-noise ratio in dB for `[0, 1]` images (peak value 1).
///
/// Identical images have zero error and yield `f64::INFINITY`; report
/// aggregation skips that value.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if !reference.same_dims(test) {
        return Err(Error::shape(
            "psnr",
            format!(
                "{}x{} vs {}x{}",
                reference.height(),
                reference.width(),
                test.height(),
                test.width()
            ),
        ));
    }
    let n = reference.pixels().len() as f64;
    let mse = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Percentage of positions where `predicted` matches `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(
            "accuracy",
            format!("{} predictions for {} labels", predicted.len(), truth.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// `K x K` counts with rows indexed by true class and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(
                "confusion_matrix",
                format!("{} predictions for {} labels", predicted.len(), truth.len()),
            ));
        }
        let mut counts = vec![0; classes * classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            if let Some(&label) = [p, t].iter().find(|&&l| l >= classes) {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            counts[t * classes + p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[usize] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn trace(&self) -> usize {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn confusion_matrix(predicted: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::new(predicted, truth, classes)
}

/// One row of a benchmark table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    /// Classification accuracy in percent, when a classifier was evaluated.
    pub accuracy: Option<f64>,
    pub mean_ms_per_image: f64,
    pub n_images: usize,
}

impl MetricReport {
    /// Aggregates per-image PSNRs and timings. Infinite PSNRs are left out
    /// of the mean and standard deviation with a warning.
    pub fn from_samples(
        method: impl Into<String>,
        psnrs: &[f64],
        accuracy: Option<f64>,
        millis: &[f64],
    ) -> Result<Self> {
        let method = method.into();
        if psnrs.is_empty() {
            return Err(Error::InvalidArgument(format!("no images evaluated for {method}")));
        }
        if let Some(acc) = accuracy {
            if !(0.0..=100.0).contains(&acc) {
                return Err(Error::InvalidArgument(format!("accuracy {acc} outside [0, 100]")));
            }
        }
        let finite: Vec<f64> = psnrs.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() < psnrs.len() {
            warn!(
                "{method}: {} of {} images reconstructed exactly (infinite PSNR) and are excluded from the mean",
                psnrs.len() - finite.len(),
                psnrs.len()
            );
        }
        let (psnr_mean, psnr_std) = mean_std(&finite).unwrap_or((f64::INFINITY, 0.0));
        let mean_ms_per_image = mean_std(millis).map_or(0.0, |(m, _)| m);
        Ok(MetricReport {
            method,
            psnr_mean,
            psnr_std,
            accuracy,
            mean_ms_per_image,
            n_images: psnrs.len(),
        })
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
