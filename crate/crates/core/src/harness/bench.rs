//! Side-by-side evaluation of every denoising method on one test split.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use crate::datasets::{corrupt, Image, LabeledSample};
use crate::denoise::{anisotropic_diffusion, tv_denoise, wavelet_denoise, DiffusionParams, TvParams, WaveletParams};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, psnr, MetricReport};
use crate::models::{Autoencoder, Classifier};
use crate::seed::derive_seed;

/// A column of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// The corrupted input itself, without denoising.
    Corrupted,
    Tv,
    Wavelet,
    Ad,
    Ae,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Corrupted, Method::Tv, Method::Wavelet, Method::Ad, Method::Ae];

    pub fn name(self) -> &'static str {
        match self {
            Method::Corrupted => "corrupted",
            Method::Tv => "tv",
            Method::Wavelet => "wavelet",
            Method::Ad => "ad",
            Method::Ae => "ae",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?} (expected one of corrupted, tv, wavelet, ad, ae)"
                ))
            })
    }
}

/// Parses a comma-separated method list, dropping duplicates but keeping order.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    Ok(out)
}

/// Parameters of the classical methods.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MethodParams {
    pub tv: TvParams,
    pub wavelet: WaveletParams,
    pub diffusion: DiffusionParams,
}

/// Noise seed of test image `index`, shared by every method.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

/// Runs `method` on an already corrupted image.
pub fn apply_method(
    method: Method,
    noisy: &Image,
    params: &MethodParams,
    autoencoder: Option<&Autoencoder<f32>>,
) -> Result<Image> {
    match method {
        Method::Corrupted => Ok(noisy.clone()),
        Method::Tv => tv_denoise(noisy, &params.tv),
        Method::Wavelet => wavelet_denoise(noisy, &params.wavelet),
        Method::Ad => anisotropic_diffusion(noisy, &params.diffusion),
        Method::Ae => {
            let ae = autoencoder.ok_or_else(|| Error::Config("method ae requires an autoencoder checkpoint".into()))?;
            let out = ae.reconstruct(&noisy.to_tensor())?;
            Image::from_tensor(&out, 0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sigma: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub params: MethodParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sigma: 0.1,
            methods: Method::ALL.to_vec(),
            seed: 0,
            params: MethodParams::default(),
        }
    }
}

/// One method's outcome on one test image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageResult {
    pub method: Method,
    pub index: usize,
    pub psnr: f64,
    pub predicted: Option<usize>,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    /// One row per requested method, in request order.
    pub reports: Vec<MetricReport>,
    pub per_image: Vec<ImageResult>,
}

fn check_size(what: &str, expected: usize, image: &Image) -> Result<()> {
    if image.height() == expected && image.width() == expected {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} expects {expected}x{expected} images, test images are {}x{}",
            image.height(),
            image.width()
        )))
    }
}

/// Evaluates every method on every sample.
///
/// Each image is corrupted once with [`image_seed`], so all methods see the
/// same noisy input. Accuracy is reported when a classifier is supplied; it
/// classifies each method's output and is excluded from the timing.
pub fn run_bench(
    samples: &[LabeledSample],
    config: &BenchConfig,
    classifier: Option<&Classifier<f32>>,
    autoencoder: Option<&Autoencoder<f32>>,
) -> Result<BenchResult> {
    if samples.is_empty() {
        return Err(Error::Dataset("the test split is empty".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if config.methods.contains(&Method::Ae) {
        let ae = autoencoder.ok_or_else(|| Error::Config("method ae requires an autoencoder checkpoint".into()))?;
        if classifier.is_none() {
            return Err(Error::Config("method ae requires a classifier checkpoint".into()));
        }
        check_size("the autoencoder", ae.config().input_size, &samples[0].image)?;
    }
    if let Some(c) = classifier {
        check_size("the classifier", c.config().input_size, &samples[0].image)?;
    }
    let mut per_image = Vec::with_capacity(samples.len() * config.methods.len());
    for (index, sample) in samples.iter().enumerate() {
        let noisy = corrupt(&sample.image, config.sigma, image_seed(config.seed, index))?;
        for &method in &config.methods {
            let start = Instant::now();
            let out = apply_method(method, &noisy, &config.params, autoencoder)?;
            let millis = start.elapsed().as_secs_f64() * 1e3;
            let predicted = classifier
                .map(|c| c.predict(&out.to_tensor()).map(|p| p[0]))
                .transpose()?;
            per_image.push(ImageResult {
                method,
                index,
                psnr: psnr(&sample.image, &out)?,
                predicted,
                millis,
            });
        }
    }
    let truth: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    let mut reports = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let rows: Vec<&ImageResult> = per_image.iter().filter(|r| r.method == method).collect();
        let psnrs: Vec<f64> = rows.iter().map(|r| r.psnr).collect();
        let millis: Vec<f64> = rows.iter().map(|r| r.millis).collect();
        let acc = match classifier {
            Some(_) => {
                let predicted: Vec<usize> = rows.iter().map(|r| r.predicted.expect("classifier ran")).collect();
                Some(accuracy(&predicted, &truth)?)
            }
            None => None,
        };
        reports.push(MetricReport::from_samples(method.name(), &psnrs, acc, &millis)?);
    }
    Ok(BenchResult { reports, per_image })
}

pub const REPORT_HEADER: &str = "method,psnr_mean,psnr_std,acc,mean_ms,n";

/// CSV report; accuracy is `nan` when no classifier was evaluated.
pub fn report_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let acc = r.accuracy.map_or("nan".to_string(), |a| format!("{a:.2}"));
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{acc},{:.3},{}",
            r.method, r.psnr_mean, r.psnr_std, r.mean_ms_per_image, r.n_images
        );
    }
    out
}

/// Aligned human-readable table.
pub fn summary_table(reports: &[MetricReport]) -> String {
    let mut out = format!(
        "{:<10} {:>10} {:>8} {:>8} {:>10} {:>6}\n",
        "method", "PSNR [dB]", "std", "ACC [%]", "ms/image", "n"
    );
    for r in reports {
        let acc = r.accuracy.map_or("-".to_string(), |a| format!("{a:.1}"));
        let _ = writeln!(
            out,
            "{:<10} {:>10.2} {:>8.2} {:>8} {:>10.3} {:>6}",
            r.method, r.psnr_mean, r.psnr_std, acc, r.mean_ms_per_image, r.n_images
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("tv, ae,tv").unwrap(), vec![Method::Tv, Method::Ae]);
        assert!(parse_methods("").is_err());
        assert!(parse_methods("bm3d").is_err());
        assert_eq!("AD".parse::<Method>().unwrap(), Method::Ad);
    }

    #[test]
    fn csv_uses_nan_without_classifier() {
        let r = MetricReport::from_samples("tv", &[20.0, 22.0], None, &[1.0, 1.0]).unwrap();
        let csv = report_csv(&[r]);
        assert_eq!(
            csv,
            "method,psnr_mean,psnr_std,acc,mean_ms,n\ntv,21.0000,1.0000,nan,1.000,2\n"
        );
    }
}
