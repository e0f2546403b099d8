//! Plain-text `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::denoise::{Conductance, DiffusionParams, TvParams, WaveletBasis, WaveletParams};
use crate::error::{Error, Result};
use crate::models::{AutoencoderConfig, ClassifierConfig};
use crate::training::TrainConfig;

/// Ordered key/value settings. Later assignments override earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            config.set(key, value.trim());
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parsed value of `key`, or `None` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value {v:?} for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValueConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Serializes in the same format [`KeyValueConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let config = TrainConfig {
            epochs: self.get_or("epochs", d.epochs)?,
            batch_size: self.get_or("batch_size", d.batch_size)?,
            lr: self.get_or("lr", d.lr)?,
            alpha: self.get_or("alpha", d.alpha)?,
            plateau: crate::training::PlateauConfig {
                factor: self.get_or("plateau_factor", d.plateau.factor)?,
                patience: self.get_or("patience", d.plateau.patience)?,
                threshold: self.get_or("plateau_threshold", d.plateau.threshold)?,
                min_lr: self.get_or("min_lr", d.plateau.min_lr)?,
            },
            early_stop: self.get("early_stop")?,
            seed: self.get_or("seed", d.seed)?,
            sigma: self.get_or("sigma", d.sigma)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn classifier_config(&self) -> Result<ClassifierConfig> {
        let d = ClassifierConfig::default();
        let config = ClassifierConfig {
            input_size: self.get_or("size", d.input_size)?,
            base_channels: self.get_or("classifier.base_channels", d.base_channels)?,
            blocks_per_stage: self.get_or("classifier.blocks_per_stage", d.blocks_per_stage)?,
            n_stages: self.get_or("classifier.n_stages", d.n_stages)?,
            n_classes: d.n_classes,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn autoencoder_config(&self) -> Result<AutoencoderConfig> {
        let d = AutoencoderConfig::default();
        let widths = match self.raw("ae.widths") {
            None => d.widths,
            Some(raw) => raw
                .split(',')
                .map(|w| w.trim().parse())
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| Error::Config(format!("invalid value {raw:?} for `ae.widths`")))?,
        };
        let config = AutoencoderConfig {
            input_size: self.get_or("size", d.input_size)?,
            widths,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn tv_params(&self) -> Result<TvParams> {
        let d = TvParams::default();
        let p = TvParams {
            lambda: self.get_or("tv.lambda", d.lambda)?,
            max_iter: self.get_or("tv.max_iter", d.max_iter)?,
            tol: self.get_or("tv.tol", d.tol)?,
            tau: self.get_or("tv.tau", d.tau)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn wavelet_params(&self) -> Result<WaveletParams> {
        let d = WaveletParams::default();
        let basis = match self.raw("wavelet.basis") {
            None => d.basis,
            Some(b) if b.eq_ignore_ascii_case("haar") => WaveletBasis::Haar,
            Some(b) if b.eq_ignore_ascii_case("db4") || b.eq_ignore_ascii_case("daubechies4") => {
                WaveletBasis::Daubechies4
            }
            Some(other) => return Err(Error::Config(format!("unknown wavelet basis {other:?}"))),
        };
        let levels = self.get_or("wavelet.levels", d.levels)?;
        if levels == 0 {
            return Err(Error::Config("wavelet.levels must be positive".into()));
        }
        Ok(WaveletParams { levels, basis })
    }

    pub fn diffusion_params(&self) -> Result<DiffusionParams> {
        let d = DiffusionParams::default();
        let p = DiffusionParams {
            iterations: self.get_or("ad.iterations", d.iterations)?,
            kappa: self.get_or("ad.kappa", d.kappa)?,
            step: self.get_or("ad.step", d.step)?,
            conductance: self.get_or::<Conductance>("ad.conductance", d.conductance)?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# header\nepochs = 5\n\nlr=0.001 # trailing\nepochs = 7\n";
        let c = KeyValueConfig::parse(text).unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), Some(7));
        assert_eq!(c.get::<f64>("lr").unwrap(), Some(0.001));
        assert_eq!(c.get::<f64>("alpha").unwrap(), None);
        assert!(KeyValueConfig::parse("no equals sign").is_err());
        assert!(KeyValueConfig::parse(" = 3").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = KeyValueConfig::new();
        c.set("alpha", 0.0);
        c.set("ae.widths", "8,16");
        assert_eq!(KeyValueConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn typed_views() {
        let c = KeyValueConfig::parse(
            "alpha = 0\nepochs = 3\nad.conductance = rational\nwavelet.basis = db4\nae.widths = 8, 16, 4",
        )
        .unwrap();
        let t = c.train_config().unwrap();
        assert_eq!((t.alpha, t.epochs, t.lr), (0.0, 3, 1e-4));
        assert_eq!(c.diffusion_params().unwrap().conductance, Conductance::Rational);
        assert_eq!(c.wavelet_params().unwrap().basis, WaveletBasis::Daubechies4);
        assert_eq!(c.autoencoder_config().unwrap().widths, vec![8, 16, 4]);
        let bad = KeyValueConfig::parse("epochs = many").unwrap();
        assert!(bad.train_config().is_err());
    }
}
