//! Binary checkpoint format.
//!
//! ```text
//! magic    "OCTD"
//! version  u16
//! kind     u8            1 = classifier, 2 = autoencoder
//! config   u32 length, UTF-8 `key=value` lines (model config + meta.* entries)
//! count    u32
//! count x  u16 name length, name, u8 rank, rank x u32 extent, f32 values
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"OCTD";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Classifier,
    Autoencoder,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Classifier => 1,
            ModelKind::Autoencoder => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Classifier),
            2 => Ok(ModelKind::Autoencoder),
            other => Err(Error::Checkpoint(format!("unknown model kind tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Classifier => "classifier",
            ModelKind::Autoencoder => "autoencoder",
        }
    }
}

/// Bookkeeping of the training run that produced the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingMeta {
    /// 1-based epoch of the stored snapshot; 0 for an untrained model.
    pub epoch: usize,
    pub best_val_loss: f64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        TrainingMeta {
            epoch: 0,
            best_val_loss: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// Model configuration as ordered `key=value` pairs.
    pub config: Vec<(String, String)>,
    pub params: ParamSet<f32>,
    pub meta: TrainingMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "expected a {} checkpoint, found a {}",
                kind.name(),
                self.kind.name()
            )))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        let mut text = String::new();
        for (k, v) in &self.config {
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str(&format!("meta.epoch={}\n", self.meta.epoch));
        text.push_str(&format!("meta.best_val_loss={:?}\n", self.meta.best_val_loss));
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, tensor) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind = ModelKind::from_tag(r.u8("kind")?)?;
        let text_len = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(text_len, "config")?)
            .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
        let mut config = Vec::new();
        let mut meta = TrainingMeta::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("malformed config line {line:?}")))?;
            let bad = || Error::Checkpoint(format!("malformed value in {line:?}"));
            match k {
                "meta.epoch" => meta.epoch = v.parse().map_err(|_| bad())?,
                "meta.best_val_loss" => meta.best_val_loss = v.parse().map_err(|_| bad())?,
                _ => config.push((k.to_string(), v.to_string())),
            }
        }
        let count = r.u32("parameter count")?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("extent")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape {shape:?} overflows")))?;
            let raw = r.take(n.saturating_mul(4), &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            params
                .push(name, tensor)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last parameter",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            kind,
            config,
            params,
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamSet::new();
        params
            .push(
                "a.weight",
                Tensor::new([2, 3], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.0, 4.0, 1e-30]).unwrap(),
            )
            .unwrap();
        params
            .push("a.bias", Tensor::new([2], vec![0.25, -7.0]).unwrap())
            .unwrap();
        Checkpoint {
            kind: ModelKind::Classifier,
            config: vec![("input_size".into(), "32".into())],
            params,
            meta: TrainingMeta {
                epoch: 4,
                best_val_loss: 0.1 + 0.2,
            },
        }
    }

    #[test]
    fn bytes_round_trip() {
        let ckpt = sample();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.meta.best_val_loss.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn every_truncation_rejected() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
    }
}
