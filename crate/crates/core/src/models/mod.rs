//! The residual classifier, the convolutional autoencoder, and checkpoint persistence.

mod autoencoder;
mod checkpoint;
mod classifier;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub use autoencoder::{Autoencoder, AutoencoderConfig};
pub use checkpoint::{Checkpoint, ModelKind, TrainingMeta, FORMAT_VERSION};
pub use classifier::{Classifier, ClassifierConfig};

/// Ordered, uniquely named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name:?}")));
        }
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every tensor on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Checks that `other` has the same names and shapes, in order.
    pub(crate) fn check_layout<U: Scalar>(&self, other: &ParamSet<U>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Checkpoint(format!(
                "parameter names differ from the configured model ({} vs {} entries)",
                other.len(),
                self.len()
            )));
        }
        for ((name, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} does not match configured {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Output of a recorded forward pass together with the parameter leaves it used.
#[derive(Clone, Debug)]
pub struct Forward {
    pub output: Var,
    pub params: Vec<Var>,
}

/// Zero-mean normal weights with variance `2 / fan_in`.
///
/// Values are drawn at single precision so that a model built in `f64`
/// survives a checkpoint round-trip unchanged.
pub(crate) fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = rng.sample(StandardNormal);
        T::from_f64((std * z) as f32 as f64)
    })
}

/// Cursor over bound parameter leaves, consumed in creation order.
pub(crate) struct Cursor<'a> {
    vars: std::slice::Iter<'a, Var>,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        Cursor { vars: vars.iter() }
    }

    pub(crate) fn pair(&mut self) -> (Var, Var) {
        let w = *self.vars.next().expect("parameter list shorter than model");
        let b = *self.vars.next().expect("parameter list shorter than model");
        (w, b)
    }
}

/// Index of the largest entry in each row of `[N, K]` logits.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let k = logits.shape().last().copied().unwrap_or(1);
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, T::neg_infinity()),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0
        })
        .collect()
}

/// Reads `key` from config pairs and parses it.
pub(crate) fn config_value<V: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<V> {
    let raw = pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Checkpoint(format!("config key {key:?} missing")))?;
    raw.parse()
        .map_err(|_| Error::Checkpoint(format!("config key {key:?} has unparsable value {raw:?}")))
}
