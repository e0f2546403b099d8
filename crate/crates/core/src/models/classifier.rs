//! Residual CNN classifier over four retinal classes.
//!
//! ```text
//! stem conv3x3 → relu
//! for each stage s:
//!     (s > 0) conv3x3 stride 2, width doubles → relu
//!     blocks: out = relu(conv(relu(conv(x))) + x)
//! global average pool → affine to class logits
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax_rows, config_value, he_normal, Checkpoint, Cursor, Forward, ModelKind, ParamSet, TrainingMeta};
use crate::datasets::ClassLabel;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierConfig {
    /// Side length of the square single-channel input.
    pub input_size: usize,
    /// Width of the first stage; each later stage doubles it.
    pub base_channels: usize,
    pub blocks_per_stage: usize,
    pub n_stages: usize,
    pub n_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_size: 32,
            base_channels: 8,
            blocks_per_stage: 2,
            n_stages: 3,
            n_classes: ClassLabel::COUNT,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes != ClassLabel::COUNT {
            return Err(Error::Config(format!(
                "classifier must have {} classes, got {}",
                ClassLabel::COUNT,
                self.n_classes
            )));
        }
        if self.input_size == 0 || self.base_channels == 0 || self.n_stages == 0 {
            return Err(Error::Config("classifier sizes must be positive".into()));
        }
        let factor = 1usize << self.n_stages;
        if !self.input_size.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "input size {} not divisible by {factor} for {} stages",
                self.input_size, self.n_stages
            )));
        }
        Ok(())
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("input_size", self.input_size),
            ("base_channels", self.base_channels),
            ("blocks_per_stage", self.blocks_per_stage),
            ("n_stages", self.n_stages),
            ("n_classes", self.n_classes),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let config = ClassifierConfig {
            input_size: config_value(pairs, "input_size")?,
            base_channels: config_value(pairs, "base_channels")?,
            blocks_per_stage: config_value(pairs, "blocks_per_stage")?,
            n_stages: config_value(pairs, "n_stages")?,
            n_classes: config_value(pairs, "n_classes")?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<T> {
    config: ClassifierConfig,
    params: ParamSet<T>,
    frozen: bool,
}

impl<T: Scalar> Classifier<T> {
    /// Builds a classifier with He-initialized weights and zero biases.
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut conv = |params: &mut ParamSet<T>, name: String, cin: usize, cout: usize| -> Result<()> {
            params.push(
                format!("{name}.weight"),
                he_normal(&[cout, cin, 3, 3], cin * 9, &mut rng),
            )?;
            params.push(format!("{name}.bias"), Tensor::zeros([cout]))
        };
        let c0 = config.base_channels;
        conv(&mut params, "stem".into(), 1, c0)?;
        for s in 0..config.n_stages {
            let width = config.stage_channels(s);
            if s > 0 {
                conv(
                    &mut params,
                    format!("stage{s}.down"),
                    config.stage_channels(s - 1),
                    width,
                )?;
            }
            for b in 0..config.blocks_per_stage {
                conv(&mut params, format!("stage{s}.block{b}.conv1"), width, width)?;
                conv(&mut params, format!("stage{s}.block{b}.conv2"), width, width)?;
            }
        }
        let features = config.stage_channels(config.n_stages - 1);
        let k = config.n_classes;
        params.push("head.weight", he_normal(&[k, features], 2 * features, &mut rng))?;
        params.push("head.bias", Tensor::zeros([k]))?;
        Ok(Classifier {
            config,
            params,
            frozen: false,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Marks the parameters non-trainable: they enter tapes as constants.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.input_size;
        match shape {
            [_, 1, h, w] if *h == s && *w == s => Ok(()),
            _ => Err(Error::shape(
                "classifier",
                format!("expected [N,1,{s},{s}] input, got {shape:?}"),
            )),
        }
    }

    /// Records the forward pass of `x` and returns the logits `[N, K]`.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var) -> Result<Forward> {
        self.check_input(tape.value(x).shape())?;
        let params = self.params.bind(tape, !self.frozen);
        let output = self.forward_bound(tape, &params, x)?;
        Ok(Forward { output, params })
    }

    /// Forward pass with parameters already recorded on the tape, in creation order.
    pub fn forward_bound(&self, tape: &mut Tape<T>, params: &[Var], x: Var) -> Result<Var> {
        let mut p = Cursor::new(params);
        let (w, b) = p.pair();
        let mut h = tape.conv2d(x, w, b, 1, 1)?;
        h = tape.relu(h)?;
        for s in 0..self.config.n_stages {
            if s > 0 {
                let (w, b) = p.pair();
                h = tape.conv2d(h, w, b, 2, 1)?;
                h = tape.relu(h)?;
            }
            for _ in 0..self.config.blocks_per_stage {
                let (w1, b1) = p.pair();
                let (w2, b2) = p.pair();
                let mut r = tape.conv2d(h, w1, b1, 1, 1)?;
                r = tape.relu(r)?;
                r = tape.conv2d(r, w2, b2, 1, 1)?;
                let sum = tape.add(r, h)?;
                h = tape.relu(sum)?;
            }
        }
        let pooled = tape.global_avg_pool(h)?;
        let (w, b) = p.pair();
        tape.affine(pooled, w, b)
    }

    /// Logits for a batch `[N,1,S,S]`, without recording gradients.
    pub fn logits(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(images.shape())?;
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let params = self.params.bind(&mut tape, false);
        let out = self.forward_bound(&mut tape, &params, x)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, images: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(images)?))
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Classifier,
            config: self.config.to_pairs(),
            params: self.params.cast(),
            meta,
        }
    }

    /// Rebuilds a classifier from a checkpoint, rejecting any other model kind.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        checkpoint.expect_kind(ModelKind::Classifier)?;
        let config = ClassifierConfig::from_pairs(&checkpoint.config)?;
        let mut model = Self::new(config, 0)?;
        model.params.check_layout(&checkpoint.params)?;
        model.params = checkpoint.params.cast();
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_give_finite_logits() {
        let model = Classifier::<f64>::new(ClassifierConfig::default(), 1).unwrap();
        let logits = model.logits(&Tensor::zeros([1, 1, 32, 32])).unwrap();
        assert_eq!(logits.shape(), &[1, 4]);
        assert!(logits.is_finite());
    }

    #[test]
    fn seeds_determine_parameters() {
        let a = Classifier::<f32>::new(ClassifierConfig::default(), 5).unwrap();
        let b = Classifier::<f32>::new(ClassifierConfig::default(), 5).unwrap();
        let c = Classifier::<f32>::new(ClassifierConfig::default(), 6).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn config_validation() {
        let bad = [
            ClassifierConfig {
                n_classes: 3,
                ..Default::default()
            },
            ClassifierConfig {
                input_size: 30,
                ..Default::default()
            },
            ClassifierConfig {
                n_stages: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(Classifier::<f32>::new(c, 0).is_err());
        }
        let config = ClassifierConfig::default();
        assert_eq!(ClassifierConfig::from_pairs(&config.to_pairs()).unwrap(), config);
    }

    #[test]
    fn rejects_wrong_input_size() {
        let model = Classifier::<f32>::new(ClassifierConfig::default(), 1).unwrap();
        assert!(model.logits(&Tensor::zeros([1, 1, 16, 16])).is_err());
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let config = ClassifierConfig {
            input_size: 8,
            n_stages: 2,
            blocks_per_stage: 1,
            base_channels: 2,
            ..Default::default()
        };
        let mut model = Classifier::<f64>::new(config, 3).unwrap();
        model.freeze();
        let mut tape = Tape::new();
        let x = tape.param(Tensor::full([1, 1, 8, 8], 0.3));
        let fwd = model.forward(&mut tape, x).unwrap();
        let loss = tape.softmax_cross_entropy(fwd.output, &[2]).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).is_some());
        assert!(fwd.params.iter().all(|&p| tape.grad(p).is_none()));
    }
}
