//! Convolutional encoder–decoder without skip connections.
//!
//! Each encoder stage halves the resolution with a 4x4 stride-2 convolution;
//! each decoder stage doubles it with the mirrored transposed convolution.
//! The latent `z` is the linear output of the last encoder stage, and the
//! decoder ends in a sigmoid so reconstructions stay inside `(0, 1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{config_value, he_normal, Checkpoint, Cursor, Forward, ModelKind, ParamSet, TrainingMeta};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutoencoderConfig {
    pub input_size: usize,
    /// Output channels of each encoder stage; the decoder mirrors them.
    pub widths: Vec<usize>,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_size: 32,
            widths: vec![32, 64, 32],
        }
    }
}

impl AutoencoderConfig {
    pub fn n_stages(&self) -> usize {
        self.widths.len()
    }

    /// Latent shape `[channels, side, side]`.
    pub fn latent_shape(&self) -> [usize; 3] {
        let side = self.input_size >> self.n_stages();
        [*self.widths.last().unwrap_or(&0), side, side]
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_shape().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(
                "autoencoder needs at least one stage of positive width".into(),
            ));
        }
        if self.input_size == 0 || self.n_stages() >= usize::BITS as usize {
            return Err(Error::Config("autoencoder input size must be positive".into()));
        }
        let factor = 1usize << self.n_stages();
        if !self.input_size.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "input size {} not divisible by {factor} for {} stages",
                self.input_size,
                self.n_stages()
            )));
        }
        let input_dim = self.input_size * self.input_size;
        if self.latent_dim() >= input_dim {
            return Err(Error::Config(format!(
                "latent dimensionality {} does not compress the {input_dim}-pixel input",
                self.latent_dim()
            )));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let widths = self.widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("input_size".into(), self.input_size.to_string()),
            ("widths".into(), widths),
        ]
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let raw: String = config_value(pairs, "widths")?;
        let widths = raw
            .split(',')
            .map(|w| w.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Checkpoint(format!("invalid widths {raw:?}")))?;
        let config = AutoencoderConfig {
            input_size: config_value(pairs, "input_size")?,
            widths,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T> {
    config: AutoencoderConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(config: AutoencoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let taps = KERNEL * KERNEL;
        let mut cin = 1;
        for (i, &cout) in config.widths.iter().enumerate() {
            params.push(
                format!("encoder{i}.weight"),
                he_normal(&[cout, cin, KERNEL, KERNEL], cin * taps, &mut rng),
            )?;
            params.push(format!("encoder{i}.bias"), Tensor::zeros([cout]))?;
            cin = cout;
        }
        for i in (0..config.n_stages()).rev() {
            let cout = if i == 0 { 1 } else { config.widths[i - 1] };
            // each output pixel of a stride-2 transposed conv sees taps / stride² inputs per channel
            let fan_in = cin * taps / (STRIDE * STRIDE);
            params.push(
                format!("decoder{i}.weight"),
                he_normal(&[cin, cout, KERNEL, KERNEL], fan_in, &mut rng),
            )?;
            params.push(format!("decoder{i}.bias"), Tensor::zeros([cout]))?;
            cin = cout;
        }
        Ok(Autoencoder { config, params })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.input_size;
        match shape {
            [_, 1, h, w] if *h == s && *w == s => Ok(()),
            _ => Err(Error::shape(
                "autoencoder",
                format!("expected [N,1,{s},{s}] input, got {shape:?}"),
            )),
        }
    }

    fn check_latent(&self, shape: &[usize]) -> Result<()> {
        let [c, h, w] = self.config.latent_shape();
        match shape {
            [_, sc, sh, sw] if (*sc, *sh, *sw) == (c, h, w) => Ok(()),
            _ => Err(Error::shape(
                "decode",
                format!("expected [N,{c},{h},{w}] latent, got {shape:?}"),
            )),
        }
    }

    fn split_params<'a>(&self, params: &'a [Var]) -> (&'a [Var], &'a [Var]) {
        params.split_at(2 * self.config.n_stages())
    }

    /// Encoder stages with parameters already on the tape.
    pub fn encode_bound(&self, tape: &mut Tape<T>, encoder_params: &[Var], x: Var) -> Result<Var> {
        let mut p = Cursor::new(encoder_params);
        let mut h = x;
        for i in 0..self.config.n_stages() {
            let (w, b) = p.pair();
            h = tape.conv2d(h, w, b, STRIDE, PADDING)?;
            if i + 1 < self.config.n_stages() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Decoder stages with parameters already on the tape.
    pub fn decode_bound(&self, tape: &mut Tape<T>, decoder_params: &[Var], z: Var) -> Result<Var> {
        let mut p = Cursor::new(decoder_params);
        let mut h = z;
        for i in 0..self.config.n_stages() {
            let (w, b) = p.pair();
            h = tape.conv_transpose2d(h, w, b, STRIDE, PADDING)?;
            h = if i + 1 < self.config.n_stages() {
                tape.relu(h)?
            } else {
                tape.sigmoid(h)?
            };
        }
        Ok(h)
    }

    /// Records `x̂ = D(E(x))` with trainable parameters.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var) -> Result<Forward> {
        self.check_input(tape.value(x).shape())?;
        let params = self.params.bind(tape, true);
        let (enc, dec) = self.split_params(&params);
        let z = self.encode_bound(tape, enc, x)?;
        let output = self.decode_bound(tape, dec, z)?;
        Ok(Forward { output, params })
    }

    /// Latent codes `[N, C, h, w]` for a batch of images.
    pub fn encode(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(images.shape())?;
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let params = self.params.bind(&mut tape, false);
        let z = self.encode_bound(&mut tape, self.split_params(&params).0, x)?;
        Ok(tape.value(z).clone())
    }

    /// Reconstructions `[N, 1, S, S]` from latent codes.
    pub fn decode(&self, latent: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_latent(latent.shape())?;
        let mut tape = Tape::new();
        let z = tape.constant(latent.clone());
        let params = self.params.bind(&mut tape, false);
        let out = self.decode_bound(&mut tape, self.split_params(&params).1, z)?;
        Ok(tape.value(out).clone())
    }

    /// Full forward pass without recording gradients.
    pub fn reconstruct(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(images.shape())?;
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let params = self.params.bind(&mut tape, false);
        let (enc, dec) = self.split_params(&params);
        let z = self.encode_bound(&mut tape, enc, x)?;
        let out = self.decode_bound(&mut tape, dec, z)?;
        Ok(tape.value(out).clone())
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        Checkpoint {
            kind: ModelKind::Autoencoder,
            config: self.config.to_pairs(),
            params: self.params.cast(),
            meta,
        }
    }

    /// Rebuilds an autoencoder from a checkpoint, rejecting any other model kind.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        checkpoint.expect_kind(ModelKind::Autoencoder)?;
        let config = AutoencoderConfig::from_pairs(&checkpoint.config)?;
        let mut model = Self::new(config, 0)?;
        model.params.check_layout(&checkpoint.params)?;
        model.params = checkpoint.params.cast();
        Ok(model)
    }
}
