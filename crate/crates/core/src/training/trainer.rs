//! Epoch loops for both training stages.

use std::time::Instant;

use log::{debug, info};

use super::{combined_loss, EpochLog, PlateauState, TrainConfig};
use crate::datasets::{batch_iter, corrupt, images_to_tensor, Image, LabeledDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Classifier, TrainingMeta};
use crate::seed::derive_seed;
use crate::tensor::{Adam, AdamConfig, Tape, Var};

// Independent random streams derived from the run seed.
const SHUFFLE_STREAM: u64 = 1;
const TRAIN_NOISE_STREAM: u64 = 2;
const VAL_NOISE_STREAM: u64 = 3;

/// Result of a training run: the model restored to its best validation epoch.
#[derive(Clone, Debug)]
pub struct TrainRun<M> {
    pub model: M,
    pub logs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl<M> TrainRun<M> {
    pub fn meta(&self) -> TrainingMeta {
        TrainingMeta {
            epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
        }
    }
}

/// Validation loss of one epoch, split into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ValTerms {
    pub total: f64,
    pub reconstruction: f64,
    pub classification: f64,
}

fn require_splits(dataset: &LabeledDataset) -> Result<()> {
    for (name, split) in [
        ("train", &dataset.train),
        ("val", &dataset.val),
        ("test", &dataset.test),
    ] {
        if split.is_empty() {
            return Err(Error::Dataset(format!("the {name} split is empty")));
        }
    }
    Ok(())
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(op) => Error::Diverged {
            epoch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

fn gradients<'t>(tape: &'t Tape<f32>, params: &[Var]) -> Vec<&'t [f32]> {
    params
        .iter()
        .map(|&p| tape.grad(p).expect("trainable parameter received no gradient"))
        .collect()
}

/// Shared epoch loop: plateau scheduling, best-snapshot selection, early stop.
///
/// `train_epoch` runs one pass over the training data and returns its mean
/// loss; `validate` scores the current model. Both training stages are built
/// on this loop, and it can be driven directly with scripted losses.
pub fn fit<M: Clone>(
    mut model: M,
    config: &TrainConfig,
    mut train_epoch: impl FnMut(&mut M, &mut Adam<f32>, usize) -> Result<f64>,
    mut validate: impl FnMut(&M) -> Result<ValTerms>,
    observer: &mut dyn FnMut(&EpochLog),
) -> Result<TrainRun<M>> {
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr))?;
    let mut plateau = PlateauState::new(config.lr);
    let mut best: Option<(usize, f64, M)> = None;
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let lr = adam.lr();
        let train_loss = train_epoch(&mut model, &mut adam, epoch).map_err(diverged(epoch))?;
        let val = validate(&model).map_err(diverged(epoch))?;
        for (what, v) in [("train loss", train_loss), ("validation loss", val.total)] {
            if !v.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("{what} is {v}"),
                });
            }
        }
        let log = EpochLog {
            epoch,
            train_loss,
            val_loss: val.total,
            val_lr_term: val.reconstruction,
            val_lc_term: val.classification,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!("{}", log.csv_row());
        observer(&log);
        logs.push(log);
        if best.as_ref().is_none_or(|(_, loss, _)| val.total < *loss) {
            best = Some((epoch, val.total, model.clone()));
        }
        plateau = plateau.update(val.total, &config.plateau);
        if plateau.lr != adam.lr() {
            info!(
                "epoch {epoch}: validation loss plateaued, learning rate {} -> {}",
                adam.lr(),
                plateau.lr
            );
            adam.set_lr(plateau.lr)?;
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if config.early_stop.is_some_and(|limit| epoch - best_epoch >= limit) {
            info!("epoch {epoch}: no improvement since epoch {best_epoch}, stopping");
            break;
        }
    }
    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch runs");
    Ok(TrainRun {
        model: best_model,
        logs,
        best_epoch,
        best_val_loss,
    })
}

/// Mean cross entropy of `model` over `samples`.
fn classifier_loss(model: &Classifier<f32>, samples: &[LabeledSample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for batch in batch_iter::<f32>(samples, batch_size, None)? {
        let mut tape = Tape::new();
        let x = tape.constant(batch.images);
        let params = model.params().bind(&mut tape, false);
        let logits = model.forward_bound(&mut tape, &params, x)?;
        let loss = tape.softmax_cross_entropy(logits, &batch.labels)?;
        total += tape.value(loss).item()? as f64 * batch.labels.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Predicted class indices for `samples`, in order.
pub fn evaluate_classifier(
    model: &Classifier<f32>,
    samples: &[LabeledSample],
    batch_size: usize,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    for batch in batch_iter::<f32>(samples, batch_size, None)? {
        out.extend(model.predict(&batch.images)?);
    }
    Ok(out)
}

/// Stage 1: minimizes cross entropy on clean images.
///
/// `observer` sees every epoch record as soon as it is complete.
pub fn train_classifier(
    dataset: &LabeledDataset,
    model: Classifier<f32>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochLog),
) -> Result<TrainRun<Classifier<f32>>> {
    config.validate()?;
    require_splits(dataset)?;
    if model.is_frozen() {
        return Err(Error::InvalidArgument("cannot train a frozen classifier".into()));
    }
    let train_epoch = |model: &mut Classifier<f32>, adam: &mut Adam<f32>, epoch: usize| -> Result<f64> {
        let shuffle = derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64]);
        let mut total = 0.0;
        let mut tape = Tape::new();
        for batch in batch_iter::<f32>(&dataset.train, config.batch_size, Some(shuffle))? {
            tape.reset();
            let x = tape.constant(batch.images);
            let fwd = model.forward(&mut tape, x)?;
            let loss = tape.softmax_cross_entropy(fwd.output, &batch.labels)?;
            tape.backward(loss)?;
            total += tape.value(loss).item()? as f64 * batch.labels.len() as f64;
            let grads = gradients(&tape, &fwd.params);
            adam.step(model.params_mut().tensors_mut(), &grads)?;
        }
        Ok(total / dataset.train.len() as f64)
    };
    let validate = |model: &Classifier<f32>| -> Result<ValTerms> {
        let ce = classifier_loss(model, &dataset.val, config.batch_size)?;
        Ok(ValTerms {
            total: ce,
            reconstruction: 0.0,
            classification: ce,
        })
    };
    fit(model, config, train_epoch, validate, observer)
}

fn corrupt_all<'a>(
    images: impl Iterator<Item = (usize, &'a Image)>,
    sigma: f64,
    seed_of: impl Fn(usize) -> u64,
) -> Result<Vec<Image>> {
    images.map(|(i, img)| corrupt(img, sigma, seed_of(i))).collect()
}

/// Stage 2: trains the autoencoder on `mse(x, x̂) + α · CE(C(x̂), y)` with
/// `x̂ = D(E(x̃))` and `x̃` freshly corrupted every epoch.
///
/// Validation images are corrupted once with fixed seeds, so validation
/// losses are comparable across epochs.
pub fn train_autoencoder(
    dataset: &LabeledDataset,
    model: Autoencoder<f32>,
    classifier: &Classifier<f32>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochLog),
) -> Result<TrainRun<Autoencoder<f32>>> {
    config.validate()?;
    require_splits(dataset)?;
    if !classifier.is_frozen() {
        return Err(Error::InvalidArgument(
            "the regularizing classifier must be frozen".into(),
        ));
    }
    let (ae_size, c_size) = (model.config().input_size, classifier.config().input_size);
    if ae_size != c_size {
        return Err(Error::Config(format!(
            "autoencoder input size {ae_size} does not match classifier input size {c_size}"
        )));
    }
    if let Some(size) = dataset.image_size() {
        if size != ae_size {
            return Err(Error::Config(format!(
                "dataset images are {size}x{size}, models expect {ae_size}"
            )));
        }
    }
    let alpha = config.alpha as f32;
    let train_epoch = |model: &mut Autoencoder<f32>, adam: &mut Adam<f32>, epoch: usize| -> Result<f64> {
        let shuffle = derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64]);
        let mut total = 0.0;
        let mut tape = Tape::new();
        for batch in batch_iter::<f32>(&dataset.train, config.batch_size, Some(shuffle))? {
            let noisy = corrupt_all(
                batch.indices.iter().map(|&i| (i, &dataset.train[i].image)),
                config.sigma,
                |i| derive_seed(config.seed, &[TRAIN_NOISE_STREAM, epoch as u64, i as u64]),
            )?;
            tape.reset();
            let clean = tape.constant(batch.images);
            let input = tape.constant(images_to_tensor(&noisy)?);
            let fwd = model.forward(&mut tape, input)?;
            let loss = if alpha == 0.0 {
                // the classification term carries zero weight; skip its cost
                tape.mse(fwd.output, clean)?
            } else {
                combined_loss(&mut tape, clean, fwd.output, &batch.labels, classifier, alpha)?.total
            };
            tape.backward(loss)?;
            total += tape.value(loss).item()? as f64 * batch.labels.len() as f64;
            let grads = gradients(&tape, &fwd.params);
            adam.step(model.params_mut().tensors_mut(), &grads)?;
        }
        Ok(total / dataset.train.len() as f64)
    };
    let val_noisy = corrupt_all(dataset.val.iter().map(|s| &s.image).enumerate(), config.sigma, |i| {
        derive_seed(config.seed, &[VAL_NOISE_STREAM, i as u64])
    })?;
    let validate = |model: &Autoencoder<f32>| -> Result<ValTerms> {
        let mut sums = ValTerms::default();
        for batch in batch_iter::<f32>(&dataset.val, config.batch_size, None)? {
            let mut tape = Tape::new();
            let clean = tape.constant(batch.images);
            let input = tape.constant(images_to_tensor(batch.indices.iter().map(|&i| &val_noisy[i]))?);
            let params = model.params().bind(&mut tape, false);
            let (enc, dec) = params.split_at(2 * model.config().n_stages());
            let z = model.encode_bound(&mut tape, enc, input)?;
            let recon = model.decode_bound(&mut tape, dec, z)?;
            let terms = combined_loss(&mut tape, clean, recon, &batch.labels, classifier, alpha)?;
            let n = batch.labels.len() as f64;
            sums.total += tape.value(terms.total).item()? as f64 * n;
            sums.reconstruction += tape.value(terms.reconstruction).item()? as f64 * n;
            sums.classification += tape.value(terms.classification).item()? as f64 * n;
        }
        let n = dataset.val.len() as f64;
        Ok(ValTerms {
            total: sums.total / n,
            reconstruction: sums.reconstruction / n,
            classification: sums.classification / n,
        })
    };
    fit(model, config, train_epoch, validate, observer)
}
