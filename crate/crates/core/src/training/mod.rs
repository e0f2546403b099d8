//! Two-stage training: the classifier on clean images, then the denoising
//! autoencoder against the frozen classifier.

mod schedule;
mod trainer;

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::tensor::{Scalar, Tape, Var};

pub use schedule::{plateau_update, PlateauConfig, PlateauState};
pub use trainer::{evaluate_classifier, fit, train_autoencoder, train_classifier, TrainRun, ValTerms};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial Adam learning rate.
    pub lr: f64,
    /// Weight of the classification term in the autoencoder loss.
    pub alpha: f64,
    pub plateau: PlateauConfig,
    /// Stop once this many epochs pass without a new best validation loss.
    pub early_stop: Option<usize>,
    pub seed: u64,
    /// Standard deviation of the training corruption noise.
    pub sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            lr: 1e-4,
            alpha: 0.1,
            plateau: PlateauConfig::default(),
            early_stop: None,
            seed: 0,
            sigma: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        self.plateau.validate()
    }
}

/// Per-epoch training record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation reconstruction error (0 for the classifier stage).
    pub val_lr_term: f64,
    /// Unweighted validation cross entropy.
    pub val_lc_term: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_lr_term,val_lc_term,lr,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:.3}",
            self.epoch, self.train_loss, self.val_loss, self.val_lr_term, self.val_lc_term, self.lr, self.seconds
        )
    }

    /// Equality of everything except wall-clock time.
    pub fn same_metrics(&self, other: &EpochLog) -> bool {
        EpochLog { seconds: 0.0, ..*self } == EpochLog { seconds: 0.0, ..*other }
    }
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from(EpochLog::CSV_HEADER);
    out.push('\n');
    for log in logs {
        let _ = writeln!(out, "{}", log.csv_row());
    }
    out
}

/// Streams epoch records as CSV, writing the header up front.
pub struct CsvLogWriter<W: Write> {
    out: W,
}

impl<W: Write> CsvLogWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", EpochLog::CSV_HEADER)?;
        Ok(CsvLogWriter { out })
    }

    pub fn write(&mut self, log: &EpochLog) -> std::io::Result<()> {
        writeln!(self.out, "{}", log.csv_row())?;
        self.out.flush()
    }
}

/// Handles to the recorded terms of the autoencoder loss.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    /// `L_r + α · L_c`.
    pub total: Var,
    /// Reconstruction error `L_r = mse(x, x̂)`.
    pub reconstruction: Var,
    /// Unweighted cross entropy `L_c` of the classifier on `x̂`.
    pub classification: Var,
}

/// Records `mse(x, x̂) + α · CE(C(x̂), y)` on `tape`.
///
/// The classifier must be frozen, so its parameters enter the tape as
/// constants and only the reconstruction path receives gradients.
pub fn combined_loss<T: Scalar>(
    tape: &mut Tape<T>,
    clean: Var,
    reconstruction: Var,
    labels: &[usize],
    classifier: &Classifier<T>,
    alpha: T,
) -> Result<LossTerms> {
    if !classifier.is_frozen() {
        return Err(Error::InvalidArgument(
            "the regularizing classifier must be frozen before computing the combined loss".into(),
        ));
    }
    let lr = tape.mse(reconstruction, clean)?;
    let logits = classifier.forward(tape, reconstruction)?.output;
    let lc = tape.softmax_cross_entropy(logits, labels)?;
    let weighted = tape.scale(lc, alpha)?;
    let total = tape.add(lr, weighted)?;
    Ok(LossTerms {
        total,
        reconstruction: lr,
        classification: lc,
    })
}
