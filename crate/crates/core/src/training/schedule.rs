//! Reduce-on-plateau learning-rate schedule.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauConfig {
    /// Multiplier applied to the learning rate on a plateau, in `(0, 1)`.
    pub factor: f64,
    /// Non-improving epochs tolerated before reducing.
    pub patience: usize,
    /// Relative improvement required to count as progress.
    pub threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.1,
            patience: 10,
            threshold: 1e-4,
            min_lr: 1e-7,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor must lie in (0, 1), got {}",
                self.factor
            )));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::Config(format!(
                "plateau threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if !(self.min_lr >= 0.0) {
            return Err(Error::Config(format!(
                "min learning rate must be >= 0, got {}",
                self.min_lr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauState {
    pub best_loss: f64,
    pub epochs_since_improvement: usize,
    pub lr: f64,
}

impl PlateauState {
    pub fn new(initial_lr: f64) -> Self {
        PlateauState {
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            lr: initial_lr,
        }
    }

    /// Folds in one epoch's validation loss.
    ///
    /// A loss below `best · (1 − threshold)` resets the counter. Once the
    /// counter exceeds `patience`, the rate is multiplied by `factor`
    /// (floored at `min_lr`) and the counter restarts.
    pub fn update(self, val_loss: f64, config: &PlateauConfig) -> PlateauState {
        if val_loss < self.best_loss * (1.0 - config.threshold) || self.best_loss == f64::INFINITY {
            return PlateauState {
                best_loss: val_loss,
                epochs_since_improvement: 0,
                lr: self.lr,
            };
        }
        let waited = self.epochs_since_improvement + 1;
        if waited > config.patience {
            PlateauState {
                best_loss: self.best_loss,
                epochs_since_improvement: 0,
                lr: (self.lr * config.factor).max(config.min_lr),
            }
        } else {
            PlateauState {
                epochs_since_improvement: waited,
                ..self
            }
        }
    }
}

pub fn plateau_update(state: PlateauState, val_loss: f64, config: &PlateauConfig) -> PlateauState {
    state.update(val_loss, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], config: &PlateauConfig) -> Vec<f64> {
        let mut state = PlateauState::new(1e-4);
        losses
            .iter()
            .map(|&l| {
                state = state.update(l, config);
                state.lr
            })
            .collect()
    }

    #[test]
    fn improving_never_reduces() {
        let losses: Vec<f64> = (0..50).map(|i| 1.0 / (i + 1) as f64).collect();
        assert!(run(&losses, &PlateauConfig::default()).iter().all(|&lr| lr == 1e-4));
    }

    #[test]
    fn four_stale_epochs_with_patience_three() {
        let config = PlateauConfig {
            patience: 3,
            ..Default::default()
        };
        let lrs = run(&[1.0, 1.0, 1.0, 1.0, 1.0], &config);
        assert_eq!(lrs[..4], [1e-4; 4]);
        assert!((lrs[4] - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn floor_is_respected() {
        let config = PlateauConfig {
            patience: 0,
            min_lr: 3e-7,
            ..Default::default()
        };
        let lrs = run(&[1.0; 40], &config);
        assert!(lrs.iter().all(|&lr| lr >= 3e-7));
        assert_eq!(*lrs.last().unwrap(), 3e-7);
    }

    #[test]
    fn tiny_improvement_does_not_count() {
        let config = PlateauConfig {
            patience: 1,
            ..Default::default()
        };
        let mut s = PlateauState::new(1.0).update(1.0, &config);
        s = s.update(1.0 - 1e-6, &config);
        assert_eq!(s.epochs_since_improvement, 1);
        assert_eq!(s.best_loss, 1.0);
    }
}
