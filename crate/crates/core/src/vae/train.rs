//! Mini-batch Adam training with a plateau scheduler and early stopping.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{sample_noise, LossParts, VaeArchitecture, VaeModel};
use super::window::{NormParams, WindowSet};
use crate::error::{Error, Result};
use crate::nn::AdamState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before training halts.
    pub early_stop_patience: usize,
    /// Epochs without improvement tolerated before the learning rate drops.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Relative improvement the scheduler requires to reset its patience.
    pub plateau_threshold: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            early_stop_patience: 50,
            plateau_patience: 5,
            plateau_factor: 0.5,
            plateau_threshold: 1e-4,
            learning_rate: 0.005,
            batch_size: 64,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction {} must lie in (0, 1)",
                self.validation_fraction
            ));
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return bad("patience values must be at least 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!(
                "plateau_factor {} must lie in (0, 1)",
                self.plateau_factor
            ));
        }
        if !(self.plateau_threshold >= 0.0) {
            return bad("plateau_threshold must be >= 0".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train: LossParts,
    pub validation: LossParts,
    /// Per-component validation MSE with `z = mu`.
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub best_validation_mse: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_validation: usize,
}

impl TrainReport {
    /// Learning rate per epoch.
    pub fn lr_schedule(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.lr).collect()
    }
}

/// Reduce-on-plateau learning-rate schedule in `min` mode with a relative
/// threshold: the rate is multiplied by `factor` once more than `patience`
/// consecutive epochs fail to improve on the best loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, threshold: f64) -> Self {
        Self {
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record an epoch loss and return the learning rate to use next.
    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        let improved = if self.best.is_finite() {
            loss < self.best - self.best.abs() * self.threshold
        } else {
            loss < self.best
        };
        if improved {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

/// Early stopping on strict improvement of the monitored loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn step(&mut self, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

fn gather(windows: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    windows.select(Axis(0), idx)
}

fn check_finite(loss: &LossParts, what: impl FnOnce() -> String) -> Result<()> {
    if loss.total.is_finite() && loss.recon.is_finite() && loss.kl.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "loss became {} (recon {}, kl {}) at {}",
            loss.total,
            loss.recon,
            loss.kl,
            what()
        )))
    }
}

/// Train a fresh model on `windows`.
///
/// Windows are split at random into training and validation sets. Each
/// epoch shuffles the training set and takes one Adam step per mini-batch.
/// The mean validation loss (evaluation mode, `z = mu`) drives both the
/// plateau scheduler and early stopping, and the returned model holds the
/// parameters of the best validation epoch. All randomness comes from
/// `config.seed`.
pub fn train(
    windows: &WindowSet,
    norm: NormParams,
    arch: &VaeArchitecture,
    config: &TrainConfig,
) -> Result<(VaeModel, TrainReport)> {
    config.validate()?;
    arch.validate()?;
    if windows.windows.ncols() != arch.input_len {
        return Err(Error::Dimension {
            expected: arch.input_len,
            actual: windows.windows.ncols(),
        });
    }
    let n = windows.len();
    if n < config.batch_size {
        return Err(Error::Config(format!(
            "{n} windows is fewer than the batch size {}",
            config.batch_size
        )));
    }
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VaeModel::new(arch.clone(), &mut rng)?;
    model.norm = Some(norm);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_x = gather(&windows.windows, val_idx);
    let mut train_idx = train_idx.to_vec();

    let mut adam = AdamState::new(config.learning_rate, model.layers());
    let mut scheduler = PlateauScheduler::new(
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_threshold,
    );
    let mut stopper = EarlyStopping::new(config.early_stop_patience);

    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;
    let mut best_mse = f64::INFINITY;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let lr = adam.lr;
        train_idx.shuffle(&mut rng);
        let mut acc = LossParts::default();
        for (b, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let x = gather(&windows.windows, chunk);
            let eps = sample_noise(chunk.len(), arch.latent_dim, &mut rng);
            let (loss, grads) = model.loss_and_grads(x.view(), eps.view(), &mut rng)?;
            check_finite(&loss, || format!("epoch {epoch}, batch {b}"))?;
            adam.step(&mut model.layers_mut(), &grads).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} (epoch {epoch}, batch {b})"))
                }
                other => other,
            })?;
            let w = chunk.len() as f64;
            acc.total += loss.total * w;
            acc.recon += loss.recon * w;
            acc.kl += loss.kl * w;
        }
        let n_train = train_idx.len() as f64;
        let train_loss = LossParts {
            total: acc.total / n_train,
            recon: acc.recon / n_train,
            kl: acc.kl / n_train,
        };
        let (val_loss, val_mse) = model.eval_loss(val_x.view());
        check_finite(&val_loss, || format!("validation after epoch {epoch}"))?;

        history.push(EpochRecord {
            epoch,
            lr,
            train: train_loss,
            validation: val_loss,
            validation_mse: val_mse,
        });

        let (improved, stop) = stopper.step(val_loss.total);
        if improved {
            best_model = model.clone();
            best_epoch = epoch;
            best_loss = val_loss.total;
            best_mse = val_mse;
        }
        adam.lr = scheduler.step(val_loss.total, adam.lr);
        if stop {
            stopped_early = true;
            break;
        }
    }

    let report = TrainReport {
        seed: config.seed,
        history,
        best_epoch,
        best_validation_loss: best_loss,
        best_validation_mse: best_mse,
        stopped_early,
        n_train: train_idx.len(),
        n_validation: n_val,
    };
    Ok((best_model, report))
}
