//! Exhaustive search over a small hyperparameter grid.

use serde::{Deserialize, Serialize};

use super::model::VaeArchitecture;
use super::train::{train, TrainConfig};
use super::window::{NormParams, WindowSet};
use crate::error::{Error, Result};

pub const MAX_TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub latent_dims: Vec<usize>,
    pub hidden: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
}

impl SearchSpace {
    pub fn n_trials(&self) -> usize {
        self.latent_dims.len() * self.hidden.len() * self.learning_rates.len()
    }

    /// Trials in order: hidden sizes, then latent dimension, then learning rate.
    pub fn trials(&self, base: &VaeArchitecture) -> Vec<(VaeArchitecture, f64)> {
        let mut out = Vec::with_capacity(self.n_trials());
        for hidden in &self.hidden {
            for &latent_dim in &self.latent_dims {
                for &lr in &self.learning_rates {
                    let arch = VaeArchitecture {
                        hidden: hidden.clone(),
                        latent_dim,
                        ..base.clone()
                    };
                    out.push((arch, lr));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Train one model per grid point. Returns the trials in grid order and the
/// index of the best one: lowest best-validation loss, earliest index on ties.
pub fn grid_search(
    windows: &WindowSet,
    norm: NormParams,
    space: &SearchSpace,
    base_arch: &VaeArchitecture,
    base_config: &TrainConfig,
) -> Result<(Vec<Trial>, usize)> {
    let n = space.n_trials();
    if n == 0 {
        return Err(Error::Config("search space is empty".into()));
    }
    if n > MAX_TRIALS {
        return Err(Error::Config(format!(
            "search space has {n} trials; at most {MAX_TRIALS} are allowed"
        )));
    }
    let mut trials = Vec::with_capacity(n);
    for (index, (arch, lr)) in space.trials(base_arch).into_iter().enumerate() {
        let config = TrainConfig {
            learning_rate: lr,
            ..base_config.clone()
        };
        let (_, report) = train(windows, norm, &arch, &config)?;
        trials.push(Trial {
            index,
            hidden: arch.hidden,
            latent_dim: arch.latent_dim,
            learning_rate: lr,
            best_validation_loss: report.best_validation_loss,
            best_epoch: report.best_epoch,
            epochs_run: report.history.len(),
        });
    }
    Ok((trials.clone(), best_trial(&trials)))
}

/// Index of the minimal loss; the first one wins ties.
pub fn best_trial(trials: &[Trial]) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.best_validation_loss < trials[best].best_validation_loss {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(index: usize, loss: f64) -> Trial {
        Trial {
            index,
            hidden: vec![8],
            latent_dim: 2,
            learning_rate: 0.01,
            best_validation_loss: loss,
            best_epoch: 1,
            epochs_run: 1,
        }
    }

    #[test]
    fn ties_go_to_earliest() {
        let trials = vec![trial(0, 0.3), trial(1, 0.1), trial(2, 0.1), trial(3, 0.2)];
        assert_eq!(best_trial(&trials), 1);
    }

    #[test]
    fn trial_order_and_limit() {
        let space = SearchSpace {
            latent_dims: vec![2, 5],
            hidden: vec![vec![16], vec![32, 16]],
            learning_rates: vec![0.001, 0.005],
        };
        let trials = space.trials(&VaeArchitecture::default());
        assert_eq!(trials.len(), 8);
        assert_eq!(trials[0].0.hidden, vec![16]);
        assert_eq!(trials[1].1, 0.005);
        assert_eq!(trials[2].0.latent_dim, 5);
        assert_eq!(trials[4].0.hidden, vec![32, 16]);

        let big = SearchSpace {
            latent_dims: (1..=3).collect(),
            hidden: vec![vec![8]; 7],
            learning_rates: vec![0.01],
        };
        assert_eq!(big.n_trials(), 21);
    }
}
