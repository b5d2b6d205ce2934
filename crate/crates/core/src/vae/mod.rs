//! Variational autoencoder over 12-month windows.
//!
//! The encoder maps a normalized window to the mean and log-variance of a
//! diagonal Gaussian latent; training samples `z = mu + sigma * eps`, the
//! decoder (tanh output) reconstructs the window, and the loss is the
//! reconstruction error plus `beta` times the closed-form KL divergence to
//! the standard normal prior. Inference uses `z = mu`.

mod checkpoint;
mod model;
mod search;
mod train;
mod window;

use std::ops::Range;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, LayerSpec};
pub use model::{
    kl_divergence, reparameterize, reparameterize_with, sample_noise, vae_loss, LossParts,
    ReconLoss, VaeArchitecture, VaeGrads, VaeModel,
};
pub use search::{grid_search, SearchSpace, Trial, MAX_TRIALS};
pub use train::{
    train, EarlyStopping, EpochRecord, PlateauScheduler, TrainConfig, TrainReport,
};
pub use window::{normalize, NormParams, WindowSet, SEQUENCE_LEN};

use crate::anomaly::{AnomalyField, Method};
use crate::error::{Error, Result};
use crate::grid::MassSeries;

/// A reconstructed mass field and the months where it may be used.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub series: MassSeries,
    pub valid: Range<usize>,
}

/// Months `[seq, n - seq)`: the first and last sequence-length block are
/// excluded from analysis.
pub fn edge_trimmed_span(n_months: usize, seq: usize) -> Range<usize> {
    seq.min(n_months)..n_months.saturating_sub(seq).max(seq.min(n_months))
}

/// Slide windows at stride 1 over each row, decode each through the
/// posterior mean, average overlapping values per month and map back to
/// mass units.
pub fn reconstruct(model: &VaeModel, mass: &MassSeries) -> Result<Reconstruction> {
    let seq = model.arch.input_len;
    let n = mass.n_months();
    if n < seq {
        return Err(Error::TooShort {
            needed: seq,
            actual: n,
        });
    }
    let norm = model.norm.ok_or_else(|| {
        Error::Config("model has no normalization parameters; it was never trained".into())
    })?;
    let windows = WindowSet::from_mass(mass, &norm)?;
    let decoded = model.reconstruct_batch(windows.windows.view());

    let per_row = n - seq + 1;
    let mut values = vec![0.0; mass.n_cells() * n];
    let coverage: Vec<f64> = (0..n)
        .map(|t| {
            let first = t.saturating_sub(seq - 1);
            let last = t.min(n - seq);
            (last - first + 1) as f64
        })
        .collect();
    for r in 0..mass.n_cells() {
        let out = &mut values[r * n..(r + 1) * n];
        for start in 0..per_row {
            let row = decoded.row(r * per_row + start);
            for (k, v) in row.iter().enumerate() {
                out[start + k] += v;
            }
        }
        for (v, c) in out.iter_mut().zip(&coverage) {
            *v = norm.denormalize(*v / c);
        }
    }
    Ok(Reconstruction {
        series: MassSeries::new(mass.cells().to_vec(), n, mass.calendar(), values)?,
        valid: edge_trimmed_span(n, seq),
    })
}

/// Number of windows covering month `t` of an `n`-month series.
pub fn window_coverage(t: usize, n: usize, seq: usize) -> usize {
    if n < seq || t >= n {
        return 0;
    }
    t.min(n - seq) - t.saturating_sub(seq - 1) + 1
}

/// `original - reconstructed` on the reconstruction's valid months.
pub fn vae_anomalies(original: &MassSeries, reconstructed: &Reconstruction) -> Result<AnomalyField> {
    if !original.same_layout(&reconstructed.series) {
        return Err(Error::Misaligned(format!(
            "original has {} cells x {} months, reconstruction {} x {}",
            original.n_cells(),
            original.n_months(),
            reconstructed.series.n_cells(),
            reconstructed.series.n_months()
        )));
    }
    let values = original
        .values()
        .iter()
        .zip(reconstructed.series.values())
        .map(|(o, r)| o - r)
        .collect();
    AnomalyField::new(
        Method::Vae,
        MassSeries::new(
            original.cells().to_vec(),
            original.n_months(),
            original.calendar(),
            values,
        )?,
        reconstructed.valid.clone(),
    )
}
