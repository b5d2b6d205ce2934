use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate {rate} is not in [0, 1)")))
    }
}

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; evaluation is the
/// identity.
pub fn dropout<R: Rng + ?Sized>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> Vec<f64> {
    if mode == Mode::Eval || rate == 0.0 {
        return x.to_vec();
    }
    let keep = 1.0 / (1.0 - rate);
    x.iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v * keep })
        .collect()
}

/// Mask of `0` or `1 / (1 - rate)` entries for a batch.
pub fn dropout_mask<R: Rng + ?Sized>(
    shape: (usize, usize),
    rate: f64,
    rng: &mut R,
) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}
