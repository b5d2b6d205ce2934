//! Small dense-network toolkit: layers, activations, dropout, Adam and
//! exact backpropagation through fixed MLP stacks. All arithmetic is f64.

mod activation;
mod adam;
mod dropout;
mod layer;
mod mlp;

pub use activation::Activation;
pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use dropout::{check_rate, dropout, dropout_mask, Mode};
pub use layer::{glorot_bound, DenseGrad, DenseLayer};
pub use mlp::{Block, ForwardCache, Mlp};

use crate::error::{Error, Result};

/// Serialize layer parameters (weights row-major, then bias, per layer) as
/// little-endian f64.
pub fn params_to_le_bytes<'a>(layers: impl IntoIterator<Item = &'a DenseLayer>) -> Vec<u8> {
    let mut out = Vec::new();
    for layer in layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`params_to_le_bytes`] into layers of already-known shape.
pub fn params_from_le_bytes<'a>(
    layers: impl IntoIterator<Item = &'a mut DenseLayer>,
    bytes: &[u8],
) -> Result<()> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Shape(format!(
            "parameter payload of {} bytes is not a whole number of f64",
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    let mut consumed = 0usize;
    for layer in layers {
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *p = values.next().ok_or_else(|| {
                Error::Shape(format!(
                    "parameter payload ends after {consumed} values; model needs more"
                ))
            })?;
            consumed += 1;
        }
    }
    let extra = values.count();
    if extra > 0 {
        return Err(Error::Shape(format!(
            "parameter payload has {extra} values beyond the model's {consumed}"
        )));
    }
    Ok(())
}
