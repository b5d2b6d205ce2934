//! Model checkpoints: a JSON manifest plus a little-endian f64 payload of
//! all parameters in layer declaration order (weights row-major, then bias).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{VaeArchitecture, VaeModel};
use super::window::NormParams;
use crate::error::{Error, Result};
use crate::nn::{params_from_le_bytes, params_to_le_bytes, Activation};

pub const CHECKPOINT_FORMAT: &str = "gpp-vae-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub architecture: VaeArchitecture,
    pub layers: Vec<LayerSpec>,
    pub norm: NormParams,
    pub seed: u64,
    /// Epoch whose parameters were saved.
    pub epoch: usize,
    pub n_params: usize,
    /// File name of the payload, relative to the manifest.
    pub payload: String,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f64"))
}

pub fn save_checkpoint(model: &VaeModel, path: &Path, seed: u64, epoch: usize) -> Result<()> {
    let norm = model
        .norm
        .ok_or_else(|| Error::Config("cannot checkpoint a model without normalization".into()))?;
    let (manifest_path, payload_path) = paths(path);
    let layers = model
        .layers()
        .into_iter()
        .zip(model.layer_descriptions())
        .map(|(l, (name, activation))| LayerSpec {
            name,
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation,
        })
        .collect();
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        architecture: model.arch.clone(),
        layers,
        norm,
        seed,
        epoch,
        n_params: model.n_params(),
        payload: payload_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    fs::write(&payload_path, params_to_le_bytes(model.layers()))
        .map_err(|e| Error::io(&payload_path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(VaeModel, CheckpointManifest)> {
    let (manifest_path, _) = paths(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::format(
            "format",
            format!("expected `{CHECKPOINT_FORMAT}`, got `{}`", manifest.format),
        ));
    }
    let mut model = VaeModel::zeros(manifest.architecture.clone())?;
    let shapes: Vec<(usize, usize)> = model
        .layers()
        .iter()
        .map(|l| (l.in_dim(), l.out_dim()))
        .collect();
    let declared: Vec<(usize, usize)> = manifest
        .layers
        .iter()
        .map(|l| (l.in_dim, l.out_dim))
        .collect();
    if shapes != declared {
        return Err(Error::Shape(format!(
            "manifest layers {declared:?} do not match the architecture {shapes:?}"
        )));
    }
    let payload_path = manifest_path.with_file_name(&manifest.payload);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    params_from_le_bytes(model.layers_mut(), &bytes)?;
    model.norm = Some(NormParams::new(manifest.norm.x_min, manifest.norm.x_max)?);
    Ok((model, manifest))
}
