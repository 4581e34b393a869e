//! Versioned on-disk format for trained models. Loading refuses mismatched
//! versions and re-validates self-consistency.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpace, LatentModel};
use crate::error::{Error, Result};
use crate::filter::ProcessNoise;
use crate::model::SensorLayout;
use crate::sparsity::{GroupMap, SelectionReport};
use crate::train::{TrainedModel, Variant};

pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DemoLatent {
    weights: Vec<f64>,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModelFile {
    pub format_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub variant: Variant,
    raw_layout: SensorLayout,
    layout: SensorLayout,
    basis: BasisSpace,
    group_map: Option<GroupMap>,
    selection: Option<SelectionReport>,
    demos: Vec<DemoLatent>,
    residual_rms: Vec<f64>,
    process_noise: ProcessNoise,
    measurement_var: Vec<f64>,
    timestep: f64,
}

impl TrainedModelFile {
    pub fn from_model(model: &TrainedModel, seed: u64, config_hash: &str) -> Self {
        TrainedModelFile {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            variant: model.variant,
            raw_layout: model.raw_layout.clone(),
            layout: model.layout.clone(),
            basis: model.basis.as_ref().clone(),
            group_map: model.group_map.clone(),
            selection: model.selection.clone(),
            demos: model
                .latents
                .iter()
                .zip(&model.lengths)
                .map(|(l, &length)| DemoLatent {
                    weights: l.weights().iter().copied().collect(),
                    length,
                })
                .collect(),
            residual_rms: model.residual_rms.clone(),
            process_noise: model.process_noise,
            measurement_var: model.measurement_var.clone(),
            timestep: model.timestep,
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported model format version '{}' (expected '{MODEL_FORMAT_VERSION}')",
                self.format_version
            )));
        }
        let basis = Arc::new(self.basis.restore());
        if basis.channel_count() != self.layout.len() {
            return Err(Error::ModelFile(format!(
                "basis covers {} channels, layout has {}",
                basis.channel_count(),
                self.layout.len()
            )));
        }
        if self.demos.len() < 2 {
            return Err(Error::ModelFile("model must carry at least 2 demonstrations".into()));
        }
        let total = basis.total();
        let mut latents = Vec::with_capacity(self.demos.len());
        let mut lengths = Vec::with_capacity(self.demos.len());
        for (i, d) in self.demos.into_iter().enumerate() {
            if d.weights.len() != total {
                return Err(Error::ModelFile(format!(
                    "demo {i}: {} weights for basis total {total}",
                    d.weights.len()
                )));
            }
            latents.push(LatentModel::new(DVector::from_vec(d.weights), Arc::clone(&basis))?);
            lengths.push(d.length);
        }
        if let Some(sel) = &self.selection {
            for name in &sel.selected {
                if self.layout.index_of(name).is_none() {
                    return Err(Error::ModelFile(format!(
                        "selected channel '{name}' missing from the model layout"
                    )));
                }
            }
        }
        if self.measurement_var.len() != self.layout.observed_indices().len() {
            return Err(Error::ModelFile("measurement variance count mismatch".into()));
        }
        Ok(TrainedModel {
            variant: self.variant,
            raw_layout: self.raw_layout,
            layout: self.layout,
            basis,
            group_map: self.group_map,
            selection: self.selection,
            latents,
            lengths,
            residual_rms: self.residual_rms,
            process_noise: self.process_noise,
            measurement_var: self.measurement_var,
            timestep: self.timestep,
        })
    }
}

/// Writes a model file (pretty JSON, deterministic field order).
pub fn save_model(path: &Path, model: &TrainedModel, seed: u64, config_hash: &str) -> Result<()> {
    let file = TrainedModelFile::from_model(model, seed, config_hash);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFile(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads and validates a model file.
pub fn load_model(path: &Path) -> Result<(TrainedModel, TrainedModelFile)> {
    let text = fs::read_to_string(path)?;
    let file: TrainedModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
    let meta = file.clone();
    Ok((file.into_model()?, meta))
}
