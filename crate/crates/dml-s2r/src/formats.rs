//! JSON artifacts: model checkpoints, resumable trainer state and split files.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so every parameter survives a save/load cycle bit for bit.

use std::path::Path;

use dml_s2r_core::nn::Layer;
use dml_s2r_core::siamese::PairHead;
use dml_s2r_core::{Activation, ExperimentSplit, Matrix, Mlp, SiameseModel, Trainer};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MODEL_KIND: &str = "siamese-v1";
pub const TRAINER_KIND: &str = "trainer-v1";

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| AppError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes pretty JSON with a trailing newline, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, to_json_string(value)?).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::parse(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub activation: Activation,
    /// `[fan_out × fan_in]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// An MLP as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpDoc {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub layers: Vec<LayerDoc>,
}

impl MlpDoc {
    pub fn from_mlp(mlp: &Mlp) -> Self {
        MlpDoc {
            layer_sizes: mlp.layer_sizes(),
            activations: mlp.activations(),
            layers: mlp
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    activation: l.activation,
                    weight: l.weight.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let n = self.layers.len();
        if self.layer_sizes.len() != n + 1 || self.activations.len() != n {
            return Err(AppError::Runtime(format!(
                "checkpoint lists {} sizes and {} activations for {n} layers",
                self.layer_sizes.len(),
                self.activations.len()
            )));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if l.activation != self.activations[i] {
                    return Err(AppError::Runtime(format!("layer {i} activation disagrees with the activation list")));
                }
                Ok(Layer {
                    weight: Matrix::from_vec(self.layer_sizes[i + 1], self.layer_sizes[i], l.weight.clone())?,
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp::from_layers(layers)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadDoc {
    /// Left-embedding weights followed by right-embedding weights.
    pub weight: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub model_kind: String,
    pub subnet: MlpDoc,
    pub head: HeadDoc,
}

impl ModelCheckpoint {
    pub fn from_model(m: &SiameseModel) -> Self {
        ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            model_kind: MODEL_KIND.to_string(),
            subnet: MlpDoc::from_mlp(&m.subnet),
            head: HeadDoc {
                weight: m.head.weight.clone(),
                bias: m.head.bias,
            },
        }
    }

    pub fn to_model(&self) -> Result<SiameseModel> {
        if self.version != CHECKPOINT_VERSION || self.model_kind != MODEL_KIND {
            return Err(AppError::Runtime(format!(
                "unsupported checkpoint {} v{}",
                self.model_kind, self.version
            )));
        }
        let head = PairHead {
            weight: self.head.weight.clone(),
            bias: self.head.bias,
        };
        Ok(SiameseModel::from_parts(self.subnet.to_mlp()?, head)?)
    }
}

pub fn save_model(path: &Path, m: &SiameseModel) -> Result<()> {
    write_json(path, &ModelCheckpoint::from_model(m))
}

pub fn load_model(path: &Path) -> Result<SiameseModel> {
    read_json::<ModelCheckpoint>(path)?.to_model()
}

/// Full training state: model, optimizer moments, units completed (the seed
/// cursor) and loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub version: u32,
    pub kind: String,
    pub trainer: Trainer,
}

pub fn save_trainer(path: &Path, t: &Trainer) -> Result<()> {
    write_json(
        path,
        &TrainerState {
            version: CHECKPOINT_VERSION,
            kind: TRAINER_KIND.to_string(),
            trainer: t.clone(),
        },
    )
}

pub fn load_trainer(path: &Path) -> Result<Trainer> {
    let s: TrainerState = read_json(path)?;
    if s.version != CHECKPOINT_VERSION || s.kind != TRAINER_KIND {
        return Err(AppError::parse(path, format!("unsupported trainer state {} v{}", s.kind, s.version)));
    }
    Ok(s.trainer)
}

pub fn save_split(path: &Path, split: &ExperimentSplit) -> Result<()> {
    write_json(path, split)
}

pub fn load_split(path: &Path) -> Result<ExperimentSplit> {
    read_json(path)
}
