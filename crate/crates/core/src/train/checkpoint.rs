//! `<name>.ckpt.json` manifest plus `<name>.ckpt.bin` little-endian `f32`
//! parameter blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig, Variant};
use super::model::{Model, ModelParams};
use super::trainer::EpochLog;
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::graphio::{f32_from_le_bytes, f32_to_le_bytes};

pub const CHECKPOINT_VERSION: u64 = 1;

/// A trained model with the configuration and history that produced it.
/// Parameters are rounded to `f32` on construction, so a saved and reloaded
/// checkpoint computes bitwise the same outputs as the in-memory one.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train_config: TrainConfig,
    /// Epoch whose parameters were kept (0 = untrained).
    pub epoch: usize,
    pub history: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u64,
    variant: Variant,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    history: Vec<EpochLog>,
    /// Blob file name, relative to the manifest.
    blob: String,
    tensors: Vec<TensorEntry>,
}

/// Offset and length are counted in `f32` elements.
#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    offset: usize,
    length: usize,
    shape: Vec<usize>,
}

/// Manifest and blob paths for a checkpoint base path; a trailing
/// `.ckpt.json` is accepted and stripped.
pub fn checkpoint_paths(base: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let s = base.as_ref().to_string_lossy();
    let stem = s.strip_suffix(".ckpt.json").unwrap_or(&s);
    (PathBuf::from(format!("{stem}.ckpt.json")), PathBuf::from(format!("{stem}.ckpt.bin")))
}

impl Checkpoint {
    pub fn new(mut model: Model, train_config: TrainConfig, epoch: usize, history: Vec<EpochLog>) -> Self {
        model.params.quantize_f32();
        Self {
            model,
            train_config,
            epoch,
            history,
        }
    }

    /// Writes manifest and blob; returns the manifest path.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<PathBuf> {
        let (json_path, bin_path) = checkpoint_paths(base);
        let mut values: Vec<f32> = Vec::with_capacity(self.model.params.count());
        let mut tensors = Vec::with_capacity(self.model.params.names.len());
        for (name, t) in self.model.params.names.iter().zip(&self.model.params.tensors) {
            tensors.push(TensorEntry {
                name: name.clone(),
                offset: values.len(),
                length: t.len(),
                shape: t.shape().to_vec(),
            });
            values.extend(t.data().iter().map(|&v| v as f32));
        }
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            variant: self.model.config.variant,
            model_config: self.model.config.clone(),
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            blob: bin_path
                .file_name()
                .expect("checkpoint path has a file name")
                .to_string_lossy()
                .into_owned(),
            tensors,
        };
        if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&bin_path, f32_to_le_bytes(&values)).map_err(|e| Error::io(&bin_path, e))?;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
        Ok(json_path)
    }

    pub fn load(base: impl AsRef<Path>) -> Result<Self> {
        let (json_path, _) = checkpoint_paths(base);
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let parse = |e: serde_json::Error| Error::Parse {
            path: json_path.display().to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        };
        let probe: serde_json::Value = serde_json::from_str(&text).map_err(parse)?;
        let found = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let m: Manifest = serde_json::from_str(&text).map_err(parse)?;
        let invalid = |msg: String| Error::InvalidFile {
            path: json_path.display().to_string(),
            msg,
        };
        if m.variant != m.model_config.variant {
            return Err(invalid(format!(
                "variant tag {} disagrees with model config {}",
                m.variant, m.model_config.variant
            )));
        }
        let bin_path = json_path.parent().unwrap_or(Path::new(".")).join(&m.blob);
        let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let total = m.tensors.iter().map(|t| t.offset + t.length).max().unwrap_or(0);
        let values = f32_from_le_bytes(&bytes, total, &format!("{}: parameter blob", bin_path.display()))?;
        let mut names = Vec::with_capacity(m.tensors.len());
        let mut tensors = Vec::with_capacity(m.tensors.len());
        for e in &m.tensors {
            if e.shape.iter().product::<usize>() != e.length {
                return Err(invalid(format!("tensor {} has shape {:?} but length {}", e.name, e.shape, e.length)));
            }
            let data = values[e.offset..e.offset + e.length].iter().map(|&v| v as f64).collect();
            names.push(e.name.clone());
            tensors.push(Tensor::new(e.shape.clone(), data)?);
        }
        let model = Model::from_parts(m.model_config, ModelParams { names, tensors })?;
        Ok(Self {
            model,
            train_config: m.train_config,
            epoch: m.epoch,
            history: m.history,
        })
    }

    /// Loads and insists on a particular model variant.
    pub fn load_expecting(base: impl AsRef<Path>, variant: Variant) -> Result<Self> {
        let ckpt = Self::load(base)?;
        if ckpt.model.config.variant != variant {
            return Err(Error::VariantMismatch {
                expected: variant.to_string(),
                found: ckpt.model.config.variant.to_string(),
            });
        }
        Ok(ckpt)
    }
}
