//! Training checkpoints on top of the array archive.
//!
//! Parameters are stored under their own names, Adam moments under
//! `adam.m.<name>` and `adam.v.<name>`. The metadata object carries the full
//! training config, its hash and the model hash, plus the scene framing
//! needed to render without the dataset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, Model, TrainConfig, TrainError};
use crate::autodiff::{read_archive, write_archive, ArchiveEntry, ParamStore, Scalar, Tensor};
use crate::math::Aabb;

/// Scene framing a model was trained for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub bbox: Aabb,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    iteration: u64,
    precision: String,
    config_hash: String,
    model_hash: String,
    config: TrainConfig,
    frame: SceneFrame,
    has_optimizer: bool,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub iteration: u64,
    /// Parameter type the run used (`f32` or `f64`).
    pub precision: String,
    pub config: TrainConfig,
    pub frame: SceneFrame,
    /// Parameters widened to `f64`; exact for `f32` runs.
    pub params: ParamStore<f64>,
    pub adam: Option<Adam>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(model: &Model<T>, adam: Option<&Adam>, config: &TrainConfig, frame: SceneFrame, iteration: u64) -> Self {
        Self {
            iteration,
            precision: T::NAME.to_string(),
            config: config.clone(),
            frame,
            params: model.params.cast(),
            adam: adam.cloned(),
        }
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    pub fn model_hash(&self) -> String {
        self.config.model.hash()
    }

    /// Writes to a sibling temporary directory, then swaps it in, so a
    /// crash never leaves a half-written checkpoint at `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        let mut entries: Vec<ArchiveEntry> = self
            .params
            .iter()
            .map(|(name, t)| ArchiveEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.to_f64_vec(),
            })
            .collect();
        if let Some(adam) = &self.adam {
            for (k, (name, t)) in self.params.iter().enumerate() {
                for (tag, moments) in [("m", &adam.m[k]), ("v", &adam.v[k])] {
                    entries.push(ArchiveEntry {
                        name: format!("adam.{tag}.{name}"),
                        shape: t.shape().to_vec(),
                        values: moments.clone(),
                    });
                }
            }
            entries.push(ArchiveEntry {
                name: "adam.step".into(),
                shape: vec![1],
                values: vec![adam.step as f64],
            });
        }
        let meta = Metadata {
            iteration: self.iteration,
            precision: self.precision.clone(),
            config_hash: self.config_hash(),
            model_hash: self.model_hash(),
            config: self.config.clone(),
            frame: self.frame,
            has_optimizer: self.adam.is_some(),
        };
        let tmp = dir.with_extension("tmp");
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(TrainError::io(&tmp))?;
        }
        write_archive(&tmp, &entries, serde_json::to_value(meta).expect("metadata serialises"))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(TrainError::io(dir))?;
        }
        fs::rename(&tmp, dir).map_err(TrainError::io(dir))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let (manifest, entries) = read_archive(dir)?;
        let meta: Metadata = serde_json::from_value(manifest.metadata)
            .map_err(|e| TrainError::Checkpoint(format!("{}: metadata: {e}", dir.display())))?;
        if meta.config.hash() != meta.config_hash || meta.config.model.hash() != meta.model_hash {
            return Err(TrainError::Checkpoint(format!(
                "{}: stored config does not match its hash",
                dir.display()
            )));
        }
        let mut params = ParamStore::<f64>::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        let mut step = None;
        for e in entries {
            if let Some(rest) = e.name.strip_prefix("adam.") {
                match rest.split_once('.') {
                    Some(("m", _)) => m.push(e.values),
                    Some(("v", _)) => v.push(e.values),
                    _ if rest == "step" => step = e.values.first().map(|s| *s as u64),
                    _ => return Err(TrainError::Checkpoint(format!("unexpected array {}", e.name))),
                }
            } else {
                params.add(e.name, Tensor::from_f64(e.shape, &e.values)?);
            }
        }
        let adam = if meta.has_optimizer {
            let step = step.ok_or_else(|| TrainError::Checkpoint("missing optimizer step".into()))?;
            if m.len() != params.len() || v.len() != params.len() {
                return Err(TrainError::Checkpoint("optimizer moments do not match parameters".into()));
            }
            Some(Adam { step, m, v })
        } else {
            None
        };
        Ok(Self {
            iteration: meta.iteration,
            precision: meta.precision,
            config: meta.config,
            frame: meta.frame,
            params,
            adam,
        })
    }

    /// Rebuilds the model, checking every parameter name and shape against
    /// what the stored config produces.
    pub fn model<T: Scalar>(&self) -> Result<Model<T>, TrainError> {
        let mut model = Model::<T>::new(self.config.model, self.frame.bbox, self.config.seed)?;
        if model.params.len() != self.params.len() {
            return Err(TrainError::Checkpoint(format!(
                "config builds {} parameter tensors, checkpoint has {}",
                model.params.len(),
                self.params.len()
            )));
        }
        for (name, t) in self.params.iter() {
            let id = model
                .params
                .find(name)
                .ok_or_else(|| TrainError::Checkpoint(format!("unknown parameter {name}")))?;
            let slot = model.params.get_mut(id);
            if slot.shape() != t.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "parameter {name}: shape {:?} in checkpoint, {:?} in config",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.cast();
        }
        Ok(model)
    }

    /// Fails unless `config` describes the same network as this checkpoint.
    pub fn check_model(&self, config: &super::ModelConfig) -> Result<(), TrainError> {
        if config.hash() != self.model_hash() {
            return Err(TrainError::Checkpoint(format!(
                "model config hash {} does not match checkpoint {}",
                &config.hash()[..12],
                &self.model_hash()[..12]
            )));
        }
        Ok(())
    }
}
