//! Batch sampling, the optimiser and the experiment loop.
//!
//! A run owns one [`Model`] (coarse and fine networks in a single parameter
//! store) and an [`Adam`] state. Each iteration draws a batch, splits it into
//! chunks that are rendered and differentiated in parallel, sums the chunk
//! gradients and takes one optimiser step. Batch draws and per-ray jitter use
//! counter-based streams keyed by iteration and ray index, so a resumed run
//! continues exactly where an uninterrupted one would have.

pub mod ablation;
pub mod checkpoint;
pub mod data;
pub mod model;
pub mod optim;
pub mod trainer;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ablation::{ablation_sweep, AblationRow};
pub use checkpoint::Checkpoint;
pub use data::{sample_batch, Dataset, TrainBatch, View};
pub use model::{Model, ModelConfig, PassOutput, RenderSettings, RenderedView};
pub use optim::{learning_rate, mse_loss, scaled_sse, Adam};
pub use trainer::{evaluate_views, mean_metrics, train, LogRow, TrainOutcome, Trainer, ViewMetrics};

use crate::autodiff::{ArchiveError, AutodiffError};
use crate::fields::FieldError;
use crate::image::ImageError;
use crate::rendering::RenderError;
use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("non-finite loss at iteration {iteration}; offending batch written to {dump}")]
    NonFinite { iteration: u64, dump: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl TrainError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Everything that determines a training run besides the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Rays per batch.
    pub batch_size: usize,
    pub iterations: u64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub seed: u64,
    /// Validation interval in iterations; 0 evaluates only at the end.
    pub eval_every: u64,
    pub log_every: u64,
    /// Checkpoint interval; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// Validation views rendered per evaluation; 0 means all.
    pub val_views: usize,
    /// Rays per parallel work item.
    pub chunk: usize,
    pub jitter: bool,
    /// Std-dev of Gaussian noise added to raw densities while training.
    pub density_noise: f64,
    /// Length of an extra interval after `far`; 0 keeps the exact partition.
    pub terminal_padding: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            batch_size: 1024,
            iterations: 20_000,
            lr_init: 5e-4,
            lr_final: 5e-6,
            n_coarse: 32,
            n_fine: 32,
            seed: 0,
            eval_every: 2_000,
            log_every: 100,
            checkpoint_every: 2_000,
            val_views: 0,
            chunk: 256,
            jitter: true,
            density_noise: 0.0,
            terminal_padding: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_final > 0.0 && self.lr_init >= self.lr_final) || !self.lr_init.is_finite() {
            return bad(format!(
                "need lr_init ≥ lr_final > 0, got {} and {}",
                self.lr_init, self.lr_final
            ));
        }
        if self.n_coarse == 0 {
            return bad("n_coarse must be at least 1".into());
        }
        if self.chunk == 0 {
            return bad("chunk must be at least 1".into());
        }
        if !(self.density_noise >= 0.0 && self.terminal_padding >= 0.0) {
            return bad("density_noise and terminal_padding must be non-negative".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        self.model.field_config(false)?;
        self.model.field_config(true)?;
        Ok(())
    }

    pub fn train_settings(&self, background: [f64; 3]) -> RenderSettings {
        RenderSettings {
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            jitter: self.jitter,
            terminal_padding: self.terminal_padding,
            background,
            density_noise: self.density_noise,
        }
    }

    pub fn eval_settings(&self, background: [f64; 3]) -> RenderSettings {
        RenderSettings {
            terminal_padding: self.terminal_padding,
            ..RenderSettings::eval(self.n_coarse, self.n_fine, background)
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests;
