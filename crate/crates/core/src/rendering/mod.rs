//! Cameras, ray sampling and volume-rendering quadrature.
//!
//! Each sample `t_i` owns the interval between the midpoints to its
//! neighbours (clamped to `near` and `far` at the ends), so the `δ_i` of a
//! ray always add up to `far − near`. Two renderers share this convention:
//! [`volume`] works on plain `f64` slices one ray at a time and serves as the
//! reference; [`batch`] builds the same computation on the autodiff tape for
//! training.

pub mod batch;
pub mod camera;
pub mod sampling;
pub mod volume;

use thiserror::Error;

pub use batch::{render_batch, render_batch_perturbed, BatchRender, SubspaceRender};
pub use camera::{generate_rays, Camera, Ray};
pub use sampling::{hierarchical_sample, ray_rng, stratified_sample, RaySamples};
pub use volume::{compose, compose_avg, integrate, render_features, render_radiance, Integrated, RenderResult, SubspacePixel};

use crate::autodiff::AutodiffError;
use crate::fields::FieldError;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("pixel index {index} out of range for {count} pixels")]
    PixelOutOfBounds { index: usize, count: usize },
    #[error("need 0 < near < far, got near={near} far={far}")]
    Bounds { near: f64, far: f64 },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("sample depths must be strictly increasing inside [near, far]")]
    Unsorted,
    #[error("{what}: expected {expected} values, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rays in a batch must share the same sample count")]
    Ragged,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
