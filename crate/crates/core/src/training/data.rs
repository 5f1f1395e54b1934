//! In-memory posed image datasets and ray batches.

use std::path::Path;

use rand::Rng;

use super::TrainError;
use crate::image::Image;
use crate::math::Aabb;
use crate::rendering::{Camera, Ray};
use crate::scene::{DatasetManifest, Split};

#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
    pub split: Split,
    pub file_path: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub views: Vec<View>,
    pub near: f64,
    pub far: f64,
    pub bbox: Aabb,
    pub background: [f64; 3],
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let manifest = DatasetManifest::load(dir)?;
        let mut views = Vec::with_capacity(manifest.frames.len());
        for f in &manifest.frames {
            let image = Image::load_png(&dir.join(&f.file_path))?;
            if image.width() != manifest.width || image.height() != manifest.height {
                return Err(TrainError::Data(format!(
                    "{} is {}×{}, manifest says {}×{}",
                    f.file_path,
                    image.width(),
                    image.height(),
                    manifest.width,
                    manifest.height
                )));
            }
            views.push(View {
                camera: manifest.camera(f)?,
                image,
                split: f.split,
                file_path: f.file_path.clone(),
            });
        }
        Ok(Self {
            views,
            near: manifest.near,
            far: manifest.far,
            bbox: manifest.bbox,
            background: manifest.background,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&View> {
        self.views.iter().filter(|v| v.split == split).collect()
    }
}

/// Rays with their ground-truth colours.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub rays: Vec<Ray>,
    /// `[R, 3]`, row-major.
    pub targets: Vec<f64>,
    /// `(view index, pixel index)` of every ray.
    pub origins: Vec<(usize, usize)>,
}

/// Uniform draw, with replacement, over all pixels of all training views.
pub fn sample_batch(dataset: &Dataset, batch_size: usize, rng: &mut impl Rng) -> Result<TrainBatch, TrainError> {
    let train: Vec<usize> = (0..dataset.views.len())
        .filter(|&i| dataset.views[i].split == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(TrainError::Data("dataset has no training views".into()));
    }
    // Views share one resolution, so a uniform pixel index is uniform over
    // (view, pixel) pairs.
    let per_view = dataset.views[train[0]].camera.pixel_count();
    let mut batch = TrainBatch {
        rays: Vec::with_capacity(batch_size),
        targets: Vec::with_capacity(batch_size * 3),
        origins: Vec::with_capacity(batch_size),
    };
    for _ in 0..batch_size {
        let flat = rng.random_range(0..train.len() * per_view);
        let (vi, pi) = (train[flat / per_view], flat % per_view);
        let view = &dataset.views[vi];
        let cam = &view.camera;
        batch.rays.push(cam.ray(pi % cam.width, pi / cam.width, dataset.near, dataset.far));
        batch.targets.extend(view.image.at(pi).map(|c| c.clamp(0.0, 1.0)));
        batch.origins.push((vi, pi));
    }
    Ok(batch)
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}
