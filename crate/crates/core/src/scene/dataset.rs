use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SceneError, SceneSpec};
use crate::image::Image;
use crate::math::{Aabb, Pose, Vec3};
use crate::rendering::Camera;

/// Pose tolerance used when reading a manifest back.
pub const MANIFEST_POSE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub file_path: String,
    /// Row-major camera-to-world matrix.
    pub transform_matrix: [[f64; 4]; 4],
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub scene: String,
    pub camera_angle_x: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    pub bbox: Aabb,
    pub background: [f64; 3],
    pub frames: Vec<Frame>,
}

impl DatasetManifest {
    pub fn camera(&self, frame: &Frame) -> Result<Camera, SceneError> {
        Camera::from_fov(self.width, self.height, self.camera_angle_x, Pose(frame.transform_matrix))
            .map_err(|e| SceneError::Invalid(e.to_string()))
    }

    pub fn frames_in(&self, split: Split) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    pub fn save(&self, dir: &Path) -> Result<(), SceneError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads `dir/manifest.json`, rejecting malformed poses and frames.
    pub fn load(dir: &Path) -> Result<Self, SceneError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let manifest: Self = serde_path_to_error::deserialize(de).map_err(|e| SceneError::Manifest {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        manifest.validate().map_err(|reason| SceneError::Manifest {
            path: path.display().to_string(),
            reason,
        })?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("image size must be positive".into());
        }
        if !(self.camera_angle_x > 0.0 && self.camera_angle_x < std::f64::consts::PI) {
            return Err(format!("camera_angle_x {} outside (0, π)", self.camera_angle_x));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(format!("need 0 < near < far, got {} and {}", self.near, self.far));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, f) in self.frames.iter().enumerate() {
            let err = Pose(f.transform_matrix).orthonormality_error();
            if !(err <= MANIFEST_POSE_TOLERANCE) {
                return Err(format!(
                    "frame {i} ({}): rotation is not orthonormal (error {err:.2e} > {MANIFEST_POSE_TOLERANCE:e})",
                    f.file_path
                ));
            }
            if !seen.insert(&f.file_path) {
                return Err(format!("frame {i}: duplicate file_path {}", f.file_path));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetOptions {
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Primary rays per pixel along each axis (1 = pixel centre only).
    pub supersample: usize,
}

impl DatasetOptions {
    pub fn new(n_views: usize, resolution: usize, seed: u64) -> Self {
        Self {
            n_views,
            width: resolution,
            height: resolution,
            seed,
            supersample: 1,
        }
    }
}

/// `n` cameras evenly spaced in azimuth on a horizontal circle, all looking
/// at `target`. View `i` sits at azimuth `2πi/n`.
pub fn circle_poses(radius: f64, height: f64, target: Vec3, n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            let eye = Vec3::new(target.x + radius * phi.cos(), target.y + radius * phi.sin(), height);
            Pose::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0))
        })
        .collect()
}

/// Train/val/test sizes in the ratio 100:10:10, rounded, with the test split
/// taking the remainder. From three views up every split is non-empty.
pub fn split_counts(n: usize) -> [usize; 3] {
    if n < 3 {
        return [n, 0, 0];
    }
    let train = ((n as f64 * 100.0 / 120.0).round() as usize).min(n - 2);
    let val = ((n as f64 * 10.0 / 120.0).round() as usize).clamp(1, n - train - 1);
    [train, val, n - train - val]
}

/// Random partition of `n` views following [`split_counts`].
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let [train, val, _] = split_counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut splits = vec![Split::Test; n];
    for (rank, &view) in order.iter().enumerate() {
        splits[view] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// Ray-traces one view; pixels are independent and rendered in parallel.
pub fn render_view(scene: &SceneSpec, cam: &Camera, supersample: usize) -> Image {
    let s = supersample.max(1);
    let rows: Vec<Vec<f64>> = (0..cam.height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(cam.width * 3);
            for x in 0..cam.width {
                let mut acc = [0.0; 3];
                for sy in 0..s {
                    for sx in 0..s {
                        let px = x as f64 + (sx as f64 + 0.5) / s as f64;
                        let py = y as f64 + (sy as f64 + 0.5) / s as f64;
                        let ray = cam.ray_through(px, py, scene.rig.near, scene.rig.far);
                        let c = scene.trace(ray.origin, ray.dir, scene.max_bounces).rgb;
                        for k in 0..3 {
                            acc[k] += c[k];
                        }
                    }
                }
                row.extend(acc.map(|v| v / (s * s) as f64));
            }
            row
        })
        .collect();
    Image::new(cam.width, cam.height, rows.concat()).expect("row lengths match width")
}

/// Renders `opts.n_views` views of `scene` into `out_dir/images/` and writes
/// `out_dir/manifest.json`.
pub fn generate_dataset(scene: &SceneSpec, opts: &DatasetOptions, out_dir: &Path) -> Result<DatasetManifest, SceneError> {
    if opts.n_views < 3 {
        return Err(SceneError::Invalid(format!("need at least 3 views, got {}", opts.n_views)));
    }
    if opts.width == 0 || opts.height == 0 {
        return Err(SceneError::Invalid("resolution must be positive".into()));
    }
    scene.validate()?;
    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|source| SceneError::Io {
        path: images.display().to_string(),
        source,
    })?;
    let rig = &scene.rig;
    let poses = circle_poses(rig.radius, rig.height, rig.target, opts.n_views);
    let splits = assign_splits(opts.n_views, opts.seed);
    let mut frames = Vec::with_capacity(opts.n_views);
    for (i, (pose, split)) in poses.iter().zip(splits).enumerate() {
        let cam = Camera::from_fov(opts.width, opts.height, rig.fov_x, *pose)
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
        let img = render_view(scene, &cam, opts.supersample);
        let file_path = format!("images/{i:03}.png");
        img.save_png(&out_dir.join(&file_path))?;
        frames.push(Frame {
            file_path,
            transform_matrix: pose.0,
            split,
        });
    }
    let manifest = DatasetManifest {
        scene: scene.name.clone(),
        camera_angle_x: rig.fov_x,
        width: opts.width,
        height: opts.height,
        near: rig.near,
        far: rig.far,
        bbox: scene.bbox,
        background: scene.background,
        frames,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}
