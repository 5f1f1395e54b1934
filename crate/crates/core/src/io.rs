//! Experiment files, scene references, rendered-view export and evaluation
//! reports.
//!
//! An experiment is one TOML file:
//!
//! ```toml
//! seed = 0
//! output = "runs/toy_a_ms"
//!
//! [data]
//! scene = "toy_A"      # builtin name or path to a scene JSON; or
//! # dataset = "data/x" # an existing dataset directory
//! views = 72
//! resolution = 64
//!
//! [train]
//! batch_size = 512
//! iterations = 20000
//!
//! [train.model.backbone]
//! depth = 4
//! width = 64
//!
//! [train.model.head]
//! type = "multi_space"
//! k = 4
//! d = 16
//! h = 16
//! ```
//!
//! Every table rejects unknown keys, and errors name the offending field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{write_archive, ArchiveEntry, Scalar};
use crate::image::Image;
use crate::math::{Pose, Vec3};
use crate::rendering::Camera;
use crate::scene::{builtin_scene, generate_dataset, DatasetManifest, DatasetOptions, SceneSpec, Split, BUILTIN_NAMES};
use crate::training::{mean_metrics, Checkpoint, Dataset, Model, RenderSettings, RenderedView, TrainConfig, TrainError, ViewMetrics};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("unknown scene {0:?}: not a builtin ({1}) and no such file")]
    UnknownScene(String, String),
    #[error("i/o at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl From<crate::scene::SceneError> for IoError {
    fn from(e: crate::scene::SceneError) -> Self {
        IoError::Train(e.into())
    }
}

impl From<crate::image::ImageError> for IoError {
    fn from(e: crate::image::ImageError) -> Self {
        IoError::Train(e.into())
    }
}

impl From<crate::autodiff::ArchiveError> for IoError {
    fn from(e: crate::autodiff::ArchiveError) -> Self {
        IoError::Train(e.into())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where the images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Builtin scene name or path to a scene JSON file.
    pub scene: Option<String>,
    /// Existing dataset directory; excludes `scene`.
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_views")]
    pub views: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

fn default_views() -> usize {
    72
}
fn default_resolution() -> usize {
    64
}
fn default_supersample() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds both scene generation and training.
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, IoError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            IoError::Config {
                path: format!("{origin}: {}", if path == "." { "(root)".into() } else { path }),
                message: e.into_inner().message().trim().to_string(),
            }
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent() {
            if cfg.output.is_relative() {
                cfg.output = base.join(&cfg.output);
            }
            if let Some(d) = &mut cfg.data.dataset {
                if d.is_relative() {
                    *d = base.join(&*d);
                }
            }
        }
        Ok(cfg)
    }

    fn validate(&self, origin: &str) -> Result<(), IoError> {
        let err = |field: &str, message: String| IoError::Config {
            path: format!("{origin}: {field}"),
            message,
        };
        match (&self.data.scene, &self.data.dataset) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(err("data", "set exactly one of `scene` and `dataset`".into())),
        }
        if self.train.seed != 0 && self.train.seed != self.seed {
            return Err(err("train.seed", "set the seed at the top level".into()));
        }
        self.resolved_train()
            .validate()
            .map_err(|e| err("train", e.to_string()))
    }

    /// The training config with the top-level seed applied.
    pub fn resolved_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Dataset directory, generating it under `output/data` from the scene
    /// when needed. Generation is skipped when a dataset with the same scene
    /// and framing already exists there.
    pub fn prepare_dataset(&self) -> Result<PathBuf, IoError> {
        if let Some(d) = &self.data.dataset {
            return Ok(d.clone());
        }
        let scene = resolve_scene(self.data.scene.as_deref().expect("validated"))?;
        let dir = self.output.join("data");
        if let Ok(m) = DatasetManifest::load(&dir) {
            if m.scene == scene.name
                && m.frames.len() == self.data.views
                && m.width == self.data.resolution
                && m.height == self.data.resolution
            {
                return Ok(dir);
            }
        }
        let opts = DatasetOptions {
            supersample: self.data.supersample,
            ..DatasetOptions::new(self.data.views, self.data.resolution, self.seed)
        };
        generate_dataset(&scene, &opts, &dir)?;
        Ok(dir)
    }
}

/// A builtin scene name or a path to a scene JSON file.
pub fn resolve_scene(reference: &str) -> Result<SceneSpec, IoError> {
    if let Ok(s) = builtin_scene(reference) {
        return Ok(s);
    }
    let path = Path::new(reference);
    if !path.is_file() {
        return Err(IoError::UnknownScene(reference.into(), BUILTIN_NAMES.join(", ")));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let scene: SceneSpec = serde_path_to_error::deserialize(de).map_err(|e| IoError::Config {
        path: format!("{reference}: {}", e.path()),
        message: e.into_inner().to_string(),
    })?;
    scene.validate()?;
    Ok(scene)
}

/// Cameras on a horizontal circle looking at `target`.
pub fn orbit_cameras(n: usize, radius: f64, height: f64, target: Vec3, resolution: usize, fov_x: f64) -> Result<Vec<Camera>, IoError> {
    crate::scene::circle_poses(radius, height, target, n)
        .into_iter()
        .map(|p: Pose| Camera::from_fov(resolution, resolution, fov_x, p).map_err(|e| IoError::Train(e.into())))
        .collect()
}

/// Written files for one rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFiles {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub decomposition: Option<PathBuf>,
    pub decomposition_arrays: Option<PathBuf>,
}

/// Writes `{stem}.png`, `{stem}_depth.png` and, with `decompose`,
/// `{stem}_decomposition.png` plus a `{stem}_subspaces` archive holding the
/// exact sub-space colours `[H, W, K, 3]` and softmax weights `[H, W, K]`.
///
/// The decomposition grid has one row per sub-space: its decoded colour on
/// the left, its weight map (white = 1) on the right.
pub fn export_view(view: &RenderedView, near: f64, far: f64, out_dir: &Path, stem: &str, decompose: bool) -> Result<RenderedFiles, IoError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let rgb = out_dir.join(format!("{stem}.png"));
    view.rgb.save_png(&rgb)?;
    let depth = out_dir.join(format!("{stem}_depth.png"));
    view.depth_image(near, far).save_png(&depth)?;
    let (mut decomposition, mut decomposition_arrays) = (None, None);
    if decompose {
        let tiles: Vec<Image> = (0..view.subspaces)
            .flat_map(|k| [view.subspace_color_image(k), view.subspace_weight_image(k)])
            .collect();
        let path = out_dir.join(format!("{stem}_decomposition.png"));
        Image::grid(&tiles, 2, [0.0; 3]).save_png(&path)?;
        decomposition = Some(path);
        let (w, h, k) = (view.rgb.width(), view.rgb.height(), view.subspaces);
        let arrays = out_dir.join(format!("{stem}_subspaces"));
        write_archive(
            &arrays,
            &[
                ArchiveEntry {
                    name: "colors".into(),
                    shape: vec![h, w, k, 3],
                    values: view.subspace_colors.clone(),
                },
                ArchiveEntry {
                    name: "weights".into(),
                    shape: vec![h, w, k],
                    values: view.subspace_weights.clone(),
                },
            ],
            serde_json::json!({ "subspaces": k }),
        )?;
        decomposition_arrays = Some(arrays);
    }
    Ok(RenderedFiles {
        rgb,
        depth,
        decomposition,
        decomposition_arrays,
    })
}

/// Renders `cameras` with a checkpointed model and exports each view as
/// `view_NNN`.
pub fn render_checkpoint<T: Scalar>(
    ckpt: &Checkpoint,
    cameras: &[Camera],
    out_dir: &Path,
    decompose: bool,
    chunk: usize,
) -> Result<Vec<RenderedFiles>, IoError> {
    let model: Model<T> = ckpt.model()?;
    let settings = eval_settings(ckpt);
    let (near, far) = (ckpt.frame.near, ckpt.frame.far);
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let view = model.render_image(cam, near, far, &settings, chunk)?;
            export_view(&view, near, far, out_dir, &format!("view_{i:03}"), decompose)
        })
        .collect()
}

pub fn eval_settings(ckpt: &Checkpoint) -> RenderSettings {
    ckpt.config.eval_settings(ckpt.frame.background)
}

/// Per-view and mean metrics over one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: Option<f64>,
}

impl EvalReport {
    pub fn new(split: Split, views: Vec<ViewMetrics>) -> Self {
        let (mean_psnr, mean_ssim) = mean_metrics(&views);
        Self {
            split,
            views,
            mean_psnr,
            mean_ssim,
        }
    }

    /// Writes `metrics.csv` (one row per view, then a `mean` row) and
    /// `metrics.json`. Floats use shortest round-trip formatting in both.
    pub fn save(&self, out_dir: &Path) -> Result<(PathBuf, PathBuf), IoError> {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let csv_path = out_dir.join("metrics.csv");
        let csv_err = |e: csv::Error| IoError::Config {
            path: csv_path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
        for v in &self.views {
            w.serialize(v).map_err(csv_err)?;
        }
        w.serialize(ViewMetrics {
            file_path: "mean".into(),
            psnr: self.mean_psnr,
            ssim: self.mean_ssim,
        })
        .map_err(csv_err)?;
        w.flush().map_err(io_err(&csv_path))?;
        let json_path = out_dir.join("metrics.json");
        let text = serde_json::to_string_pretty(self).expect("report serialises");
        fs::write(&json_path, text).map_err(io_err(&json_path))?;
        Ok((csv_path, json_path))
    }
}

/// Renders every view of `split` and scores it.
pub fn evaluate_checkpoint<T: Scalar>(ckpt: &Checkpoint, dataset: &Dataset, split: Split, chunk: usize) -> Result<EvalReport, IoError> {
    let views = dataset.split(split);
    if views.is_empty() {
        return Err(IoError::Train(TrainError::Data(format!("dataset has no {} views", split.as_str()))));
    }
    let model: Model<T> = ckpt.model()?;
    let metrics = crate::training::evaluate_views(&model, &views, dataset.near, dataset.far, &eval_settings(ckpt), chunk)?;
    Ok(EvalReport::new(split, metrics))
}

/// Scores images already on disk (`{dir}/{file_path}` for each view)
/// against the dataset.
pub fn evaluate_images(dir: &Path, dataset: &Dataset, split: Split) -> Result<EvalReport, IoError> {
    let views = dataset.split(split);
    if views.is_empty() {
        return Err(IoError::Train(TrainError::Data(format!("dataset has no {} views", split.as_str()))));
    }
    let rows = views
        .iter()
        .map(|v| {
            let img = Image::load_png(&dir.join(&v.file_path))?;
            let err = |e: crate::metrics::MetricError| IoError::Train(TrainError::Data(e.to_string()));
            Ok(ViewMetrics {
                file_path: v.file_path.clone(),
                psnr: crate::metrics::psnr(&img, &v.image).map_err(err)?,
                ssim: crate::metrics::ssim(&img, &v.image).ok(),
            })
        })
        .collect::<Result<_, IoError>>()?;
    Ok(EvalReport::new(split, rows))
}
