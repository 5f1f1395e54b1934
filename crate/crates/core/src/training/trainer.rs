//! The optimisation loop, validation and the metrics log.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::SceneFrame;
use super::{learning_rate, sample_batch, scaled_sse, Adam, Checkpoint, Dataset, Model, RenderSettings, TrainBatch, TrainConfig, TrainError, View};
use crate::autodiff::{Graph, Scalar};
use crate::metrics::{psnr, ssim};
use crate::rendering::ray_rng;
use crate::scene::Split;

/// Stream offset separating per-ray jitter from batch draws.
const JITTER_SEED_XOR: u64 = 0x6a09_e667_f3bc_c908;

pub const LOG_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// One line of the metrics log. Losses are means over the iterations since
/// the previous row; validation columns are empty when no evaluation ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: u64,
    pub loss_coarse: f64,
    pub loss_fine: Option<f64>,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub file_path: String,
    pub psnr: f64,
    /// `None` when the image is smaller than the SSIM window.
    pub ssim: Option<f64>,
}

pub struct TrainOutcome<T: Scalar> {
    pub model: Model<T>,
    pub adam: Adam,
    pub log: Vec<LogRow>,
    pub iteration: u64,
    /// The run was already complete on disk and nothing was trained.
    pub reused: bool,
}

pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub adam: Adam,
    pub iteration: u64,
    pub log: Vec<LogRow>,
    frame: SceneFrame,
    out_dir: Option<PathBuf>,
    wall_offset: f64,
}

fn frame_of(dataset: &Dataset) -> SceneFrame {
    SceneFrame {
        bbox: dataset.bbox,
        near: dataset.near,
        far: dataset.far,
        background: dataset.background,
    }
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, dataset: &Dataset) -> Result<Self, TrainError> {
        config.validate()?;
        crate::retain_heap_memory();
        let model = Model::<T>::new(config.model, dataset.bbox, config.seed)?;
        let (coarse, fine) = model.breakdown();
        log::info!(
            "parameters: coarse {} ({:?}), fine {}, total {}",
            coarse.total(),
            coarse,
            fine.map_or(0, |f| f.total()),
            model.param_count()
        );
        let adam = Adam::new(&model.params);
        Ok(Self {
            config,
            model,
            adam,
            iteration: 0,
            log: Vec::new(),
            frame: frame_of(dataset),
            out_dir: None,
            wall_offset: 0.0,
        })
    }

    /// Continues from `out_dir/checkpoint` when it exists, otherwise starts
    /// fresh. A checkpoint written under a different config is an error
    /// rather than something to silently overwrite.
    pub fn resume_or_new(config: TrainConfig, dataset: &Dataset, out_dir: &Path) -> Result<Self, TrainError> {
        fs::create_dir_all(out_dir).map_err(TrainError::io(out_dir))?;
        let ckpt_dir = out_dir.join(CHECKPOINT_DIR);
        let mut trainer = if ckpt_dir.exists() {
            let ckpt = Checkpoint::load(&ckpt_dir)?;
            if ckpt.config_hash() != config.hash() {
                return Err(TrainError::Checkpoint(format!(
                    "{} was written with a different config; use a fresh output directory",
                    ckpt_dir.display()
                )));
            }
            if ckpt.precision != T::NAME {
                return Err(TrainError::Checkpoint(format!(
                    "checkpoint precision is {}, run requested {}",
                    ckpt.precision,
                    T::NAME
                )));
            }
            let mut t = Self::new(config, dataset)?;
            t.model = ckpt.model()?;
            t.adam = ckpt
                .adam
                .clone()
                .ok_or_else(|| TrainError::Checkpoint("checkpoint has no optimizer state".into()))?;
            t.iteration = ckpt.iteration;
            t.log = read_log(&out_dir.join(LOG_FILE))?
                .into_iter()
                .filter(|r| r.iter <= ckpt.iteration)
                .collect();
            t.wall_offset = t.log.last().map_or(0.0, |r| r.wall_time_s);
            log::info!("resuming at iteration {}", t.iteration);
            t
        } else {
            Self::new(config, dataset)?
        };
        trainer.out_dir = Some(out_dir.to_path_buf());
        Ok(trainer)
    }

    pub fn frame(&self) -> SceneFrame {
        self.frame
    }

    /// One optimiser step. Returns the coarse and fine batch MSE.
    pub fn step(&mut self, dataset: &Dataset) -> Result<(f64, Option<f64>), TrainError> {
        let cfg = &self.config;
        let batch = sample_batch(dataset, cfg.batch_size, &mut ray_rng(cfg.seed, self.iteration))?;
        let settings = cfg.train_settings(dataset.background);
        let (grads, lc, lf) = batch_gradients(
            &self.model,
            &batch,
            &settings,
            cfg.chunk,
            cfg.seed ^ JITTER_SEED_XOR,
            self.iteration * cfg.batch_size as u64,
        )?;
        let finite = lc.is_finite() && lf.is_none_or(f64::is_finite) && grads.iter().flatten().all(|g| g.is_finite());
        if !finite {
            let dump = self.dump_batch(&batch, lc, lf)?;
            return Err(TrainError::NonFinite {
                iteration: self.iteration,
                dump,
            });
        }
        let lr = learning_rate(self.iteration, cfg.iterations, cfg.lr_init, cfg.lr_final);
        self.adam.update(&mut self.model.params, &grads, lr);
        self.iteration += 1;
        Ok((lc, lf))
    }

    fn dump_batch(&self, batch: &TrainBatch, lc: f64, lf: Option<f64>) -> Result<String, TrainError> {
        #[derive(Serialize)]
        struct Dump<'a> {
            iteration: u64,
            loss_coarse: f64,
            loss_fine: Option<f64>,
            origins: &'a [(usize, usize)],
            ray_origins: Vec<[f64; 3]>,
            ray_dirs: Vec<[f64; 3]>,
            targets: &'a [f64],
        }
        let dir = self.out_dir.clone().unwrap_or_else(std::env::temp_dir);
        let path = dir.join(format!("nonfinite_batch_{:06}.json", self.iteration));
        let dump = Dump {
            iteration: self.iteration,
            loss_coarse: lc,
            loss_fine: lf,
            origins: &batch.origins,
            ray_origins: batch.rays.iter().map(|r| r.origin.to_array()).collect(),
            ray_dirs: batch.rays.iter().map(|r| r.dir.to_array()).collect(),
            targets: &batch.targets,
        };
        // serde_json writes non-finite floats as null, which is what we want.
        let text = serde_json::to_string(&dump).expect("dump serialises");
        fs::write(&path, text).map_err(TrainError::io(&path))?;
        Ok(path.display().to_string())
    }

    fn validation(&self, dataset: &Dataset) -> Result<(f64, Option<f64>), TrainError> {
        let mut views = dataset.split(Split::Val);
        if views.is_empty() {
            views = dataset.split(Split::Test);
        }
        if self.config.val_views > 0 {
            views.truncate(self.config.val_views);
        }
        let m = evaluate_views(
            &self.model,
            &views,
            dataset.near,
            dataset.far,
            &self.config.eval_settings(dataset.background),
            self.config.chunk,
        )?;
        Ok(mean_metrics(&m))
    }

    fn checkpoint(&self) -> Result<(), TrainError> {
        if let Some(dir) = &self.out_dir {
            Checkpoint::capture(&self.model, Some(&self.adam), &self.config, self.frame, self.iteration)
                .save(&dir.join(CHECKPOINT_DIR))?;
            write_log(&dir.join(LOG_FILE), &self.log)?;
        }
        Ok(())
    }

    /// Trains until `config.iterations`, logging, validating and
    /// checkpointing on the configured intervals.
    pub fn run(mut self, dataset: &Dataset) -> Result<TrainOutcome<T>, TrainError> {
        let total = self.config.iterations;
        if self.iteration >= total && self.out_dir.is_some() && !self.log.is_empty() {
            log::info!("run already complete at iteration {}", self.iteration);
            return Ok(TrainOutcome {
                model: self.model,
                adam: self.adam,
                log: self.log,
                iteration: self.iteration,
                reused: true,
            });
        }
        let start = Instant::now();
        let (mut sum_c, mut sum_f, mut count) = (0.0, 0.0, 0u64);
        let mut has_fine = false;
        while self.iteration < total {
            let (lc, lf) = self.step(dataset)?;
            sum_c += lc;
            if let Some(f) = lf {
                sum_f += f;
                has_fine = true;
            }
            count += 1;
            let it = self.iteration;
            let eval_now = it == total || (self.config.eval_every > 0 && it % self.config.eval_every == 0);
            if it % self.config.log_every == 0 || eval_now {
                let (val_psnr, val_ssim) = if eval_now {
                    let (p, s) = self.validation(dataset)?;
                    (Some(p), s)
                } else {
                    (None, None)
                };
                let row = LogRow {
                    iter: it,
                    loss_coarse: sum_c / count as f64,
                    loss_fine: has_fine.then(|| sum_f / count as f64),
                    val_psnr,
                    val_ssim,
                    wall_time_s: self.wall_offset + start.elapsed().as_secs_f64(),
                };
                log::info!(
                    "iter {it}: loss {:.3e}/{:.3e} val psnr {:?} ({:.0}s)",
                    row.loss_coarse,
                    row.loss_fine.unwrap_or(f64::NAN),
                    row.val_psnr,
                    row.wall_time_s
                );
                self.log.push(row);
                (sum_c, sum_f, count) = (0.0, 0.0, 0);
            }
            let ckpt_now = it == total || (self.config.checkpoint_every > 0 && it % self.config.checkpoint_every == 0);
            if ckpt_now {
                self.checkpoint()?;
            }
        }
        Ok(TrainOutcome {
            model: self.model,
            adam: self.adam,
            log: self.log,
            iteration: self.iteration,
            reused: false,
        })
    }
}

/// Trains `config` on `dataset`; with `out_dir`, resumes from and writes
/// checkpoints and the metrics log there.
pub fn train<T: Scalar>(config: &TrainConfig, dataset: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome<T>, TrainError> {
    let trainer = match out_dir {
        Some(dir) => Trainer::<T>::resume_or_new(config.clone(), dataset, dir)?,
        None => Trainer::<T>::new(config.clone(), dataset)?,
    };
    trainer.run(dataset)
}

/// Summed gradients (as `f64`) and the coarse and fine batch MSE. Chunks are
/// processed in parallel and reduced in chunk order.
pub fn batch_gradients<T: Scalar>(
    model: &Model<T>,
    batch: &TrainBatch,
    settings: &RenderSettings,
    chunk: usize,
    seed: u64,
    stream_base: u64,
) -> Result<(Vec<Vec<f64>>, f64, Option<f64>), TrainError> {
    let denom = batch.targets.len() as f64;
    let parts: Vec<(Vec<Vec<f64>>, f64, Option<f64>)> = batch
        .rays
        .par_chunks(chunk)
        .zip(batch.targets.par_chunks(chunk * 3))
        .enumerate()
        .map(|(c, (rays, targets))| {
            let mut g = Graph::<T>::new();
            let bound = model.params.bind(&mut g);
            let out = model.render_rays(&mut g, &bound, rays, settings, seed, stream_base + (c * chunk) as u64)?;
            let lc = scaled_sse(&mut g, out.coarse.rgb, targets, denom)?;
            let (loss, lf) = match &out.fine {
                Some(fine) => {
                    let lf = scaled_sse(&mut g, fine.rgb, targets, denom)?;
                    (g.add(lc, lf)?, Some(lf))
                }
                None => (lc, None),
            };
            g.backward(loss)?;
            let grads = model.params.grads(&g, &bound).iter().map(|t| t.to_f64_vec()).collect();
            let val = |v| g.value(v).item().map_or(f64::NAN, |x: T| x.to_f64_lossy());
            Ok((grads, val(lc), lf.map(val)))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut iter = parts.into_iter();
    let (mut grads, mut lc, mut lf) = iter.next().expect("batch has at least one chunk");
    for (g, c, f) in iter {
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        lc += c;
        lf = lf.zip(f).map(|(a, b)| a + b);
    }
    Ok((grads, lc, lf))
}

/// Renders each view and scores it against its ground truth.
pub fn evaluate_views<T: Scalar>(
    model: &Model<T>,
    views: &[&View],
    near: f64,
    far: f64,
    settings: &RenderSettings,
    chunk: usize,
) -> Result<Vec<ViewMetrics>, TrainError> {
    views
        .par_iter()
        .map(|v| {
            let pred = model.render_image(&v.camera, near, far, settings, chunk)?;
            Ok(ViewMetrics {
                file_path: v.file_path.clone(),
                psnr: psnr(&pred.rgb, &v.image).map_err(|e| TrainError::Data(e.to_string()))?,
                ssim: ssim(&pred.rgb, &v.image).ok(),
            })
        })
        .collect()
}

/// Mean PSNR and, when every view has one, mean SSIM.
pub fn mean_metrics(m: &[ViewMetrics]) -> (f64, Option<f64>) {
    let n = m.len() as f64;
    let p = m.iter().map(|v| v.psnr).sum::<f64>() / n;
    let s = m.iter().map(|v| v.ssim).sum::<Option<f64>>().map(|s| s / n);
    (p, s)
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| TrainError::Data(e.to_string()))?;
    }
    w.flush().map_err(TrainError::io(path))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>, TrainError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
}
