//! Command-line surface. The binary only parses arguments and calls [`run`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::autodiff::Scalar;
use crate::fields::{HeadConfig, MsHeadConfig};
use crate::gradcheck::{gradcheck, GradcheckConfig, DEFAULT_PROBES, DEFAULT_STEP};
use crate::io::{evaluate_checkpoint, evaluate_images, orbit_cameras, render_checkpoint, resolve_scene, ExperimentConfig};
use crate::math::Vec3;
use crate::rendering::Camera;
use crate::scene::{generate_dataset, DatasetOptions, Split};
use crate::training::{ablation_sweep, evaluate_views, mean_metrics, train, Checkpoint, Dataset, ModelConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "mirrorfield", version, about = "Single- and multi-space radiance fields on analytic mirror scenes")]
pub struct Cli {
    /// Overrides the seed of the scene generator or experiment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run networks in 32-bit floats.
    #[arg(long = "f32", global = true)]
    pub single: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a posed image dataset of a builtin or JSON scene.
    GenScene {
        /// Builtin name (toy_A, toy_B, two_mirror_facing, two_mirror_back) or scene JSON path.
        scene: String,
        #[arg(long, default_value_t = 120)]
        views: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 2)]
        supersample: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train (or resume) the experiment described by a TOML file.
    Train {
        config: PathBuf,
        /// Model preset: baseline, ms-avg, ms-s, ms-m or ms-b.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        head: Option<HeadKind>,
        #[arg(long)]
        iterations: Option<u64>,
        /// Overrides the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render views from a checkpoint.
    Render {
        checkpoint: PathBuf,
        /// Take poses from this dataset's split.
        #[arg(long, conflicts_with = "orbit")]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Render this many views on a circle instead.
        #[arg(long)]
        orbit: Option<usize>,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.5)]
        height: f64,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 0.8)]
        fov: f64,
        /// Also export per-sub-space colour and weight maps.
        #[arg(long)]
        decompose: bool,
        #[arg(long, default_value_t = 1024)]
        chunk: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint (or a directory of images) on a dataset split.
    Eval {
        /// Checkpoint directory; omit when scoring `--images`.
        #[arg(required_unless_present = "images")]
        checkpoint: Option<PathBuf>,
        /// Directory of images laid out like the dataset.
        #[arg(long, conflicts_with = "checkpoint")]
        images: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 1024)]
        chunk: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        /// Take the network shape from an experiment file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a grid of sub-space counts and feature widths.
    Ablate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 6, 8])]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![24, 48, 64])]
        d: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadKind {
    Baseline,
    Ms,
    MsAvg,
}

/// Applies `--preset` and `--head` to a model config.
pub fn apply_model_overrides(model: &mut ModelConfig, preset: Option<&str>, head: Option<HeadKind>) -> Result<()> {
    if let Some(p) = preset {
        let base = ModelConfig::preset(p).with_context(|| format!("unknown preset {p:?}"))?;
        model.head = base.head;
    }
    let k = model.head.subspaces();
    match head {
        None => {}
        Some(HeadKind::Baseline) => model.head = HeadConfig::Baseline,
        Some(HeadKind::Ms) => {
            if !matches!(model.head, HeadConfig::MultiSpace(_)) {
                model.head = HeadConfig::MultiSpace(MsHeadConfig::SMALL);
            }
        }
        Some(HeadKind::MsAvg) => {
            let k = if k > 1 { k } else { MsHeadConfig::SMALL.k };
            model.head = HeadConfig::MultiSpaceAvg { k };
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if cli.single {
        dispatch::<f32>(cli)
    } else {
        dispatch::<f64>(cli)
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).with_context(|| format!("unknown split {s:?} (train, val, test)"))
}

fn load_experiment(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = 0;
    }
    Ok(cfg)
}

fn dispatch<T: Scalar>(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene {
            scene,
            views,
            res,
            supersample,
            out,
        } => {
            let spec = resolve_scene(&scene)?;
            let opts = DatasetOptions {
                supersample,
                ..DatasetOptions::new(views, res, cli.seed.unwrap_or(0))
            };
            let m = generate_dataset(&spec, &opts, &out)?;
            let count = |s| m.frames_in(s).count();
            println!(
                "{}: {} views at {}×{} → {} (train {}, val {}, test {})",
                spec.name,
                m.frames.len(),
                m.width,
                m.height,
                out.display(),
                count(Split::Train),
                count(Split::Val),
                count(Split::Test)
            );
        }
        Command::Train {
            config,
            preset,
            head,
            iterations,
            out,
        } => {
            let mut exp = load_experiment(&config, cli.seed)?;
            apply_model_overrides(&mut exp.train.model, preset.as_deref(), head)?;
            if let Some(n) = iterations {
                exp.train.iterations = n;
            }
            if let Some(o) = out {
                exp.output = o;
            }
            let data_dir = exp.prepare_dataset()?;
            let ds = Dataset::load(&data_dir)?;
            let tc: TrainConfig = exp.resolved_train();
            tc.validate()?;
            let run_dir = exp.output.join("run");
            let outcome = train::<T>(&tc, &ds, Some(&run_dir))?;
            let test = ds.split(Split::Test);
            let m = evaluate_views(&outcome.model, &test, ds.near, ds.far, &tc.eval_settings(ds.background), tc.chunk)?;
            let (p, s) = mean_metrics(&m);
            let report = crate::io::EvalReport::new(Split::Test, m);
            report.save(&exp.output.join("eval"))?;
            println!(
                "{} iterations{}; test PSNR {p:.3} dB, SSIM {}",
                outcome.iteration,
                if outcome.reused { " (already complete)" } else { "" },
                s.map_or("n/a".into(), |s| format!("{s:.4}"))
            );
            println!("checkpoint: {}", run_dir.join("checkpoint").display());
        }
        Command::Render {
            checkpoint,
            dataset,
            split,
            orbit,
            radius,
            height,
            res,
            fov,
            decompose,
            chunk,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cams: Vec<Camera> = match (dataset, orbit) {
                (Some(d), _) => {
                    let ds = Dataset::load(&d)?;
                    let split = parse_split(&split)?;
                    ds.split(split).into_iter().map(|v| v.camera).collect()
                }
                (None, Some(n)) => orbit_cameras(n, radius, height, Vec3::new(0.0, 0.0, 0.0), res, fov)?,
                (None, None) => bail!("give either --dataset or --orbit"),
            };
            if decompose && ck.config.model.head.subspaces() == 1 {
                log::warn!("single sub-space model: the decomposition has one row");
            }
            let files = render_checkpoint::<T>(&ck, &cams, &out, decompose, chunk)?;
            println!("rendered {} views to {}", files.len(), out.display());
        }
        Command::Eval {
            checkpoint,
            images,
            dataset,
            split,
            chunk,
            out,
        } => {
            let ds = Dataset::load(&dataset)?;
            let split = parse_split(&split)?;
            let report = match (checkpoint, images) {
                (Some(c), _) => evaluate_checkpoint::<T>(&Checkpoint::load(&c)?, &ds, split, chunk)?,
                (None, Some(dir)) => evaluate_images(&dir, &ds, split)?,
                (None, None) => bail!("give a checkpoint or --images"),
            };
            let (csv, json) = report.save(&out)?;
            for v in &report.views {
                println!("{}\t{:.3}\t{}", v.file_path, v.psnr, v.ssim.map_or("n/a".into(), |s| format!("{s:.4}")));
            }
            println!(
                "mean\t{:.3}\t{}\n→ {}, {}",
                report.mean_psnr,
                report.mean_ssim.map_or("n/a".into(), |s| format!("{s:.4}")),
                csv.display(),
                json.display()
            );
        }
        Command::Gradcheck { probes, step, config } => {
            let mut cfg = GradcheckConfig {
                probes,
                step,
                seed: cli.seed.unwrap_or(0),
                ..GradcheckConfig::default()
            };
            if let Some(path) = config {
                let exp = load_experiment(&path, cli.seed)?;
                cfg.model = ModelConfig {
                    hierarchical: false,
                    ..exp.train.model
                };
            }
            if cli.single {
                log::warn!("gradcheck always runs in 64-bit; --f32 ignored");
            }
            let r = gradcheck(&cfg)?;
            if let Some(w) = &r.warning {
                eprintln!("warning: {w}");
            }
            let worst = r.probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err));
            println!(
                "{} probes, max relative error {:.3e} (tolerance {:.0e}){}: {}",
                r.probes.len(),
                r.max_rel_err,
                r.tolerance,
                worst.map_or(String::new(), |w| format!(" at {}[{}]", w.param, w.index)),
                if r.passed { "PASS" } else { "FAIL" }
            );
            if !r.passed {
                bail!("gradient check failed");
            }
        }
        Command::Ablate { config, k, d, out } => {
            let mut exp = load_experiment(&config, cli.seed)?;
            if let Some(o) = out {
                exp.output = o;
            }
            let ds = Dataset::load(&exp.prepare_dataset()?)?;
            let tc = exp.resolved_train();
            let rows = ablation_sweep::<T>(&tc, &k, &d, &ds, Some(&exp.output.join("ablation")))?;
            let path = exp.output.join("ablation.csv");
            let mut w = csv::Writer::from_path(&path)?;
            println!("K\td\tparams\ttest PSNR\tSSIM");
            for r in &rows {
                w.serialize(r)?;
                println!(
                    "{}\t{}\t{}\t{:.3}\t{}",
                    r.k,
                    r.d,
                    r.params,
                    r.test_psnr,
                    r.test_ssim.map_or("n/a".into(), |s| format!("{s:.4}"))
                );
            }
            w.flush()?;
            println!("→ {}", path.display());
        }
    }
    Ok(())
}
