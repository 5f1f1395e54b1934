//! Trains a single-space and a multi-space model on the same small mirror
//! dataset and compares their test PSNR.
//!
//! ```text
//! cargo run --release --example mirror_comparison -- [iterations] [scene]
//! ```
//!
//! The defaults finish in a few minutes on one core; the gap between the two
//! heads only becomes meaningful with several thousand iterations.

use mirrorfield::fields::{BackboneConfig, HeadConfig, MsHeadConfig};
use mirrorfield::scene::{builtin_scene, generate_dataset, DatasetOptions, Split};
use mirrorfield::training::{evaluate_views, mean_metrics, train, Dataset, ModelConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    mirrorfield::retain_heap_memory();
    let iterations: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(600);
    let scene = std::env::args().nth(2).unwrap_or_else(|| "toy_A".into());
    let dir = std::env::temp_dir().join(format!("mirrorfield-compare-{scene}"));
    generate_dataset(&builtin_scene(&scene)?, &DatasetOptions::new(40, 32, 0), &dir)?;
    let ds = Dataset::load(&dir)?;
    let test = ds.split(Split::Test);

    for (label, head) in [
        ("single-space", HeadConfig::Baseline),
        ("multi-space K=4", HeadConfig::MultiSpace(MsHeadConfig::new(4, 16, 16))),
    ] {
        let cfg = TrainConfig {
            model: ModelConfig {
                backbone: BackboneConfig::default(),
                head,
                ..ModelConfig::default()
            },
            batch_size: 256,
            iterations,
            n_coarse: 24,
            n_fine: 24,
            eval_every: 0,
            ..TrainConfig::default()
        };
        let out = train::<f32>(&cfg, &ds, None)?;
        let m = evaluate_views(&out.model, &test, ds.near, ds.far, &cfg.eval_settings(ds.background), 1024)?;
        let (p, s) = mean_metrics(&m);
        println!(
            "{label:16} {} params, final loss {:.2e}, test PSNR {p:.2} dB, SSIM {:.3}",
            out.model.param_count(),
            out.log.last().map_or(f64::NAN, |r| r.loss_fine.unwrap_or(r.loss_coarse)),
            s.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
