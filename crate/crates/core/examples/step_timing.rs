//! Times training iterations on a builtin scene at the default desk-scale
//! settings, in both precisions.
//!
//! ```text
//! cargo run --release --example step_timing -- [iterations] [f32|f64]
//! ```

use std::time::Instant;

use mirrorfield::fields::{BackboneConfig, HeadConfig, MsHeadConfig};
use mirrorfield::scene::{builtin_scene, generate_dataset, DatasetOptions};
use mirrorfield::training::{Dataset, ModelConfig, TrainConfig, Trainer};

fn time<T: mirrorfield::autodiff::Scalar>(cfg: &TrainConfig, ds: &Dataset, iters: usize) -> anyhow::Result<f64> {
    let mut t = Trainer::<T>::new(cfg.clone(), ds)?;
    t.step(ds)?;
    let start = Instant::now();
    for _ in 0..iters {
        t.step(ds)?;
    }
    Ok(start.elapsed().as_secs_f64() / iters as f64)
}

fn main() -> anyhow::Result<()> {
    mirrorfield::retain_heap_memory();
    let iters: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let only = std::env::args().nth(2);
    let dir = tempfile_dir()?;
    generate_dataset(&builtin_scene("toy_A")?, &DatasetOptions::new(72, 64, 0), &dir)?;
    let ds = Dataset::load(&dir)?;
    for (name, head) in [
        ("baseline", HeadConfig::Baseline),
        ("ms k4 d16", HeadConfig::MultiSpace(MsHeadConfig::new(4, 16, 16))),
    ] {
        let cfg = TrainConfig {
            model: ModelConfig {
                backbone: BackboneConfig::default(),
                head,
                ..ModelConfig::default()
            },
            batch_size: 512,
            ..TrainConfig::default()
        };
        if only.as_deref() != Some("f32") {
            println!("{name:10} f64 {:.3} s/iter", time::<f64>(&cfg, &ds, iters)?);
        }
        if only.as_deref() != Some("f64") {
            println!("{name:10} f32 {:.3} s/iter", time::<f32>(&cfg, &ds, iters)?);
        }
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("mirrorfield-timing-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
