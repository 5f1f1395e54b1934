//! Exports the per-sub-space colour and weight maps of a multi-space model.
//!
//! With a checkpoint directory as the first argument the trained model is
//! used; otherwise a small model is fitted to `toy_A` for a few hundred
//! iterations first.
//!
//! ```text
//! cargo run --release --example decompose_views -- [checkpoint_dir] [out_dir]
//! ```

use std::path::PathBuf;

use mirrorfield::autodiff::read_archive;
use mirrorfield::fields::{HeadConfig, MsHeadConfig};
use mirrorfield::io::{orbit_cameras, render_checkpoint};
use mirrorfield::math::Vec3;
use mirrorfield::scene::{builtin_scene, generate_dataset, DatasetOptions};
use mirrorfield::training::{train, Checkpoint, Dataset, ModelConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(2)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("mirrorfield-decomposition"));
    let ckpt_dir = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let data = std::env::temp_dir().join("mirrorfield-decompose-data");
            generate_dataset(&builtin_scene("toy_A")?, &DatasetOptions::new(30, 32, 0), &data)?;
            let ds = Dataset::load(&data)?;
            let cfg = TrainConfig {
                model: ModelConfig {
                    head: HeadConfig::MultiSpace(MsHeadConfig::new(4, 16, 16)),
                    ..ModelConfig::default()
                },
                batch_size: 256,
                iterations: 300,
                n_coarse: 24,
                n_fine: 24,
                eval_every: 0,
                ..TrainConfig::default()
            };
            let run = out.join("run");
            train::<f32>(&cfg, &ds, Some(&run))?;
            run.join("checkpoint")
        }
    };
    let ck = Checkpoint::load(&ckpt_dir)?;
    let cams = orbit_cameras(3, 4.0, 1.5, Vec3::new(0.0, 0.0, -0.1), 64, 0.8)?;
    let files = render_checkpoint::<f32>(&ck, &cams, &out, true, 2048)?;
    for f in &files {
        let (_, arrays) = read_archive(f.decomposition_arrays.as_ref().expect("decompose requested"))?;
        let w = arrays.iter().find(|a| a.name == "weights").expect("weights array");
        let k = w.shape[2];
        let worst = w
            .values
            .chunks(k)
            .map(|px| (px.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        let mean: Vec<f64> = (0..k)
            .map(|j| w.values.iter().skip(j).step_by(k).sum::<f64>() / (w.values.len() / k) as f64)
            .collect();
        println!(
            "{}: mean weight per sub-space {:.3?}, max |Σw − 1| = {worst:.1e}",
            f.decomposition.as_ref().expect("grid written").display(),
            mean
        );
    }
    Ok(())
}
