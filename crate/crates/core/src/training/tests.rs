use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fields::{BackboneConfig, HeadConfig, MsHeadConfig};
use crate::image::Image;
use crate::math::{Aabb, Vec3};
use crate::rendering::Camera;
use crate::scene::circle_poses;
use crate::scene::Split;

const COLOR: [f64; 3] = [0.8, 0.3, 0.2];

fn constant_dataset(res: usize, color: [f64; 3]) -> Dataset {
    let poses = circle_poses(4.0, 1.0, Vec3::new(0.0, 0.0, 0.0), 6);
    let splits = [Split::Train, Split::Train, Split::Train, Split::Train, Split::Val, Split::Test];
    let views = poses
        .iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (pose, split))| View {
            camera: Camera::from_fov(res, res, 0.8, *pose).unwrap(),
            image: Image::filled(res, res, color),
            split,
            file_path: format!("images/{i:03}.png"),
        })
        .collect();
    Dataset {
        views,
        near: 2.0,
        far: 6.0,
        bbox: Aabb {
            min: [-1.5; 3],
            max: [1.5; 3],
        },
        background: [1.0; 3],
    }
}

fn tiny_config(head: HeadConfig) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            backbone: BackboneConfig {
                depth: 2,
                width: 16,
                skip_at: None,
                view_dependent: true,
            },
            head,
            position_levels: 3,
            direction_levels: 2,
            ..ModelConfig::default()
        },
        batch_size: 32,
        iterations: 4,
        n_coarse: 6,
        n_fine: 4,
        eval_every: 0,
        log_every: 1,
        checkpoint_every: 2,
        chunk: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn presets_expand_to_paper_sizes() {
    let s = ModelConfig::preset("ms-s").unwrap();
    assert_eq!(s.head, HeadConfig::MultiSpace(MsHeadConfig::new(6, 24, 24)));
    let m = ModelConfig::preset("ms-m").unwrap();
    assert_eq!(m.head, HeadConfig::MultiSpace(MsHeadConfig::new(6, 48, 48)));
    let b = ModelConfig::preset("ms-b").unwrap();
    assert_eq!(b.head, HeadConfig::MultiSpace(MsHeadConfig::new(8, 64, 64)));
    assert_eq!(ModelConfig::preset("baseline").unwrap().head, HeadConfig::Baseline);
    assert!(ModelConfig::preset("ms-xl").is_none());
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    for bad in [
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { lr_final: 1e-3, ..ok.clone() },
        TrainConfig { lr_final: 0.0, ..ok.clone() },
        TrainConfig { n_coarse: 0, ..ok.clone() },
        TrainConfig { chunk: 0, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(TrainError::Config(_))), "{bad:?}");
    }
    let mut bad = ok.clone();
    bad.model.head = HeadConfig::MultiSpace(MsHeadConfig::new(0, 4, 4));
    assert!(bad.validate().is_err());
}

#[test]
fn batches_come_from_train_views_and_repeat_with_seed() {
    let ds = constant_dataset(8, COLOR);
    let a = sample_batch(&ds, 500, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = sample_batch(&ds, 500, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 500);
    assert!(a.origins.iter().all(|&(v, p)| ds.views[v].split == Split::Train && p < 64));
    // Every training view shows up in a batch this large.
    for v in 0..4 {
        assert!(a.origins.iter().any(|&(o, _)| o == v));
    }
    let mut empty = ds.clone();
    empty.views.retain(|v| v.split != Split::Train);
    assert!(matches!(
        sample_batch(&empty, 4, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(TrainError::Data(_))
    ));
}

/// A constant colour is the easiest possible fit.
#[test]
fn fits_constant_color_in_fifty_iterations() {
    let ds = constant_dataset(16, COLOR);
    let mut cfg = tiny_config(HeadConfig::Baseline);
    cfg.model.backbone.width = 32;
    cfg.iterations = 50;
    cfg.batch_size = 256;
    cfg.lr_init = 2e-2;
    cfg.lr_final = 5e-3;
    cfg.chunk = 256;
    let out = train::<f64>(&cfg, &ds, None).unwrap();
    let last = out.log.last().unwrap();
    assert_eq!(last.iter, 50);
    assert!(last.loss_coarse < 1e-3, "coarse loss {}", last.loss_coarse);
    assert!(last.loss_fine.unwrap() < 1e-3, "fine loss {:?}", last.loss_fine);
    assert!(out.log.iter().all(|r| r.loss_coarse.is_finite()));
}

#[test]
fn chunking_does_not_change_gradients() {
    let ds = constant_dataset(8, COLOR);
    for head in [HeadConfig::Baseline, HeadConfig::MultiSpace(MsHeadConfig::new(3, 4, 5))] {
        let cfg = tiny_config(head);
        let model = Model::<f64>::new(cfg.model, ds.bbox, 1).unwrap();
        let batch = sample_batch(&ds, 24, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let settings = cfg.train_settings(ds.background);
        let (g1, c1, f1) = trainer::batch_gradients(&model, &batch, &settings, 24, 5, 100).unwrap();
        let (g2, c2, f2) = trainer::batch_gradients(&model, &batch, &settings, 5, 5, 100).unwrap();
        assert!((c1 - c2).abs() < 1e-14 && (f1.unwrap() - f2.unwrap()).abs() < 1e-14);
        for (a, b) in g1.iter().flatten().zip(g2.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn parameter_count_matches_field_accounting() {
    let cfg = tiny_config(HeadConfig::MultiSpace(MsHeadConfig::new(4, 8, 8)));
    let m = Model::<f64>::new(cfg.model, Aabb { min: [-1.0; 3], max: [1.0; 3] }, 0).unwrap();
    let (c, f) = m.breakdown();
    assert_eq!(m.param_count(), c.total() + f.unwrap().total());
    let mut fine_only = cfg.model;
    fine_only.ms_fine_only = true;
    let m2 = Model::<f64>::new(fine_only, Aabb { min: [-1.0; 3], max: [1.0; 3] }, 0).unwrap();
    assert_eq!(m2.coarse.subspaces(), 1);
    assert_eq!(m2.fine.as_ref().unwrap().subspaces(), 4);
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = constant_dataset(8, COLOR);
    let cfg = tiny_config(HeadConfig::MultiSpace(MsHeadConfig::new(2, 4, 4)));
    let out = train::<f64>(&cfg, &ds, None).unwrap();
    let frame = checkpoint::SceneFrame {
        bbox: ds.bbox,
        near: ds.near,
        far: ds.far,
        background: ds.background,
    };
    let ck = Checkpoint::capture(&out.model, Some(&out.adam), &cfg, frame, out.iteration);
    ck.save(&dir.path().join("ck")).unwrap();
    let back = Checkpoint::load(&dir.path().join("ck")).unwrap();
    assert_eq!(back.iteration, 4);
    assert_eq!(back.adam.as_ref(), Some(&out.adam));
    let model = back.model::<f64>().unwrap();
    for ((n1, t1), (n2, t2)) in out.model.params.iter().zip(model.params.iter()) {
        assert_eq!(n1, n2);
        let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(b1, b2);
    }
    back.check_model(&cfg.model).unwrap();
    let mut other = cfg.model;
    other.backbone.width = 8;
    assert!(matches!(back.check_model(&other), Err(TrainError::Checkpoint(_))));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let ds = constant_dataset(8, COLOR);
    let cfg = tiny_config(HeadConfig::MultiSpace(MsHeadConfig::new(2, 4, 4)));
    let straight = train::<f64>(&cfg, &ds, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::<f64>::resume_or_new(cfg.clone(), &ds, dir.path()).unwrap();
    first.step(&ds).unwrap();
    first.step(&ds).unwrap();
    // Persist as the loop would at its checkpoint interval.
    Checkpoint::capture(&first.model, Some(&first.adam), &cfg, first.frame(), first.iteration)
        .save(&dir.path().join(trainer::CHECKPOINT_DIR))
        .unwrap();
    drop(first);
    let resumed = train::<f64>(&cfg, &ds, Some(dir.path())).unwrap();
    assert!(!resumed.reused);
    for ((_, a), (_, b)) in straight.model.params.iter().zip(resumed.model.params.iter()) {
        assert_eq!(a.data(), b.data());
    }
    // A finished run is picked up without training.
    let again = train::<f64>(&cfg, &ds, Some(dir.path())).unwrap();
    assert!(again.reused);
    assert_eq!(again.iteration, 4);
    // A different config refuses to reuse the directory.
    let mut changed = cfg.clone();
    changed.seed = 99;
    assert!(matches!(
        train::<f64>(&changed, &ds, Some(dir.path())),
        Err(TrainError::Checkpoint(_))
    ));
}

#[test]
fn non_finite_loss_aborts_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let ds = constant_dataset(8, [f64::NAN, 0.0, 0.0]);
    let cfg = tiny_config(HeadConfig::Baseline);
    match train::<f64>(&cfg, &ds, Some(dir.path())) {
        Err(TrainError::NonFinite { iteration, dump }) => {
            assert_eq!(iteration, 0);
            let text = std::fs::read_to_string(&dump).unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["origins"].as_array().unwrap().len(), cfg.batch_size);
        }
        other => panic!("expected NonFinite, got {:?}", other.map(|o| o.iteration)),
    }
}

#[test]
fn f32_training_tracks_f64() {
    let ds = constant_dataset(8, COLOR);
    let cfg = tiny_config(HeadConfig::MultiSpace(MsHeadConfig::new(2, 4, 4)));
    let a = train::<f64>(&cfg, &ds, None).unwrap();
    let b = train::<f32>(&cfg, &ds, None).unwrap();
    for (ra, rb) in a.log.iter().zip(&b.log) {
        assert!((ra.loss_coarse - rb.loss_coarse).abs() < 1e-4);
    }
}

#[test]
fn single_cell_sweep_equals_plain_training() {
    let ds = constant_dataset(12, COLOR);
    let mut cfg = tiny_config(HeadConfig::MultiSpace(MsHeadConfig::new(2, 4, 4)));
    cfg.iterations = 2;
    let rows = ablation_sweep::<f64>(&cfg, &[2], &[4], &ds, None).unwrap();
    assert_eq!(rows.len(), 1);
    let plain = train::<f64>(&cfg, &ds, None).unwrap();
    let test = ds.split(Split::Test);
    let m = evaluate_views(&plain.model, &test, ds.near, ds.far, &cfg.eval_settings(ds.background), 64).unwrap();
    assert_eq!(rows[0].test_psnr, m[0].psnr);
    assert_eq!(rows[0].test_ssim, m[0].ssim);

    let grid = ablation_sweep::<f64>(&cfg, &[1, 2], &[2, 3, 4], &ds, None).unwrap();
    assert_eq!(grid.len(), 6);
    assert!(ablation_sweep::<f64>(&cfg, &[], &[4], &ds, None).is_err());
}

#[test]
fn log_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        LogRow { iter: 1, loss_coarse: 0.1, loss_fine: Some(0.2), val_psnr: None, val_ssim: None, wall_time_s: 0.5 },
        LogRow { iter: 2, loss_coarse: 1.0 / 3.0, loss_fine: None, val_psnr: Some(21.5), val_ssim: Some(0.7), wall_time_s: 1.0 },
    ];
    let path = dir.path().join("m.csv");
    trainer::write_log(&path, &rows).unwrap();
    assert_eq!(trainer::read_log(&path).unwrap(), rows);
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("iter,loss_coarse,loss_fine,val_psnr,val_ssim,wall_time_s"));
}
