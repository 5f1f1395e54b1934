//! Drives the `mirrorfield` binary end to end on tiny data.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrorfield"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_experiment(dir: &Path, dataset: &Path) -> std::path::PathBuf {
    let toml = format!(
        r#"
seed = 1
output = "run"

[data]
dataset = "{}"

[train]
batch_size = 64
iterations = 25
n_coarse = 8
n_fine = 8
lr_init = 5e-3
lr_final = 1e-3
log_every = 5
eval_every = 0
val_views = 1

[train.model]
position_levels = 4
direction_levels = 2

[train.model.backbone]
depth = 2
width = 16
skip_at = 1

[train.model.head]
type = "multi_space"
k = 2
d = 4
h = 4
"#,
        dataset.display()
    );
    let path = dir.join("exp.toml");
    fs::write(&path, toml).unwrap();
    path
}

#[test]
fn scene_generation_is_deterministic_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-scene", "toy_A", "--views", "6", "--res", "12", "--supersample", "1", "--out", s(out), "--seed", "3"]);
    }
    for name in ["manifest.json", "images/000.png", "images/005.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let stdout = ok(&["gen-scene", "toy_B", "--views", "120", "--res", "4", "--supersample", "1", "--out", s(&dir.path().join("c"))]);
    assert!(stdout.contains("train 100, val 10, test 10"), "{stdout}");
}

#[test]
fn unknown_scene_lists_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["gen-scene", "toy_Z", "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("toy_Z") && err.contains("toy_A"), "{err}");
}

#[test]
fn train_render_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-scene", "toy_A", "--views", "12", "--res", "16", "--supersample", "1", "--out", s(&data)]);
    let exp = tiny_experiment(dir.path(), &data);

    let first = ok(&["--f32", "--threads", "1", "train", s(&exp)]);
    assert!(first.contains("25 iterations"), "{first}");
    let ckpt = dir.path().join("run/run/checkpoint");
    assert!(ckpt.is_dir());
    assert!(dir.path().join("run/eval/metrics.csv").exists());
    let log = fs::read_to_string(dir.path().join("run/run/metrics.csv")).unwrap();
    assert!(log.starts_with("iter,loss_coarse,loss_fine,val_psnr,val_ssim,wall_time_s"), "{log}");

    let again = ok(&["--f32", "train", s(&exp)]);
    assert!(again.contains("already complete"), "{again}");

    let renders = dir.path().join("renders");
    ok(&["--f32", "render", s(&ckpt), "--dataset", s(&data), "--split", "test", "--decompose", "--out", s(&renders)]);
    for name in ["view_000.png", "view_000_depth.png", "view_000_decomposition.png"] {
        assert!(renders.join(name).exists(), "{name} missing");
    }

    let report = dir.path().join("report");
    let stdout = ok(&["eval", s(&ckpt), "--dataset", s(&data), "--split", "test", "--out", s(&report)]);
    assert!(stdout.contains("mean"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("metrics.json")).unwrap()).unwrap();
    let p = json["mean_psnr"].as_f64().unwrap();
    assert!(p.is_finite() && p > 5.0, "{p}");

    // Ground truth scored against itself hits the cap.
    let gt = dir.path().join("gt");
    ok(&["eval", "--images", s(&data), "--dataset", s(&data), "--split", "train", "--out", s(&gt)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(gt.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["mean_psnr"].as_f64().unwrap(), mirrorfield::metrics::PSNR_CAP);
}

#[test]
fn ablate_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-scene", "toy_A", "--views", "6", "--res", "12", "--supersample", "1", "--out", s(&data)]);
    let exp = tiny_experiment(dir.path(), &data);
    let out = dir.path().join("sweep");
    ok(&["--f32", "ablate", s(&exp), "--k", "1,2", "--d", "4", "--out", s(&out)]);
    let mut r = csv::Reader::from_path(out.join("ablation.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "1");
    assert_eq!(&rows[1][0], "2");
}

#[test]
fn gradcheck_reports_and_warns() {
    let stdout = ok(&["gradcheck", "--probes", "24"]);
    assert!(stdout.contains("24 probes") && stdout.contains("PASS"), "{stdout}");
    let out = bin(&["gradcheck", "--probes", "0"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}
