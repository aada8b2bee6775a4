use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freqsplat::imgproc::ImageBuffer;
use freqsplat::model::{load_model, scene_to_json};
use freqsplat::synth::Dataset;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_freqsplat"));
    c.env_remove("FREQSPLAT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small three-level dataset: 8 cameras at 32x32.
fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--out", p(&data), "--seed", "3", "--per-level", "15,15,15", "--cameras", "8", "--resolution", "32"]);
    data
}

#[test]
fn synth_prints_config_first_and_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let text = ok(&["synth", "--out", p(&data), "--per-level", "5,5", "--levels", "2", "--cameras", "16", "--resolution", "16"]);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["benchmark"]["n_per_level"], serde_json::json!([5, 5]));
    assert_eq!(first["benchmark"]["seed"], 7);
    let d = Dataset::load(&data).unwrap();
    assert_eq!((d.train.len(), d.holdout.len()), (14, 2));
}

#[test]
fn ground_truth_model_evaluates_as_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let model = data.join("scene.fags");
    let text = ok(&["eval", "--model", p(&model), "--data", p(&data), "--split", "all"]);
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "level,gaussians,psnr,ssim,psnr_lowpass,ssim_lowpass");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][2], "inf");
    let psnr: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(psnr[0] <= psnr[1] && psnr[1] <= psnr[2], "{psnr:?}");
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), vec!["15", "30", "45"]);
}

#[test]
fn render_top_level_reproduces_dataset_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("r/view.png");
    ok(&["render", "--model", p(&data.join("scene.fags")), "--data", p(&data), "--camera", "5", "--out", p(&out)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(data.join("images/view_005.png")).unwrap());
    let low = dir.path().join("low.png");
    ok(&["render", "--model", p(&data.join("scene.fags")), "--data", p(&data), "--camera", "5", "--level", "1", "--out", p(&low)]);
    assert_ne!(std::fs::read(&low).unwrap(), std::fs::read(&out).unwrap());
}

fn train_args<'a>(data: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec![
        "train",
        "--data",
        p(data),
        "--out",
        p(out),
        "--level-interval",
        "6",
        "--eval-interval",
        "6",
        "--init-count",
        "30",
        "--densify-from",
        "2",
        "--densify-interval",
        "3",
    ];
    a.extend_from_slice(extra);
    a
}

#[test]
fn train_flags_override_config_and_rerun_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "total_steps = 40\nseed = 5 # comment\n").unwrap();
    let out_a = dir.path().join("a");
    let text = ok(&train_args(&data, &out_a, &["--config", p(&cfg), "--total-steps", "15", "--deterministic"]));
    let resolved: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let tc = &resolved["train_config"];
    assert_eq!(tc["total_steps"], 15);
    assert_eq!(tc["seed"], 5);
    assert_eq!(tc["deterministic"], true);
    let metrics = std::fs::read_to_string(out_a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 16);
    assert!(metrics.starts_with("step,loss,loss_im,loss_dft,n_gaussians,n_level_1,n_level_2,n_level_3,psnr_holdout"));

    // the written resolved config alone reproduces the model
    let out_b = dir.path().join("b");
    ok(&["train", "--data", p(&data), "--out", p(&out_b), "--config", p(&out_a.join("config.txt"))]);
    assert_eq!(std::fs::read(out_a.join("model.fags")).unwrap(), std::fs::read(out_b.join("model.fags")).unwrap());
    assert_eq!(metrics, std::fs::read_to_string(out_b.join("metrics.csv")).unwrap());
}

#[test]
fn transforms_write_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let model = data.join("scene.fags");
    let full = load_model(&model).unwrap();

    let fov = dir.path().join("fov.fags");
    ok(&["fovea", "--model", p(&model), "--data", p(&data), "--gaze", "16,16", "--threshold", "0.3", "--out", p(&fov)]);
    let f = load_model(&fov).unwrap();
    assert!(f.len() <= full.len());
    assert_eq!(f.count_at_level(1), full.count_at_level(1));

    let masks = dir.path().join("masks");
    std::fs::create_dir_all(&masks).unwrap();
    for i in 0..8 {
        ImageBuffer::filled(32, 32, [1.0; 3]).save_png(masks.join(format!("view_{i:03}.png"))).unwrap();
    }
    let foc = dir.path().join("focus.fags");
    ok(&["focus", "--model", p(&model), "--data", p(&data), "--masks", p(&masks), "--out", p(&foc)]);
    assert_eq!(load_model(&foc).unwrap(), full);

    let sharp = dir.path().join("sharp.fags");
    ok(&["filter", "--model", p(&model), "--preset", "sharp", "--out", p(&sharp)]);
    assert_eq!(load_model(&sharp).unwrap().count_at_level(2), 0);

    let recipe = dir.path().join("r.json");
    std::fs::write(&recipe, r#"{"levels":[{"level":3,"drop":true}]}"#).unwrap();
    let dropped = dir.path().join("drop.fags");
    ok(&["filter", "--model", p(&model), "--recipe", p(&recipe), "--out", p(&dropped)]);
    assert_eq!(load_model(&dropped).unwrap().counts_per_level(), vec![15, 15, 0]);
}

#[test]
fn export_bundle_contains_golden_dump() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let model = data.join("scene.fags");
    let out = dir.path().join("bundle");
    ok(&["export-viewer", "--model", p(&model), "--data", p(&data), "--out", p(&out)]);
    let index: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["level_subset_counts"], serde_json::json!([15, 30, 45]));
    let golden: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert!(same_f32(&golden, &scene_to_json(&load_model(&model).unwrap())));
    assert_eq!(std::fs::read(out.join("model.fags")).unwrap(), std::fs::read(&model).unwrap());
    assert!(Dataset::load(out.join("manifest.json")).is_err(), "images are not copied");
    for k in 1..=3 {
        assert!(out.join(format!("reference_k{k}.png")).is_file());
    }
}

/// Structural equality with numbers compared after rounding to f32.
fn same_f32(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => x.as_f64().map(|v| v as f32) == y.as_f64().map(|v| v as f32),
        (Array(x), Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(u, v)| same_f32(u, v)),
        (Object(x), Object(y)) => x.len() == y.len() && x.iter().all(|(k, u)| y.get(k).is_some_and(|v| same_f32(u, v))),
        _ => a == b,
    }
}

fn assert_single_line_failure(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error"), "{err}");
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.fags");
    assert_single_line_failure(&run(&["render", "--model", p(&missing), "--data", p(dir.path()), "--out", "x.png"]), 1);
    assert_single_line_failure(&run(&["synth", "--out", p(dir.path()), "--bogus"]), 1);
    assert_single_line_failure(&run(&["frobnicate"]), 1);
    let data = synth(dir.path());
    let model = data.join("scene.fags");
    assert_single_line_failure(&run(&["filter", "--model", p(&model), "--preset", "sepia", "--out", "x.fags"]), 1);
    assert_single_line_failure(&run(&["render", "--model", p(&model), "--data", p(&data), "--level", "9", "--out", "x.png"]), 1);
    assert_single_line_failure(&run(&["render", "--model", p(&model), "--data", p(&data), "--camera", "99", "--out", "x.png"]), 1);
    let out = dir.path().join("t");
    assert_single_line_failure(&run(&train_args(&data, &out, &["--total-steps", "abc"])), 1);
    assert_single_line_failure(&run(&train_args(&data, &out, &["--levels", "0"])), 1);
}

#[test]
fn diverging_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("t");
    let r = run(&train_args(&data, &out, &["--total-steps", "20", "--lr-sh", "1e308"]));
    assert_single_line_failure(&r, 2);
}

#[test]
fn help_succeeds() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["synth", "train", "render", "eval", "fovea", "focus", "filter", "export-viewer"] {
        assert!(text.contains(sub), "{sub}");
    }
}
