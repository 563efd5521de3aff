use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use steercov::io::dataset::read_sidecar;
use steercov::io::load_report;

fn steercov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steercov"))
        .args(args)
        .env_remove("STEERABLE_COV_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = steercov(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_default_writes_dataset_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--out", path(&data)]);
    for f in ["images.mrc", "clean.mrc", "dataset.json", "run_config.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let sidecar = read_sidecar(&data).unwrap();
    assert_eq!(sidecar.num_images, 1000);
    assert_eq!(sidecar.grid_size, 32);
    assert_eq!(sidecar.filters.len(), 10);
    let cfg = &sidecar.run_config;
    assert_eq!(cfg["command"], "simulate");
    assert_eq!(cfg["size"], 32);
    assert_eq!(cfg["num_images"], 1000);
    assert_eq!(cfg["num_groups"], 10);
    assert_eq!(cfg["seed"], 0);

    let again = steercov(&["simulate", "--out", path(&data)]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
}

#[test]
fn simulate_is_repeatable_and_hits_requested_snr() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--size", "16", "--num-images", "300", "--num-groups", "3", "--snr", "0.1", "--seed", "9"];
    ok(&[&["simulate", "--out", path(&a)], &args[..]].concat());
    ok(&[&["simulate", "--out", path(&b), "--threads", "2"], &args[..]].concat());
    for f in ["images.mrc", "clean.mrc"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let snr = read_sidecar(&a).unwrap().measured_snr.unwrap();
    assert!((snr / 0.1 - 1.0).abs() <= 0.05, "{snr}");
}

#[test]
fn estimate_denoise_and_eigenimages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("est");
    ok(&["simulate", "--size", "16", "--num-images", "1001", "--snr", "0.5", "--out", path(&data)]);
    ok(&["estimate", "--input", path(&data), "--out", path(&est)]);
    let first = fs::read(est.join("covariance.scov")).unwrap();
    ok(&["estimate", "--input", path(&data), "--out", path(&est), "--force", "--threads", "3"]);
    assert_eq!(fs::read(est.join("covariance.scov")).unwrap(), first);

    let report = load_report(est.join("report.json")).unwrap();
    for stage in ["ffb", "ctf", "cov"] {
        assert!(report.timings[stage] > 0.0, "{stage}");
    }
    assert!(report.shrink);

    let den = dir.path().join("den");
    let out = ok(&[
        "denoise", "--input", path(&data), "--report", path(&est), "--select", "0:100:1000", "--out", path(&den),
    ]);
    assert!(out.contains("11 images"), "{out}");
    let pngs = fs::read_dir(&den)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("denoised_"))
        .count();
    assert_eq!(pngs, 11);
    assert!(den.join("frc.csv").exists());

    let eig = dir.path().join("eig");
    ok(&["eigenimages", "--report", path(&est.join("report.json")), "--top", "6", "--out", path(&eig)]);
    let files = fs::read_dir(&eig)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("eigenimage_"))
        .count();
    assert_eq!(files, 6);
    let csv = fs::read_to_string(eig.join("eigenimages.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!(values.windows(2).all(|w| w[0] >= w[1]), "{values:?}");
}

#[test]
fn bench_writes_one_row_per_group_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    ok(&[
        "bench", "--size", "16", "--num-images", "300", "--bench-groups", "1,4,300", "--repeats", "1", "--out", path(&out),
    ]);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "M,t_fast,t_cg,cg_iterations");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("300,"));
    // 300 groups exceed the 256-image baseline
    assert!(lines[3].ends_with(",,"));
    assert!(out.join("bench.png").exists());
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = steercov(&["estimate", "--input", path(&missing), "--out", path(dir.path())]);
    assert!(!out.status.success());
    let out = steercov(&["estimate", "--out", path(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
    let out = steercov(&["simulate", "--num-groups", "0", "--out", path(dir.path())]);
    assert!(!out.status.success());
    let out = steercov(&["denoise", "--select", "4:1:2"]);
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_steercov"))
        .args(["simulate", "--size", "8", "--num-images", "4", "--num-groups", "1", "--out", path(&dir.path().join("x"))])
        .env("STEERABLE_COV_THREADS", "lots")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("STEERABLE_COV_THREADS"));
}
