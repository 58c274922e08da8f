use std::path::Path;
use std::process::{Command, Output};

fn viewsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unreadable_manifest_names_ingest_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = dir.path().join("out");
    let result = viewsynth(&["run", "--manifest", path(&missing), "--out", path(&out)]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("ingest"), "{stderr}");
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "cadence = 0\n").unwrap();
    let result = viewsynth(&[
        "run",
        "--manifest",
        path(&dir.path().join("m.toml")),
        "--out",
        path(dir.path()),
        "--config",
        path(&config),
    ]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("cadence"));
}

#[test]
fn synth_then_run_static_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let result = viewsynth(&[
        "synth", "--out", path(&data), "--preset", "static", "--width", "320", "--height", "240", "--seconds", "4",
        "--seed", "3",
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(data.join("ground_truth.json").exists());

    let out = dir.path().join("out");
    let manifest = data.join("manifest.toml");
    let result = viewsynth(&["run", "--manifest", path(&manifest), "--out", path(&out), "--seed", "3", "--json"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let report: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
    assert_eq!(report["segments"].as_array().unwrap().len(), 1);
    assert_eq!(report["frame_count"], 120);

    let text = viewsynth(&["evaluate", path(&out.join("frames")), path(&out.join("frames"))]);
    assert!(text.status.success());
    assert!(String::from_utf8_lossy(&text.stdout).contains("ITF ratio 1.0000"));
}

#[test]
fn evaluate_rejects_single_frame_video() {
    let dir = tempfile::tempdir().unwrap();
    image::RgbImage::new(8, 8).save(dir.path().join("000001.png")).unwrap();
    let result = viewsynth(&["evaluate", path(dir.path()), path(dir.path())]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("fewer than 2 frames"));
}
