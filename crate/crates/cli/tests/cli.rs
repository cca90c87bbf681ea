use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketchlattice"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn params_reports_small_encoder_total() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/d64.cfg");
    let o = run(&["params", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "total 62016"), "{}", stdout(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "params");
    assert_eq!(manifest["config"]["model"]["encoder"]["d"], 64);
}

#[test]
fn help_lists_global_flags() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in ["--config", "--seed", "--n", "--pmask", "--checkpoint", "--out"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    for sub in ["ingest", "train", "heal", "generate", "img2sketch", "eval", "audit-grad", "render", "params"] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["params", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "depth = 3\n").unwrap();
    let o = run(&["params", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error code=Config class=usage"), "{}", stderr(&o));
}

/// Trains a throwaway model for one step so checkpoint-based commands can run.
fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, "d = 8\nhidden = 8\nmixtures = 2\nbatch_size = 4\niterations = 2\ntest_per_category = 2\n").unwrap();
    let data = dir.join("ring.ndjson");
    let lines: Vec<String> = (0..8)
        .map(|k| format!(r#"{{"word": "ring", "drawing": [[[10, 200, 200, 10, 10], [10, 10, {}, 200, 10]]]}}"#, 150 + k * 5))
        .collect();
    std::fs::write(&data, lines.join("\n")).unwrap();
    let out = dir.join("run");
    let o = run(&["train", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    out.join("final.skl")
}

#[test]
fn heal_with_everything_masked_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let pgm = dir.path().join("box.pgm");
    let mut raster = sketchlattice::RasterSketch::blank(256, 256);
    for i in 20..230 {
        raster.set(i, 40, true);
        raster.set(40, i, true);
    }
    std::fs::write(&pgm, raster.to_pgm_bytes()).unwrap();
    let out = dir.path().join("healed");
    let args = |p: &str| {
        vec![
            "heal".to_string(),
            pgm.display().to_string(),
            "--checkpoint".into(),
            ckpt.display().to_string(),
            "--pmask".into(),
            p.into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let o = bin().args(args("1.0")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error code=EmptyLattice class=data"), "{}", stderr(&o));

    let o = bin().args(args("0.2")).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(out.join("box.svg")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("box.json")).unwrap()).unwrap();
    assert_eq!(doc["p_mask"], 0.2);
    assert!(doc["steps"].is_array() && doc["lattice"].is_object());
    let o = bin().args(args("0.2")).output().unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("box.svg")).unwrap(), first);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["checkpoint_hash"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["generate", "--checkpoint", "/nonexistent.skl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("class=model"));
}

#[test]
fn render_round_trips_through_svg() {
    let dir = tempfile::tempdir().unwrap();
    let sketch = sketchlattice::VectorSketch::from_polylines(&[
        vec![(0.0, 0.0), (30.0, 0.0), (30.0, 40.0)],
        vec![(100.0, 100.0), (120.0, 90.0)],
    ]);
    let input = dir.path().join("two.json");
    std::fs::write(&input, sketch.to_steps_json().to_string()).unwrap();
    let out = dir.path().join("r");
    let o = run(&["render", input.to_str().unwrap(), "--pgm", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(out.join("two.svg")).unwrap();
    let parsed = sketchlattice::sketch_data::parse_svg_polylines(&svg);
    let back = sketchlattice::VectorSketch::from_polylines(&parsed);
    assert_eq!(back.steps.len(), sketch.steps.len());
    for (a, b) in back.steps.iter().zip(&sketch.steps) {
        assert_eq!(a.pen, b.pen);
        assert!((a.dx - b.dx).abs() < 1e-3 && (a.dy - b.dy).abs() < 1e-3);
    }
    let pgm = std::fs::read(out.join("two.pgm")).unwrap();
    let raster = sketchlattice::RasterSketch::read_pgm(&pgm[..]).unwrap();
    assert_eq!((raster.width(), raster.height()), (256, 256));
    assert!(raster.dark_count() > 0);
}

#[test]
fn malformed_record_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.ndjson");
    std::fs::write(&data, "{\"drawing\": [[[0, 1], [0]]]}\n").unwrap();
    let o = run(&["ingest", data.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.ndjson:1"), "{}", stderr(&o));
}
