use std::fs;
use std::path::Path;
use std::process::Command;

use placecam::cli::{run, CliError};
use placecam::pipeline::PipelineError;
use placecam::selection::SelectionTable;
use placecam::simulator::Traverse;

const CONFIG: &str = r#"
[seeds]
master = 5

[world]
trajectory_length_m = 120.0
region_length_m = 20.0
landmarks_per_region = 300

[rig]
preset = "four_camera"

[profile]
base = "good"

[[profile.override]]
regions = [2, 3]
cameras = [0]
dropout_probability = 1.0

[places]
width = 20
stride = 10

[evaluation]
slice_frames = 60
"#;

fn setup(config: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, config).unwrap();
    (dir, path.to_string_lossy().into_owned())
}

fn placecam(args: &[&str]) -> Result<String, CliError> {
    let mut log = Vec::new();
    run(std::iter::once("placecam").chain(args.iter().copied()), &mut log)?;
    Ok(String::from_utf8(log).unwrap())
}

fn full_run(config: &str, out: &Path, extra: &[&str]) {
    let out = out.to_str().unwrap();
    for cmd in ["simulate", "train", "query", "report"] {
        let mut args = vec![cmd, "--config", config, "--out", out];
        args.extend_from_slice(extra);
        placecam(&args).unwrap_or_else(|e| panic!("{cmd}: {e}"));
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_writes_three_traverses() {
    let (dir, config) = setup(CONFIG);
    let out = dir.path().join("out");
    let log = placecam(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]).unwrap();
    assert!(log.contains("seeds: master 5"));
    for role in ["map", "training", "query"] {
        let t: Traverse = fs::read_to_string(out.join(format!("{role}.traverse")))
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(t.len(), 120);
        assert_eq!(t.role.name(), role);
    }
}

#[test]
fn pipeline_is_byte_reproducible() {
    let (dir, config) = setup(CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    full_run(&config, &a, &[]);
    full_run(&config, &b, &[]);
    let fa = files(&a);
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "selection.table",
        "static.txt",
        "results_dynamic.csv",
        "results_oracle.csv",
        "summary.csv",
        "slices.csv",
        "places.csv",
    ] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert_eq!(fa, files(&b));

    let c = dir.path().join("c");
    full_run(&config, &c, &["--seed", "6"]);
    assert_ne!(
        fs::read(a.join("query.traverse")).unwrap(),
        fs::read(c.join("query.traverse")).unwrap()
    );
}

#[test]
fn table_file_round_trips_and_routes_around_dropout() {
    let (dir, config) = setup(CONFIG);
    let out = dir.path().join("out");
    full_run(&config, &out, &["--quadrature"]);
    let text = fs::read_to_string(out.join("selection.table")).unwrap();
    let table: SelectionTable = text.parse().unwrap();
    assert_eq!(table.to_text(), text);
    assert_eq!(table.kde.mode.name(), "quadrature");
    // camera 0 never localizes in frames 40..80
    for p in table.places.iter().filter(|p| p.start_index >= 40 && p.end_index <= 80) {
        assert_ne!(p.chosen_camera, 0);
    }
    let results = fs::read_to_string(out.join("results_dynamic.csv")).unwrap();
    let records = placecam::evaluation::records_from_csv(&results).unwrap();
    assert_eq!(records.len(), 120);
    assert!(records.iter().all(|r| r.localizations == 1));
}

#[test]
fn single_selector_report() {
    let (dir, config) = setup(&CONFIG.replace("slice_frames = 60", "slice_frames = 120"));
    let o = dir.path().join("out");
    let out = o.to_str().unwrap();
    placecam(&["simulate", "--config", &config, "--out", out]).unwrap();
    placecam(&["query", "--config", &config, "--out", out, "--selector", "random"]).unwrap();
    placecam(&["report", "--config", &config, "--out", out]).unwrap();
    let summary = fs::read_to_string(o.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2, "{summary}");
    assert!(summary.lines().nth(1).unwrap().starts_with("random,default,1,120,"));
}

#[test]
fn missing_rig_section_is_named() {
    let (_dir, config) = setup(&CONFIG.replace("[rig]\npreset = \"four_camera\"\n", ""));
    let err = placecam(&["simulate", "--config", &config]).unwrap_err();
    assert!(matches!(err, CliError::Config { .. }));
    assert!(err.to_string().contains("missing field `rig`"), "{err}");
}

#[test]
fn bad_values_and_missing_inputs() {
    let (dir, config) = setup(&CONFIG.replace("stride = 10", "stride = 30"));
    let err = placecam(&["simulate", "--config", &config]).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");

    let (dir2, config) = setup(CONFIG);
    let out = dir2.path().join("out");
    let out = out.to_str().unwrap();
    placecam(&["simulate", "--config", &config, "--out", out]).unwrap();
    let err = placecam(&["query", "--config", &config, "--out", out, "--selector", "dynamic"]).unwrap_err();
    assert!(
        matches!(&err, CliError::Io { path, .. } if path.ends_with("selection.table")),
        "{err}"
    );
    let err = placecam(&["report", "--config", &config, "--out", out]).unwrap_err();
    assert!(matches!(err, CliError::NoResults(_)));

    // a traverse from another world is rejected
    let other = CONFIG.replace("trajectory_length_m = 120.0", "trajectory_length_m = 140.0");
    let path = dir.path().join("other.toml");
    fs::write(&path, other).unwrap();
    let err = placecam(&["train", "--config", path.to_str().unwrap(), "--out", out]).unwrap_err();
    assert!(matches!(err, CliError::Pipeline(PipelineError::Config(_))), "{err}");

    // corrupt file: error names the file and line
    let t = Path::new(out).join("training.traverse");
    let text = fs::read_to_string(&t).unwrap().replacen("frame 3 ", "frame x ", 1);
    fs::write(&t, text).unwrap();
    let err = placecam(&["train", "--config", &config, "--out", out])
        .unwrap_err()
        .to_string();
    assert!(err.contains("training.traverse") && err.contains("line"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_placecam");
    let out = Command::new(exe)
        .args(["train", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.toml"));
    let out = Command::new(exe)
        .args(["query", "--config", "x", "--selector", "gpnp"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let (dir, config) = setup(CONFIG);
    let out = Command::new(exe)
        .args([
            "simulate",
            "--config",
            &config,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
}
