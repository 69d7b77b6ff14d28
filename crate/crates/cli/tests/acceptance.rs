//! CLI acceptance: every command, run twice with identical configuration
//! and seed but different thread counts, must produce byte-identical data
//! artifacts; the manifest may differ only in its timestamp, and artifacts
//! the manifest flags volatile (wall-clock timings) are exempt. Also pins
//! the exit-code taxonomy.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

fn qsd(args: &[&str], threads: &str) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("qsd runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Compares two output directories: all non-volatile artifacts must match
/// byte-for-byte, and the manifests must agree on everything except the
/// creation timestamp (and the hashes of volatile artifacts).
fn assert_identical_runs(a: &Path, b: &Path) {
    let manifest_a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let manifest_b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();

    let arts_a = manifest_a["artifacts"].as_array().unwrap();
    let arts_b = manifest_b["artifacts"].as_array().unwrap();
    assert_eq!(arts_a.len(), arts_b.len(), "artifact lists differ in length");
    for (ea, eb) in arts_a.iter().zip(arts_b) {
        assert_eq!(ea["path"], eb["path"]);
        assert_eq!(ea["volatile"], eb["volatile"]);
        let path = ea["path"].as_str().unwrap();
        if ea["volatile"].as_bool().unwrap() {
            continue; // wall-clock timings may differ between runs
        }
        assert_eq!(ea["sha256"], eb["sha256"], "hash mismatch for {path}");
        let bytes_a = fs::read(a.join(path)).unwrap();
        let bytes_b = fs::read(b.join(path)).unwrap();
        assert_eq!(bytes_a, bytes_b, "artifact {path} differs between runs");
    }

    // manifests agree modulo the timestamp
    let mut ma = manifest_a.clone();
    let mut mb = manifest_b.clone();
    ma["created_unix"] = serde_json::Value::Null;
    mb["created_unix"] = serde_json::Value::Null;
    // volatile artifact hashes may differ; blank them symmetrically
    for m in [&mut ma, &mut mb] {
        for entry in m["artifacts"].as_array_mut().unwrap() {
            if entry["volatile"].as_bool().unwrap() {
                entry["sha256"] = serde_json::Value::Null;
                entry["bytes"] = serde_json::Value::Null;
            }
        }
    }
    assert_eq!(ma, mb, "manifests differ beyond the timestamp");
}

struct Workbench {
    root: tempfile::TempDir,
}

impl Workbench {
    fn new() -> Self {
        Workbench { root: tempfile::tempdir().unwrap() }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn path_str(&self, name: &str) -> String {
        self.dir(name).to_string_lossy().into_owned()
    }

    /// Runs one command twice (1 thread, then 3) into sibling directories
    /// and checks the outputs are identical.
    fn run_deterministic(&self, label: &str, args: &[&str]) -> PathBuf {
        let out_a = self.path_str(&format!("{label}-a"));
        let out_b = self.path_str(&format!("{label}-b"));
        let mut args_a: Vec<&str> = args.to_vec();
        args_a.extend(["--out", &out_a]);
        let mut args_b: Vec<&str> = args.to_vec();
        args_b.extend(["--out", &out_b]);
        assert_ok(&qsd(&args_a, "1"), label);
        assert_ok(&qsd(&args_b, "3"), label);
        assert_identical_runs(Path::new(&out_a), Path::new(&out_b));
        PathBuf::from(out_a)
    }
}

#[test]
fn criterion_7_cli_determinism() {
    let bench = Workbench::new();

    let plan_dir = bench.run_deterministic(
        "plan-binary",
        &[
            "plan",
            "--scenario",
            "binary",
            "--theta",
            "1.0471975511965976",
            "--horizon",
            "2",
            "--grid",
            "60",
            "--library",
            "21",
            "--cost",
            "0.01",
            "--seed",
            "3",
        ],
    );

    bench.run_deterministic(
        "plan-trine",
        &[
            "plan",
            "--scenario",
            "trine",
            "--grid",
            "12",
            "--library",
            "8",
            "--horizon",
            "2",
            "--cost",
            "0.02",
            "--counter-mode",
            "memoized",
        ],
    );

    let plan_dir_str = plan_dir.to_string_lossy().into_owned();
    bench.run_deterministic(
        "simulate",
        &[
            "simulate",
            "--tables",
            &plan_dir_str,
            "--episodes",
            "2000",
            "--seed",
            "7",
            "--traces",
        ],
    );

    bench.run_deterministic(
        "maps-trine",
        &[
            "maps",
            "--scenario",
            "trine",
            "--grid",
            "12",
            "--library",
            "8",
            "--horizon",
            "2",
            "--cost",
            "0.02",
        ],
    );

    bench.run_deterministic(
        "maps-binary",
        &[
            "maps",
            "--scenario",
            "binary",
            "--theta",
            "0.9",
            "--horizon",
            "2",
            "--cost",
            "0.01",
            "--library",
            "21",
        ],
    );

    for case in ["A", "E"] {
        bench.run_deterministic(
            &format!("routing-{case}"),
            &[
                "routing",
                "--scenario",
                "trine",
                "--grid",
                "12",
                "--library",
                "8",
                "--horizon",
                "2",
                "--cost",
                "0.02",
                "--case",
                case,
            ],
        );
    }

    let bounds_dir = bench.run_deterministic(
        "bounds",
        &[
            "bounds",
            "--scenario",
            "binary",
            "--theta",
            "1.0",
            "--horizon",
            "2",
            "--cost",
            "0.01",
            "--grid",
            "50",
            "--library",
            "11",
            "--oracle-grid",
            "2000",
        ],
    );
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bounds_dir.join("bounds.json")).unwrap())
            .unwrap();
    assert_eq!(bounds["empirical"]["within_budget"], serde_json::Value::Bool(true));

    let scaling_dir = bench.run_deterministic(
        "scaling",
        &[
            "scaling",
            "--scenario",
            "binary",
            "--theta",
            "1.0471975511965976",
            "--horizon",
            "1",
            "--cost",
            "0.01",
            "--library",
            "11",
            "--grids",
            "30,60",
        ],
    );
    let scaling: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(scaling_dir.join("scaling_summary.json")).unwrap(),
    )
    .unwrap();
    let slope = scaling["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "fitted slope {slope}");

    println!("ACCEPTANCE 7 (CLI determinism): PASS");
}

#[test]
fn missing_required_flag_exits_with_code_2() {
    let bench = Workbench::new();
    let out = qsd(
        &[
            "plan",
            "--scenario",
            "binary",
            "--cost",
            "0.01",
            "--out",
            &bench.path_str("x"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--horizon"), "message must name the flag: {stderr}");
}

#[test]
fn invalid_parameters_exit_with_code_2() {
    let bench = Workbench::new();
    // theta outside the open interval
    let out = qsd(
        &[
            "plan", "--scenario", "binary", "--theta", "2.0", "--horizon", "1", "--cost",
            "0.01", "--out", &bench.path_str("y"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));

    // routing needs a case or a start
    let out = qsd(
        &[
            "routing", "--scenario", "trine", "--horizon", "2", "--cost", "0.02", "--grid",
            "12", "--library", "8", "--out", &bench.path_str("z"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn malformed_ensemble_files_exit_with_code_2_and_name_the_line() {
    let bench = Workbench::new();
    let path = bench.dir("bad.json");
    fs::write(&path, "{\n  \"states\": [not json\n}").unwrap();
    let out = qsd(
        &[
            "plan",
            "--scenario",
            "custom",
            "--ensemble",
            path.to_str().unwrap(),
            "--horizon",
            "1",
            "--cost",
            "0.01",
            "--out",
            &bench.path_str("c"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "diagnostic names the line: {stderr}");

    // a parseable file with an invalid state names the field
    let path = bench.dir("badstate.json");
    fs::write(
        &path,
        r#"{"states": [[[0.6, 0.0], [0.0, 0.0], [0.0, 0.0], [0.6, 0.0]],
                       [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]],
           "prior": [0.5, 0.5], "family": "binary-projective", "params": [0.0, 0.7]}"#,
    )
    .unwrap();
    let out = qsd(
        &[
            "plan",
            "--scenario",
            "custom",
            "--ensemble",
            path.to_str().unwrap(),
            "--horizon",
            "1",
            "--cost",
            "0.01",
            "--out",
            &bench.path_str("d"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("states[0]"));
}

#[test]
fn valid_custom_ensembles_plan_successfully() {
    let bench = Workbench::new();
    let path = bench.dir("ensemble.json");
    fs::write(
        &path,
        r#"{"states": [[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
                       [[0.25, 0.0], [0.4330127018922193, 0.0],
                        [0.4330127018922193, 0.0], [0.75, 0.0]]],
           "prior": [0.5, 0.5], "family": "binary-projective",
           "params": [0.0, 0.5235987755982988, 1.0471975511965976, 1.5707963267948966]}"#,
    )
    .unwrap();
    let out_dir = bench.path_str("custom-out");
    let out = qsd(
        &[
            "plan",
            "--scenario",
            "custom",
            "--ensemble",
            path.to_str().unwrap(),
            "--horizon",
            "2",
            "--cost",
            "0.01",
            "--grid",
            "40",
            "--out",
            &out_dir,
        ],
        "1",
    );
    assert_ok(&out, "custom plan");
    assert!(Path::new(&out_dir).join("values.csv").exists());
}

#[test]
fn grid_cap_overflow_exits_with_code_3() {
    let bench = Workbench::new();
    let out = qsd(
        &[
            "plan", "--scenario", "trine", "--grid", "4000", "--library", "8", "--horizon",
            "2", "--cost", "0.02", "--out", &bench.path_str("big"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn tampered_tables_exit_with_code_4() {
    let bench = Workbench::new();
    let plan_dir = bench.path_str("plan");
    assert_ok(
        &qsd(
            &[
                "plan", "--scenario", "binary", "--theta", "1.0", "--horizon", "1", "--cost",
                "0.01", "--grid", "30", "--library", "5", "--out", &plan_dir,
            ],
            "1",
        ),
        "plan",
    );

    // flip one byte inside the stored tables
    let tables = Path::new(&plan_dir).join("tables.json");
    let mut bytes = fs::read(&tables).unwrap();
    let position = bytes.len() / 2;
    bytes[position] = if bytes[position] == b'1' { b'2' } else { b'1' };
    fs::write(&tables, &bytes).unwrap();

    let out = qsd(
        &[
            "simulate",
            "--tables",
            &plan_dir,
            "--episodes",
            "10",
            "--seed",
            "1",
            "--out",
            &bench.path_str("sim"),
        ],
        "1",
    );
    assert_eq!(exit_code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tables.json"));
}

#[test]
fn config_file_overrides_flags() {
    let bench = Workbench::new();
    let config_path = bench.dir("override.json");
    fs::write(&config_path, r#"{"cost": 0.01}"#).unwrap();
    // the flag cost would be rejected (2 x 0.9 > 1); the file must win
    let out_dir = bench.path_str("override-out");
    let out = qsd(
        &[
            "plan",
            "--scenario",
            "binary",
            "--theta",
            "1.0",
            "--horizon",
            "2",
            "--cost",
            "0.9",
            "--grid",
            "30",
            "--library",
            "5",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            &out_dir,
        ],
        "1",
    );
    assert_ok(&out, "config override");
    let stored: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(Path::new(&out_dir).join("run_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stored["config"]["cost"].as_f64().unwrap(), 0.01);
}

#[test]
fn out_root_environment_variable_prefixes_relative_outputs() {
    let bench = Workbench::new();
    let root = bench.path_str("rooted");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args([
            "plan", "--scenario", "binary", "--theta", "1.0", "--horizon", "1", "--cost",
            "0.01", "--grid", "20", "--library", "5", "--out", "nested/run",
        ])
        .env("QSD_OUT_ROOT", &root)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&root).join("nested/run/values.csv").exists());
}
