use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const METHANE: &str = "5
methane
C 0.000 0.000 0.000
H 0.629 0.629 0.629
H 0.629 -0.629 -0.629
H -0.629 0.629 -0.629
H -0.629 -0.629 0.629
";

const DISTORTED_ETHANOL: &str = "9
ethanol, pulled off symmetry
C 0.010 -0.020 0.000
C 1.530 0.030 0.040
O 2.010 1.320 -0.050
H -0.390 1.010 0.080
H -0.350 -0.540 0.910
H -0.330 -0.560 -0.860
H 1.910 -0.480 0.940
H 1.880 -0.530 -0.820
H 2.990 1.290 0.020
";

const CO2: &str = "3
co2
C 0 0 0
O 1.16 0 0
O -1.16 0 0
";

fn iar(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_iar"));
    cmd.args(args).env_remove("IAR_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(iar(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(iar(&["--version"], &[]).status.code(), Some(0));
    assert_eq!(iar(&["tokenize", "--help"], &[]).status.code(), Some(0));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(iar(&[], &[]).status.code(), Some(1));
    assert_eq!(iar(&["frobnicate"], &[]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "m.xyz", METHANE);
    assert_eq!(iar(&["fuzz-invariance", &f, "--trials", "0"], &[]).status.code(), Some(1));
}

#[test]
fn tokenize_prints_heavy_atom_first() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "m.xyz", METHANE);
    let out = iar(&["tokenize", &f], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("C "));
    assert!(lines[1..].iter().all(|l| l.starts_with("H ")));
}

#[test]
fn tokenize_json_and_file_output() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "e.xyz", DISTORTED_ETHANOL);
    let out = iar(&["tokenize", &f, "--json"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 9);
    assert!(arr[0]["x"].is_f64() && arr[0]["symbol"].is_string());

    let dest = dir.path().join("tokens.txt");
    let out = iar(&["tokenize", &f, "--out", dest.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dest).unwrap().lines().count(), 9);
}

#[test]
fn unreadable_or_malformed_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.xyz");
    assert_eq!(iar(&["tokenize", missing.to_str().unwrap()], &[]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.xyz", "1\n\nXx 0 0 0\n");
    let out = iar(&["tokenize", &bad], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Xx"));
}

#[test]
fn fuzz_invariance_passes_or_skips() {
    let dir = TempDir::new().unwrap();
    let e = write(dir.path(), "e.xyz", DISTORTED_ETHANOL);
    let out = iar(&["fuzz-invariance", &e, "--trials", "50", "--seed", "3"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("order_mismatches 0"));

    let c = write(dir.path(), "c.xyz", CO2);
    let out = iar(&["fuzz-invariance", &c], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("skipped:"));
}

#[test]
fn synth_then_eval_reports_perfect_templates() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("synth.xyz");
    let out = iar(&["synth", "--count", "14", "--seed", "2", "--out", data.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = dir.path().join("report.json");
    let out = iar(
        &["eval", data.to_str().unwrap(), "--json", report.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["samples"], 14);
    assert_eq!(v["validity"], 1.0);
    assert_eq!(v["atom_stability"], 1.0);
    assert_eq!(v["molecule_stability"], 1.0);
    assert_eq!(iar(&["eval", data.to_str().unwrap(), "--target-class", "999"], &[]).status.code(), Some(1));
}

fn config(dir: &Path, extra: &str) -> String {
    let out = dir.join("run");
    write(
        dir,
        "run.toml",
        &format!(
            "out_dir = {:?}\nsynth_count = 7\nsteps = 20\nbatch_size = 4\nd_type = 12\nnum_samples = 3\nmax_len = 12\n{extra}",
            out.to_string_lossy()
        ),
    )
}

#[test]
fn train_and_sample_pipeline_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "optimizer = \"adam\"\nlearning_rate = 0.003\n");
    let run = dir.path().join("run");

    let out = iar(&["train", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(run.join("model.iar")).unwrap();
    let csv = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,loss_type,loss_diff"));
    assert_eq!(csv.lines().count(), 21);
    assert!(fs::read_to_string(run.join("loss.svg")).unwrap().contains("<svg"));

    assert_eq!(iar(&["train", "--config", &cfg], &[]).status.code(), Some(0));
    assert_eq!(fs::read(run.join("model.iar")).unwrap(), first);

    assert_eq!(iar(&["train", "--config", &cfg], &[("IAR_SEED", "9")]).status.code(), Some(0));
    assert_ne!(fs::read(run.join("model.iar")).unwrap(), first);

    let out = iar(&["sample", "--config", &cfg, "--num", "2"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = run.join("samples");
    let names: Vec<String> = fs::read_dir(&samples)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 2);
    assert!(names.iter().all(|n| n.starts_with("sample_0_") && n.ends_with(".xyz")));
    let out = iar(&["eval", samples.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));

    let out = iar(&["sample", "--config", &cfg, "--class", "5000"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_are_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "no_such_key = 1\n");
    assert_eq!(iar(&["train", "--config", &cfg], &[]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(iar(&["train", "--config", missing.to_str().unwrap()], &[]).status.code(), Some(2));
    let corrupt = write(dir.path(), "model.iar", "IAR1 not really");
    let cfg = config(dir.path(), "");
    assert_eq!(
        iar(&["sample", "--config", &cfg, "--checkpoint", &corrupt], &[]).status.code(),
        Some(2)
    );
}

#[test]
fn divergence_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "learning_rate = 1e12\ngrad_clip = 0.0\nmomentum = 0.0\n");
    let out = iar(&["train", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
