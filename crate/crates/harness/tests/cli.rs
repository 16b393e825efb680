use std::path::{Path, PathBuf};
use std::process::Command;

use hybridae::dataset::synthetic_small_sample;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridae"))
}

fn write_table(dir: &Path) -> PathBuf {
    let data = synthetic_small_sample(11, 3.0);
    let mut text = String::new();
    for (row, label) in data.features.rows().into_iter().zip(&data.labels) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&format!("{},{label}\n", cells.join(",")));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> (bool, String, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn ablate_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_table(dir.path());
    let out = dir.path().join("ablation.csv");
    let (ok, stdout, stderr) =
        run(&["ablate", "--dataset", data.to_str().unwrap(), "--repeats", "1", "--epochs", "3", "--out", out.to_str().unwrap()]);
    assert!(ok, "{stderr}");
    assert!(stdout.contains("HF&L1&Ensemble"));
    let csv = std::fs::read_to_string(&out).unwrap();
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, vec!["OF", "DF", "HF", "HF&L1", "HF&L1&Ensemble", "HESSAE"]);
    let json = std::fs::read_to_string(dir.path().join("ablation.json")).unwrap();
    assert!(json.contains("\"std_convention\": \"population\""));
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_table(dir.path());
    let model = dir.path().join("m.bin");
    let (ok, stdout, stderr) =
        run(&["train", "--dataset", data.to_str().unwrap(), "--stage", "HF", "--epochs", "3", "--out", model.to_str().unwrap()]);
    assert!(ok, "{stderr}");
    let trained: &str = stdout.lines().next().unwrap();
    let (ok, stdout, stderr) = run(&["evaluate", "--model", model.to_str().unwrap()]);
    assert!(ok, "{stderr}");
    // both report the same held-out accuracy
    let pct = |s: &str| s.split("accuracy ").nth(1).unwrap().split('%').next().unwrap().to_string();
    assert_eq!(pct(trained), pct(&stdout));
    let (ok, stdout, _) = run(&["evaluate", "--model", model.to_str().unwrap(), "--all"]);
    assert!(ok && stdout.contains("on 90 rows"));
}

#[test]
fn evaluate_without_model_runs_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_table(dir.path());
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "version = 1\nseed = 4\nrepeats = 2\nstage = \"OF\"\n[dataset]\npath = {:?}\n[hessae]\nhidden = [6, 3]\nlambda = 1e-4\nbeta = 3.0\nrho = 0.05\nepochs = 2\n[svm]\nc_grid = [1.0, 10.0]\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let (ok, stdout, stderr) = run(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert!(ok, "{stderr}");
    assert!(stdout.contains("Experiment") && stdout.contains("r2"));
}

#[test]
fn compare_lists_four_autoencoders() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_table(dir.path());
    let (ok, stdout, stderr) = run(&["compare", "--dataset", data.to_str().unwrap(), "--repeats", "1", "--epochs", "2"]);
    assert!(ok, "{stderr}");
    for name in ["SAE", "SSAE", "HESSAE", "HESAE"] {
        assert!(stdout.lines().any(|l| l.starts_with(name)), "{name} missing:\n{stdout}");
    }
}

#[test]
fn selftest_passes() {
    let (ok, stdout, _) = run(&["selftest"]);
    assert!(ok, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 6);
}

#[test]
fn bad_input_is_reported() {
    let (ok, _, stderr) = run(&["ablate"]);
    assert!(!ok && stderr.contains("--config or --dataset"));
    let (ok, _, stderr) = run(&["ablate", "--dataset", "/nonexistent.csv", "--stage", "XX"]);
    assert!(!ok && stderr.contains("XX"));
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"definitely not a model").unwrap();
    let (ok, _, stderr) = run(&["evaluate", "--model", junk.to_str().unwrap()]);
    assert!(!ok && stderr.contains("magic"));
}
