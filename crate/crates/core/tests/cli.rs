use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_boomda");

fn boomda(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("BOOMDA_SEED").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_data(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(
        &spec,
        "[data]\nn_source = 60\nn_source_test = 40\nn_target = 60\nn_target_test = 40\n\
         [[data.shift]]\nrotation_angle = 1.0\n[[data.shift]]\n[[data.shift]]\n",
    )
    .unwrap();
    let data = dir.join("data");
    let out = boomda(&["gen", "--spec", p(&spec), "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn summary_seed(dir: &Path) -> u64 {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    v["seed"].as_u64().unwrap()
}

#[test]
fn gen_writes_manifest_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    assert!(data.join("manifest.json").is_file());
    assert!(data.join("source_m0.csv").is_file());
    assert!(data.join("target_test_labels.csv").is_file());
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "[data]\nclasses = 3\nclass_sepration = 0.5\n").unwrap();
    let out = boomda(&["gen", "--spec", p(&spec), "--out", p(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class_sepration"));

    fs::write(&spec, "[train]\nbta = 1.0\n").unwrap();
    let out = boomda(&["gen", "--spec", p(&spec), "--out", p(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bta"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(boomda(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(boomda(&[]).status.code(), Some(2));
    assert_eq!(boomda(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_writes_reports_and_missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out_dir = dir.path().join("run");
    let out = boomda(&["train", "--data", p(&data), "--out", p(&out_dir), "--iterations", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("report.csv").is_file());
    assert!(out_dir.join("summary.json").is_file());

    let out = boomda(&["train", "--data", p(&dir.path().join("nope")), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_precedence_is_flag_then_file_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[train]\nseed = 5\niterations = 5\nbatch_size = 16\n").unwrap();
    let plain = dir.path().join("plain.toml");
    fs::write(&plain, "[train]\niterations = 5\nbatch_size = 16\n").unwrap();
    let run = |name: &str, config: &Path, flag: Option<&str>, env: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(BIN);
        cmd.args(["train", "--data", p(&data), "--config", p(config), "--out", p(&out_dir)]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        cmd.env_remove("BOOMDA_SEED");
        if let Some(e) = env {
            cmd.env("BOOMDA_SEED", e);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        summary_seed(&out_dir)
    };
    assert_eq!(run("a", &cfg, Some("3"), Some("9")), 3);
    assert_eq!(run("b", &cfg, None, Some("9")), 5);
    assert_eq!(run("c", &plain, None, Some("9")), 9);
    assert_eq!(run("d", &plain, None, None), 0);

    let out = Command::new(BIN)
        .args(["train", "--data", p(&data), "--config", p(&plain), "--out", p(&dir.path().join("e"))])
        .env("BOOMDA_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_seed_flag_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "[data]\nseed = 4\nn_source = 20\nn_source_test = 20\nn_target = 20\nn_target_test = 20\n").unwrap();
    let out = boomda(&["gen", "--spec", p(&spec), "--seed", "8", "--out", p(&dir.path().join("d"))]);
    assert!(out.status.success());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(8));
}

#[test]
fn uniform_and_closed_form_first_rows_differ_only_in_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let report = |solver: &str| {
        let out_dir = dir.path().join(solver);
        let out = boomda(&[
            "train", "--data", p(&data), "--out", p(&out_dir), "--solver", solver, "--iterations", "10", "--no-timing",
        ]);
        assert!(out.status.success());
        fs::read_to_string(out_dir.join("report.csv")).unwrap()
    };
    let (u, c) = (report("uniform"), report("closed_form"));
    let header: Vec<&str> = u.lines().next().unwrap().split(',').collect();
    assert_eq!(u.lines().next(), c.lines().next());
    assert_eq!(u.lines().count(), c.lines().count());
    let ru: Vec<&str> = u.lines().nth(1).unwrap().split(',').collect();
    let rc: Vec<&str> = c.lines().nth(1).unwrap().split(',').collect();
    let mut gamma_differs = false;
    for ((name, a), b) in header.iter().zip(&ru).zip(&rc) {
        if name.starts_with("gamma_") {
            gamma_differs |= a != b;
        } else {
            assert_eq!(a, b, "column {name}");
        }
    }
    assert!(gamma_differs);
}

#[test]
fn ablate_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out_dir = dir.path().join("ab");
    let args = ["ablate", "--data", p(&data), "--seeds", "1", "--out", p(&out_dir), "--iterations", "5", "--no-timing"];
    let first = boomda(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let table = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert!(table.starts_with("variant,alpha1,alpha2,solver,n_seeds,mean_f1,std_f1,scores"));
    for line in table.lines().skip(1) {
        assert_eq!(line.split(',').nth(6), Some("0"), "single seed has zero std: {line}");
    }
    assert_eq!(boomda(&args).status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(boomda(&forced).status.success());
}

#[test]
fn gradcheck_is_reproducible_and_fault_injection_fails() {
    let a = boomda(&["gradcheck", "--seed", "4", "--draws", "3"]);
    let b = boomda(&["gradcheck", "--seed", "4", "--draws", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let bad = boomda(&["gradcheck", "--seed", "4", "--draws", "3", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn solverbench_writes_rows_for_each_method() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = boomda(&["solverbench", "--dims", "3,6", "--trials", "4", "--reps", "2", "--out", p(&csv)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    for (method, dim) in [("closed_form", "3"), ("frank_wolfe", "6"), ("exact_oracle", "3")] {
        let n = text.lines().filter(|l| l.starts_with(&format!("{method},{dim},"))).count();
        assert_eq!(n, 4, "{method} dim {dim}");
    }
    assert!(!text.lines().any(|l| l.starts_with("exact_oracle,6,")));
}
