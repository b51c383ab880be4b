//! End-to-end tests of the command-line binary.
//!
//! Each test drives the real executable inside a temporary directory and
//! checks exit codes, stdout/stderr, and the artifacts left on disk.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use instill::harness::checkpoint::{load_generator, save_generator};
use instill::nets::Generator;
use instill::rng::Xoshiro256;
use instill::tensorgrad::{Activation, MlpNet};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instill"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Trains a tiny 1D teacher and returns the checkpoint path. Shared by the
/// tests that need a plausible (not necessarily accurate) score model.
fn train_small_teacher(dir: &Path) -> PathBuf {
    let cfg = dir.join("teacher_cfg.json");
    write(
        &cfg,
        r#"{
            "seed": 11,
            "schedule": {"kind": "ve", "t_min": 0.001, "t_max": 1.0},
            "dataset": {"kind": "gaussian", "mean": [0.0], "var": [1.0]},
            "score_net": {"hidden": [16]},
            "train": {"iterations": 80, "batch_size": 32, "log_interval": 40}
        }"#,
    );
    let out_dir = dir.join("teacher");
    let out = run(&[
        "train-teacher",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    out_dir.join("teacher.json")
}

fn distill_config(dir: &Path, iterations: usize) -> PathBuf {
    let cfg = dir.join("distill_cfg.json");
    write(
        &cfg,
        &format!(
            r#"{{
                "seed": 4,
                "schedule": {{"kind": "ve", "t_min": 0.001, "t_max": 1.0}},
                "dataset": {{"kind": "gaussian", "mean": [0.0], "var": [1.0]}},
                "generator": {{"init": "fresh", "hidden": [8], "latent_dim": 1}},
                "train": {{"iterations": {iterations}, "batch_size": 32, "log_interval": 25}},
                "eval": {{"samples": 64}}
            }}"#
        ),
    );
    cfg
}

/// Writes an untrained 2D generator checkpoint for the sample/eval/plot tests.
fn save_toy_generator(path: &Path) {
    let mut rng = Xoshiro256::seed_from_u64(5);
    let net = MlpNet::random(vec![2, 8, 2], Activation::Softplus, &mut rng).unwrap();
    let g = Generator::new(net, 2, 1.0).unwrap();
    save_generator(path, &g).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let out = run(&["--help"]);
    assert_exit(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    let out = run(&["--version"]);
    assert_exit(&out, 0);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["fit"]);
    assert_exit(&out, 1);
}

#[test]
fn oracle_battery_passes_and_writes_its_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write(&cfg, r#"{"seed": 1}"#);
    let out_dir = tmp.path().join("oracle");
    let out = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("checks pass"));

    let table = read(&out_dir.join("oracle.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("check,value,target,tolerance,status"));
    for line in lines {
        assert!(line.ends_with(",pass"), "failed oracle row: {line}");
    }
}

#[test]
fn teacher_run_writes_checkpoint_metrics_and_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let teacher = train_small_teacher(tmp.path());
    assert!(teacher.exists());

    let out_dir = teacher.parent().unwrap();
    let metrics = read(&out_dir.join("metrics.csv"));
    assert!(metrics.starts_with(
        "iteration,dsm_loss,instruct_grad_norm,ikl_estimate,energy_distance,wall_seconds"
    ));
    assert!(metrics.lines().count() > 1);

    let resolved: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("config.json"))).unwrap();
    assert_eq!(resolved["seed"], 11);
    assert_eq!(resolved["train"]["iterations"], 80);
}

#[test]
fn distill_produces_a_loadable_generator() {
    let tmp = TempDir::new().unwrap();
    let teacher = train_small_teacher(tmp.path());
    let cfg = distill_config(tmp.path(), 50);
    let out_dir = tmp.path().join("distill");
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--teacher",
        teacher.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let g = load_generator(&out_dir.join("generator.json")).unwrap();
    assert_eq!(g.data_dim, 1);
    assert_eq!(g.latent_dim, 1);
    assert_eq!(g.net.layer_sizes, vec![1, 8, 1]);

    // The probe column is populated at logged iterations.
    let metrics = read(&out_dir.join("metrics.csv"));
    let first_row = metrics.lines().nth(1).unwrap();
    let energy_field = first_row.split(',').nth(4).unwrap();
    assert!(energy_field.parse::<f64>().unwrap().is_finite());
}

#[test]
fn same_seed_distill_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let teacher = train_small_teacher(tmp.path());
    let cfg = distill_config(tmp.path(), 50);

    let mut artifacts = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        let out = run(&[
            "distill",
            "--config",
            cfg.to_str().unwrap(),
            "--teacher",
            teacher.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_exit(&out, 0);
        artifacts.push((
            std::fs::read(out_dir.join("metrics.csv")).unwrap(),
            std::fs::read(out_dir.join("generator.json")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "metrics differ across runs");
    assert_eq!(artifacts[0].1, artifacts[1].1, "checkpoints differ across runs");
}

#[test]
fn refine_with_zero_iterations_round_trips_the_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let teacher = train_small_teacher(tmp.path());
    let cfg = distill_config(tmp.path(), 20);
    let first = tmp.path().join("first");
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--teacher",
        teacher.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let cfg0 = distill_config(tmp.path(), 0);
    let second = tmp.path().join("second");
    let out = run(&[
        "refine",
        "--config",
        cfg0.to_str().unwrap(),
        "--teacher",
        teacher.to_str().unwrap(),
        "--generator",
        first.join("generator.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(
        std::fs::read(first.join("generator.json")).unwrap(),
        std::fs::read(second.join("generator.json")).unwrap(),
        "a zero-iteration refine must republish the warm start untouched"
    );
}

#[test]
fn refine_rejects_a_hidden_shape_mismatch() {
    let tmp = TempDir::new().unwrap();
    let teacher = train_small_teacher(tmp.path());
    let cfg = distill_config(tmp.path(), 20);
    let first = tmp.path().join("first");
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--teacher",
        teacher.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    let bad_cfg = tmp.path().join("bad_cfg.json");
    write(
        &bad_cfg,
        r#"{
            "seed": 4,
            "schedule": {"kind": "ve", "t_min": 0.001, "t_max": 1.0},
            "generator": {"init": "fresh", "hidden": [32], "latent_dim": 1},
            "train": {"iterations": 10}
        }"#,
    );
    let out = run(&[
        "refine",
        "--config",
        bad_cfg.to_str().unwrap(),
        "--teacher",
        teacher.to_str().unwrap(),
        "--generator",
        first.join("generator.json").to_str().unwrap(),
        "--out",
        tmp.path().join("never").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    let err = stderr_of(&out);
    assert!(err.contains("shape mismatch"), "stderr: {err}");
    assert!(err.contains("[1, 32, 1]") && err.contains("[1, 8, 1]"), "stderr: {err}");
}

#[test]
fn config_with_unknown_keys_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write(&cfg, r#"{"seed": 1, "trian": {"iterations": 5}}"#);
    let out = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(stderr_of(&out).contains("config error"));
}

#[test]
fn missing_teacher_checkpoint_is_reported_with_its_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = distill_config(tmp.path(), 5);
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--teacher",
        tmp.path().join("absent.json").to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(stderr_of(&out).contains("absent.json"));
}

#[test]
fn truncated_checkpoint_exits_one() {
    let tmp = TempDir::new().unwrap();
    let broken = tmp.path().join("teacher.json");
    write(&broken, r#"{"role": "score", "data_dim": 1"#);
    let cfg = distill_config(tmp.path(), 5);
    let out = run(&[
        "distill",
        "--config",
        cfg.to_str().unwrap(),
        "--teacher",
        broken.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(stderr_of(&out).contains("teacher.json"));
}

#[test]
fn divergence_exits_two_but_still_saves_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write(
        &cfg,
        r#"{
            "seed": 2,
            "schedule": {"kind": "ve", "t_min": 0.001, "t_max": 1.0},
            "dataset": {"kind": "gaussian", "mean": [0.0], "var": [1.0]},
            "score_net": {"hidden": [16]},
            "train": {"iterations": 50, "batch_size": 32, "grad_abort": 1e-12}
        }"#,
    );
    let out_dir = tmp.path().join("t");
    let out = run(&[
        "train-teacher",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    assert!(stderr_of(&out).contains("numerical divergence"));
    assert!(out_dir.join("teacher.json").exists());
    assert!(out_dir.join("metrics.csv").exists());
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write(&cfg, r#"{"seed": 1}"#);
    let out_dir = tmp.path().join("o");
    let out = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_exit(&out, 0);
    let resolved: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("config.json"))).unwrap();
    assert_eq!(resolved["seed"], 99);
}

#[test]
fn sample_writes_header_and_requested_rows() {
    let tmp = TempDir::new().unwrap();
    let gen_path = tmp.path().join("g.json");
    save_toy_generator(&gen_path);
    let out_dir = tmp.path().join("s");
    let out = run(&[
        "sample",
        "--generator",
        gen_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--count",
        "17",
    ]);
    assert_exit(&out, 0);
    let csv = read(&out_dir.join("samples.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x0,x1");
    assert_eq!(lines.len(), 18);
}

#[test]
fn eval_prints_one_energy_distance_line() {
    let tmp = TempDir::new().unwrap();
    let gen_path = tmp.path().join("g.json");
    save_toy_generator(&gen_path);
    let data_path = tmp.path().join("data.json");
    write(&data_path, r#"{"kind": "gaussian_mixture_ring"}"#);
    let out = run(&[
        "eval",
        "--generator",
        gen_path.to_str().unwrap(),
        "--dataset",
        data_path.to_str().unwrap(),
        "--count",
        "128",
    ]);
    assert_exit(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().next().unwrap();
    let value: f64 = line.strip_prefix("energy_distance,").unwrap().parse().unwrap();
    assert!(value.is_finite() && value > 0.0);
}

#[test]
fn eval_rejects_a_dataset_of_the_wrong_dimension() {
    let tmp = TempDir::new().unwrap();
    let gen_path = tmp.path().join("g.json");
    save_toy_generator(&gen_path);
    let data_path = tmp.path().join("data.json");
    write(&data_path, r#"{"kind": "gaussian", "mean": [0.0], "var": [1.0]}"#);
    let out = run(&[
        "eval",
        "--generator",
        gen_path.to_str().unwrap(),
        "--dataset",
        data_path.to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(stderr_of(&out).contains("dimension mismatch"));
}

#[test]
fn plot_renders_svg_for_generator_and_dataset() {
    let tmp = TempDir::new().unwrap();
    let gen_path = tmp.path().join("g.json");
    save_toy_generator(&gen_path);
    let data_path = tmp.path().join("data.json");
    write(&data_path, r#"{"kind": "two_moons"}"#);
    let out_dir = tmp.path().join("plots");
    let out = run(&[
        "plot",
        "--generator",
        gen_path.to_str().unwrap(),
        "--dataset",
        data_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--count",
        "64",
    ]);
    assert_exit(&out, 0);
    for name in ["samples.svg", "data.svg"] {
        let svg = read(&out_dir.join(name));
        roxmltree::Document::parse(&svg).unwrap();
    }
}

#[test]
fn plot_without_any_input_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["plot", "--out", tmp.path().join("p").to_str().unwrap()]);
    assert_exit(&out, 1);
    assert!(stderr_of(&out).contains("--generator and/or --dataset"));
}
