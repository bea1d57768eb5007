//! End-to-end tests of the command-line interface: output formats,
//! determinism, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inhomog-ssa"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("inhomog-ssa-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn simulate_dumps_trajectories() {
    let dir = tmpdir("simulate");
    let status = bin()
        .args([
            "simulate", "--model", "model1", "--T", "2", "--n", "2", "--method", "extrande",
            "--seed", "7",
        ])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let text = read(&dir.join("path-0.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time,M,P");
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,"), "{first}");
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("2,"), "horizon row missing: {last}");
    // times are nondecreasing and states integral
    let mut prev = -1.0f64;
    for line in text.lines().skip(1) {
        let mut cols = line.split(',');
        let t: f64 = cols.next().unwrap().parse().unwrap();
        assert!(t >= prev);
        prev = t;
        for c in cols {
            let v: i64 = c.parse().unwrap();
            assert!(v >= 0);
        }
    }
}

#[test]
fn sensitivity_report_is_deterministic_across_threads() {
    let dir = tmpdir("sens");
    let out1 = dir.join("report1.csv");
    let out2 = dir.join("report2.csv");
    for (threads, out) in [("1", &out1), ("2", &out2)] {
        let status = bin()
            .args([
                "sensitivity",
                "--model",
                "dimer",
                "--param",
                "amplitude",
                "--h",
                "0.1",
                "--coupling",
                "stacked",
                "--n",
                "60",
                "--species",
                "M",
                "--seed",
                "3",
                "--threads",
                threads,
            ])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = read(&out1);
    let b = read(&out2);
    assert_eq!(a, b, "worker count changed the report");
    assert!(a.starts_with("quantity,estimate,variance,half_width,n,rv_count,wall_seconds"));
    // default runs leave the timing column empty
    assert!(a.lines().nth(1).unwrap().ends_with(','), "{a}");
}

#[test]
fn rerun_with_same_config_is_byte_identical() {
    let dir = tmpdir("rerun");
    let config = dir.join("exp.toml");
    std::fs::write(
        &config,
        r#"
[experiment]
model = "mmp"
seed = 99

[mlmc]
refinement = 4
coarsest-step = 0.125
levels = 2
target-sd = 2.0
species = "S1"
"#,
    )
    .unwrap();
    let run = |out: &Path| {
        let status = bin()
            .arg("mlmc")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    run(&out1);
    run(&out2);
    assert_eq!(read(&out1), read(&out2));
    let text = read(&out1);
    assert!(text.contains("combined,"), "{text}");
    assert!(text.contains("tau0,"), "{text}");
    assert!(text.contains("corrector,"), "{text}");
}

#[test]
fn couple_emits_pair_grids_and_variance_curve() {
    let dir = tmpdir("couple");
    let status = bin()
        .args([
            "couple",
            "--model",
            "model1",
            "--perturb",
            "birth=1.0",
            "--coupling",
            "stacked",
            "--n",
            "20",
            "--species",
            "M",
            "--grid-points",
            "5",
            "--dump-pairs",
            "2",
            "--seed",
            "1",
        ])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let pair = read(&dir.join("pair-0.csv"));
    assert!(pair.starts_with("time,X_M,X_P,Z_M,Z_P"), "{pair}");
    assert_eq!(pair.lines().count(), 6);
    let var = read(&dir.join("variance.csv"));
    assert!(var.starts_with("time,mean,variance,half_width,n"));
    assert_eq!(var.lines().count(), 6);
    let last = var.lines().last().unwrap();
    let n: u64 = last.split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(n, 20);
}

#[test]
fn config_errors_exit_2() {
    // unknown model
    let status = bin()
        .args(["simulate", "--model", "nonexistent-model-file.toml", "--n", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // bad config file
    let dir = tmpdir("badcfg");
    let config = dir.join("bad.toml");
    std::fs::write(&config, "[experiment]\nmodel = 17\n").unwrap();
    let status = bin()
        .arg("sensitivity")
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // unknown species
    let status = bin()
        .args([
            "sensitivity", "--model", "dimer", "--param", "amplitude", "--h", "0.1", "--n", "5",
            "--species", "Q",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // unknown parameter
    let status = bin()
        .args([
            "sensitivity", "--model", "dimer", "--param", "zeta", "--h", "0.1", "--n", "5",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn model_file_roundtrip_through_cli() {
    let dir = tmpdir("modelfile");
    let model = dir.join("bd.toml");
    std::fs::write(
        &model,
        r#"
[model]
species = ["X"]
horizon = 3.0
initial = [0]

[parameters]
birth = 5.0

[[channel]]
products = { X = 1 }
rate = "$birth"

[[channel]]
reactants = { X = 1 }
rate = 1.0
"#,
    )
    .unwrap();
    let out = dir.join("traj");
    let status = bin()
        .arg("simulate")
        .arg("--model")
        .arg(&model)
        .args(["--n", "1", "--seed", "5"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(read(&out.join("path-0.csv")).starts_with("time,X"));

    // perturbable parameter through the sensitivity driver
    let status = bin()
        .arg("sensitivity")
        .arg("--model")
        .arg(&model)
        .args(["--param", "birth", "--h", "0.2", "--n", "30", "--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn model_file_with_environment() {
    let dir = tmpdir("envmodel");
    let model = dir.join("mod.toml");
    std::fs::write(
        &model,
        r#"
[model]
species = ["A", "B"]
horizon = 2.0
initial = [500, 0]

[environment]
states = [1.0, 3.0]
initial = 1.0
transitions = [[0.0, 1.0], [1.0, 0.0]]

[[channel]]
reactants = { A = 1 }
products = { B = 1 }
rate = { kind = "modulated", scale = 0.01 }
"#,
    )
    .unwrap();
    let out = dir.join("traj");
    let status = bin()
        .arg("simulate")
        .arg("--model")
        .arg(&model)
        .args(["--n", "1", "--seed", "2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = read(&out.join("path-0.csv"));
    assert!(text.lines().count() > 3, "modulated channel never fired: {text}");
}
