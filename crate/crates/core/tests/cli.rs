//! End-to-end runs of the `flycap` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn flycap(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flycap"));
    cmd.args(args).env_remove("FLYCAP_SEED");
    if let Some(s) = seed {
        cmd.env("FLYCAP_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config("nominal.cfg");
    let o = flycap(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 20_002);
    assert!(csv.starts_with("t,S1,S2,S3,u1,u2,u3,I,Vc1,Vc2,"));
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("[sosml]") && metrics.contains("[luenberger]"));
    let gains = fs::read_to_string(out.join("gains_report.txt")).unwrap();
    assert!(gains.contains("FAIL (margin -105)"));
}

#[test]
fn single_observer_output_has_only_its_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.cfg", "sim.t_end = 1e-3\n");
    let out = dir.path().join("run");
    let o = flycap(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--observer",
            "sosml",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.contains("Ihat_sosml") && !header.contains("_luen"), "{header}");
}

#[test]
fn invalid_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "plant.E = 150\nplant.R = -1\n");
    let o = flycap(&["analyze-gains", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("plant.R") && err.contains("line 2"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "plant.Q = 1\n");
    let o = flycap(&["analyze-gains", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("plant.Q"));
}

#[test]
fn divergence_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "coarse.cfg", "sim.dt = 1e-3\nsim.t_end = 0.1\n");
    let out = dir.path().join("run");
    let o = flycap(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
}

#[test]
fn compare_prints_table_with_sliding_mode_ahead() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let cfg = config("noisy_loadstep.cfg");
    let o = flycap(
        &[
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let table = text(&o.stdout);
    let rmse = |name: &str| -> f64 {
        let line = table
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("{table}"));
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert!(rmse("sosml") < rmse("luenberger"), "{table}");
    assert!(out.join("timeseries.csv").exists());
}

#[test]
fn observability_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("nominal.cfg");
    let cfg = cfg.to_str().unwrap();
    let cases = [
        ("[1,0,0];[1,1,0]", 0, "verdict: PASS"),
        ("[0,0,0]", 1, "verdict: FAIL"),
        ("[1,1,1]", 1, "verdict: FAIL"),
    ];
    for (i, (list, code, needle)) in cases.into_iter().enumerate() {
        let modes = write(dir.path(), &format!("m{i}.txt"), list);
        let o = flycap(
            &[
                "check-observability",
                "--config",
                cfg,
                "--modes",
                modes.to_str().unwrap(),
            ],
            None,
        );
        assert_eq!(o.status.code(), Some(code), "{list}");
        let stdout = text(&o.stdout);
        assert!(stdout.contains(needle), "{stdout}");
        assert!(stdout.contains("rank(O)"));
    }
    let o = flycap(&["check-observability", "--config", cfg], None);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn malformed_mode_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let modes = write(dir.path(), "m.txt", "[1,0,0];[1,2,0]");
    let cfg = config("nominal.cfg");
    let o = flycap(
        &[
            "check-observability",
            "--config",
            cfg.to_str().unwrap(),
            "--modes",
            modes.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("line 1, column 12"), "{}", text(&o.stderr));
}

#[test]
fn seed_controls_noise_and_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "n.cfg",
        "noise.kind = uniform\nnoise.seed = 3\nsim.t_end = 2e-3\n",
    );
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let o = flycap(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            seed,
        );
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
        fs::read(out.join("timeseries.csv")).unwrap()
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some("3"));
    let d = run("d", Some("4"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);

    let out = dir.path().join("e");
    let o = flycap(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        Some("x"),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(flycap(&[], None).status.code(), Some(64));
    assert_eq!(flycap(&["simulate"], None).status.code(), Some(64));
    assert_eq!(flycap(&["--version"], None).status.code(), Some(0));
}
