use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn airfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airfl")).args(args).env("RUST_LOG", "off").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const QUICK: &str = "seed = 3\ntrials = 2\n[scenario]\nnr = 2\nm = 3\n[solver.ao]\nt0_max = 2\n";

#[test]
fn check_prints_linear_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = airfl(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gamma_min    = 0.189207"), "{text}");
    assert!(text.contains("p_gap_w      = 1e-2"), "{text}");
    assert!(text.contains("sigma2_w     = 1e-11"), "{text}");
}

#[test]
fn config_problems_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[scenario]\nk = 0\n");
    assert_eq!(airfl(&["check", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(airfl(&["check", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let ok = write_config(dir.path(), QUICK);
    let out = dir.path().join("o.csv");
    let args = |values: &str| {
        airfl(&[
            "sweep",
            "--config",
            ok.to_str().unwrap(),
            "--axis",
            "Nr",
            "--values",
            values,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert_eq!(args("").status.code(), Some(1));
    assert_eq!(args("2.5").status.code(), Some(1));
    assert_eq!(airfl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(airfl(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = dir.path().join("no/such/dir/out.csv");
    let res = airfl(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn sweep_writes_deterministic_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = airfl(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--axis",
            "Nr",
            "--values",
            "2,4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0));
        fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let mut lines = a.lines();
    assert!(lines.next().unwrap().starts_with("sweep_axis,sweep_value,irs_enabled,trial,seed,K,Nr,M,final_mse"));
    assert_eq!(lines.count(), 2 * 2 * 2);
}

#[test]
fn simulate_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let run = |seed: &str| {
        let out = dir.path().join(format!("s{seed}.csv"));
        let res = airfl(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
        fs::read_to_string(out).unwrap()
    };
    let a = run("10");
    assert_eq!(a.lines().count(), 3);
    assert_ne!(a, run("11"));
}

#[test]
fn oracle_writes_rows_and_enforces_caps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "trials = 2\n[scenario]\nk = 2\nnr = 2\nm = 2\n");
    let out = dir.path().join("o.csv");
    let res = airfl(&["oracle", "--kind", "mse_mc", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("kind,trial,seed,metric,solver_value,oracle_value,gap,pass"));

    let big = write_config(dir.path(), "trials = 2\n[scenario]\nm = 8\n");
    let res = airfl(&["oracle", "--kind", "grid_phase", "--config", big.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let res = airfl(&["oracle", "--kind", "nope", "--config", big.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}
