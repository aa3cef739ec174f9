use std::path::Path;
use std::process::{Command, Output};

fn cilab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cilab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_self_checks_pass() {
    let o = cilab(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn regime_gate_rejects_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (p, q) in [("2", "2"), ("4", "1.4"), ("0.5", "1.5"), ("1", "3")] {
        let o = cilab(&["run", "--p", p, "--q", q, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "p = {p}, q = {q}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("regime"));
    }
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "colour = red\n").unwrap();
    let o = cilab(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blocks_and_temporal_tables() {
    let o = cilab(&["blocks", "--mu", "8,16", "--grid", "128"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("part,r,m,mu,norm,fitted_slope,predicted_slope"));
    assert_eq!(text.lines().count(), 1 + 3 * 3 * 2 * 2);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = cilab(&[
        "temporal",
        "--kappa",
        "2,4",
        "--time-grid",
        "512",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

fn small_run(dir: &Path) -> Output {
    let cfg = dir.join("run.txt");
    std::fs::write(
        &cfg,
        "n_space = 32\nn_time = 32\nmu = 8\nkappa = 4\nsigma = 1\nscenario = wave\n",
    )
    .unwrap();
    cilab(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
        "--dump-fields",
    ])
}

#[test]
fn run_verify_step_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "config.txt",
        "ledger.csv",
        "summary.txt",
        "defect_norms.png",
        "defect_norms.ppm",
        "density_mid.png",
        "triple_1.cif",
        "triple_2.cif",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(stdout(&o).contains("endpoints_preserved: true"));

    let o = cilab(&["verify", "--run-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));

    let step_out = dir.path().join("step");
    let o = cilab(&[
        "step",
        "--input",
        out.join("triple_2.cif").to_str().unwrap(),
        "--grid",
        "32",
        "--sigma",
        "1",
        "--kappa",
        "4",
        "--out",
        step_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("identity_spatial_algebra"));
    assert!(step_out.join("ledger.csv").exists());

    let stem = dir.path().join("defects");
    let o = cilab(&[
        "plot",
        "--ledger",
        out.join("ledger.csv").to_str().unwrap(),
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(dir.path().join("defects.png").exists());
    let o = cilab(&[
        "plot",
        "--field",
        out.join("triple_2.cif").to_str().unwrap(),
        "--out",
        dir.path().join("rho").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(dir.path().join("rho.ppm").exists());
}
