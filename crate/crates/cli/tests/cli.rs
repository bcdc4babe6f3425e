use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trustlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustlab"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("spawn trustlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_metadata(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed="));
    assert!(lines.next().unwrap().starts_with("# config_digest="));
    assert!(lines.next().unwrap().starts_with("# artifact_version="));
}

#[test]
fn cost_point_prints_counts_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustlab(&["cost", "C", "F", "--n-honest", "15", "--services", "10"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("C,5,0,10,0,10,10,"), "{out}");
    assert!(out.lines().skip(1).all(|l| l.ends_with("confirmed")), "{out}");
}

#[test]
fn cost_grid_writes_one_file_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustlab(&["cost"], dir.path());
    assert!(o.status.success());
    for m in ["A", "B", "C", "D", "E", "F"] {
        assert_metadata(&dir.path().join(format!("cost_{m}.csv")));
    }
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[small]\ntransactions = 60\nmodel = \"B\"\n[camo]\ntransactions = 60\nmodel = \"C\"\n").unwrap();
    let o = trustlab(&["simulate", cfg.to_str().unwrap(), "--seeds", "2", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "trajectories.csv", "services.csv"] {
        assert_metadata(&dir.path().join(f));
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
    assert!(summary.contains(",7,") && summary.contains(",8,"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "colour = 3\n").unwrap();
    let o = trustlab(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `colour`"));
}

#[test]
fn presets_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["preset", "trajectories", "--set", "transactions=90", "--seed", "3"];
    assert!(trustlab(&args, a.path()).status.success());
    assert!(trustlab(&args, b.path()).status.success());
    let read = |d: &Path| fs::read_to_string(d.join("trajectories.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustlab(&["preset", "figure-9"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown preset"));
}

#[test]
fn similarity_writes_matrix_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustlab(
        &["similarity", "--eta", "0.3", "--eta", "0.9", "--n-regular", "20", "--n-malicious", "5"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_metadata(&dir.path().join("similarity_eta0.3.csv"));
    let summary = fs::read_to_string(dir.path().join("similarity_summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn verify_confirms_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = trustlab(&["verify", "--sequential"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("324 of 324 grid points confirmed"));
}
