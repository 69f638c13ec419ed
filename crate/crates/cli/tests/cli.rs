use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EVOLVE: &str = r#"
name = "tiny"
experiment = "evolve"
[grid]
npoints = [32]
lo = [0.0]
hi = [1.0]
[state]
kind = "box-modes"
quanta = [1, 2]
[dynamics]
snapshots = [0.5]
"#;

fn pilotwave(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pilotwave"));
    cmd.args(args).env_remove("PILOTWAVE_OUT");
    if let Some(root) = env_out {
        cmd.env("PILOTWAVE_OUT", root);
    }
    cmd.output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn catalog_lists_the_canned_scenarios() {
    let out = pilotwave(&["catalog"], None);
    assert!(out.status.success());
    let listing = text(&out.stdout);
    for name in ["evolve", "relax", "born-branches", "double-slit", "occupancy", "subquantum-track"] {
        assert!(listing.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert_eq!(listing.lines().count(), 13);
}

#[test]
fn validate_reports_misspelled_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, EVOLVE).unwrap();
    let out = pilotwave(&["validate", good.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("tiny"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, EVOLVE.replace("snapshots", "snapshotz")).unwrap();
    let out = pilotwave(&["validate", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("dynamics.snapshotz"));
}

#[test]
fn run_writes_outputs_where_asked() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.toml");
    fs::write(&file, EVOLVE).unwrap();
    let out_dir = dir.path().join("flag");
    let root = dir.path().join("env");

    let out = pilotwave(&["run", file.to_str().unwrap(), "--quiet", "--seed", "9"], Some(&root));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("tiny").join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["passed"], true);
    assert!(root.join("tiny").join("snapshot_000.pwf").exists());

    let out = pilotwave(
        &["run", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--workers", "2"],
        Some(&root),
    );
    assert!(out.status.success());
    assert!(out_dir.join("norms.csv").exists());
    assert!(text(&out.stdout).contains("PASS norm-drift"));
}

#[test]
fn canned_names_run_directly() {
    let dir = tempfile::tempdir().unwrap();
    let out = pilotwave(&["run", "evolve", "--quiet", "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn failed_assertions_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("eq.toml");
    let scenario = r#"
name = "thin-ensemble"
experiment = "relax"
[grid]
npoints = [64]
lo = [0.0]
hi = [3.141592653589793]
[state]
kind = "box-modes"
quanta = [1, 2]
[dynamics]
t_final = 0.5
checkpoints = 2
[ensemble]
n = 40
cells = [32]
preparation = "equilibrium"
"#;
    fs::write(&file, scenario).unwrap();
    let out = pilotwave(&["run", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("FAIL equivariance-tv"));
}

#[test]
fn missing_files_are_errors() {
    let out = pilotwave(&["run", "/nonexistent/scenario.toml"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("no such file"));
}
