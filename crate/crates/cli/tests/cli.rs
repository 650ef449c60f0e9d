use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[design]\nmode = single\nbeta = 1\n[indices]\nn1 = 1\nn2 = 1.5\n\
[source]\nbounds = 0 1 0 1\nresolution = 6 6\n[target]\nbounds = 0 1 0 1\nresolution = 6 6\n\
[verify]\nray_count = 5000\n";

// Steep first surface just below the target plane: the twist bound fails.
const STEEP: &str = "[design]\nmode = single\nbeta = 1.1\n[indices]\nn1 = 1\nn2 = 1.5\n\
[source]\nbounds = 0 1 0 1\nresolution = 6 6\n[target]\nbounds = 0 1 0 1\nresolution = 6 6\n\
[surface_f]\nshape = affine -1 2 0\n";

fn metalens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metalens")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn design_then_verify_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    let out = dir.path().join("design");
    let out = out.to_str().unwrap();
    let design = metalens(&["design-single", "--config", &cfg, "--out", out, "--dump-plan"]);
    assert_eq!(design.status.code(), Some(0), "{}", String::from_utf8_lossy(&design.stderr));
    for name in ["phase_s1.csv", "phase_s1_grad.csv", "potentials.csv", "plan.csv", "manifest.txt", "report.txt"] {
        assert!(Path::new(out).join(name).exists(), "{name}");
    }
    let verify = metalens(&["verify", "--out", out, "--seed", "7"]);
    assert_eq!(verify.status.code(), Some(0), "{}", String::from_utf8_lossy(&verify.stderr));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("verdict=PASS"));
}

#[test]
fn mode_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    let out = dir.path().join("design");
    let run = metalens(&["design-double", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.join("manifest.txt").exists());
}

#[test]
fn inconclusive_conditions_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "steep.conf", STEEP);
    let check = metalens(&["check-conditions", "--config", &cfg]);
    assert_eq!(check.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&check.stdout).contains("overall            inconclusive"));
    let out = dir.path().join("design");
    let design = metalens(&["design-single", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(design.status.code(), Some(2));
}

#[test]
fn missing_config_exits_one() {
    let run = metalens(&["check-conditions", "--config", "/nonexistent/design.conf"]);
    assert_eq!(run.status.code(), Some(1));
}
