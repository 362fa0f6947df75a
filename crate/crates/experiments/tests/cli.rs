use std::path::Path;
use std::process::{Command, Output};

const FREE: &str = r#"
scenario = "free_calibration"
[grid]
dim = 1
n = 256
length = 40.0
[[initial.terms]]
profile = "gaussian"
amplitude = [1.0, 0.0]
center = [0.0]
width = 1.0
[solver]
dt = 0.01
t_end = 2.0
snapshot_spacing = 0.25
[diagnostics]
derivative_check = true
"#;

/// The moving component sits where the test function lives, so at τ = 100
/// the main term is still far from its limit.
const SLOW: &str = r#"
scenario = "nls_longrange"
[grid]
dim = 1
n = 4096
length = 1600.0
[nonlinearity]
kind = "power"
p = 0.5
mu = [1.0, 0.0]
[[v_plus.terms]]
profile = "gaussian"
amplitude = [1.0, 0.0]
center = [0.0]
width = 1.0
[[localized.components]]
profile = "gaussian"
amplitude = [0.5, 0.0]
width = 1.0
path = [[0.0], [1.0]]
"#;

fn nlsdiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlsdiag")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn free_calibration_passes_and_writes_outputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "free.toml", FREE);
    let out = root.path().join("run");
    let o = nlsdiag(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "series.csv", "summary.json", "timing.json", "derivative.csv", "snap_00000.nlsf"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS pairing_constant") && !stdout.contains("FAIL"));
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "free.toml", FREE);
    let a = root.path().join("a");
    let b = root.path().join("b");
    assert!(nlsdiag(&["run", "--config", &cfg, "--out-dir", a.to_str().unwrap(), "--deterministic"]).status.success());
    assert!(nlsdiag(&["run", "--config", &cfg, "--out-dir", b.to_str().unwrap(), "--max-threads", "3"]).status.success());
    for f in ["series.csv", "derivative.csv", "summary.json", "config.toml", "snap_00008.nlsf"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn failing_invariant_exits_one_and_bad_config_exits_two() {
    let root = tempfile::tempdir().unwrap();
    let slow = write(root.path(), "slow.toml", SLOW);
    let out = root.path().join("slow");
    let o = nlsdiag(&["run", "--config", &slow, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL main_term_limit"));

    let bad = write(root.path(), "bad.toml", &FREE.replace("n = 256", "n = 250"));
    let o = nlsdiag(&["run", "--config", &bad, "--out-dir", root.path().join("bad").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.n"));

    let o = nlsdiag(&["run", "--config", &slow, "--scenario", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scenario_and_seed_overrides_are_echoed() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "free.toml", FREE);
    let out = root.path().join("run");
    let o = nlsdiag(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--seed", "42"]);
    assert!(o.status.success());
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 42"), "{echo}");
}

#[test]
fn report_is_sorted_and_idempotent() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "free.toml", FREE);
    let slow = write(root.path(), "slow.toml", SLOW);
    let a = root.path().join("a");
    let b = root.path().join("b");
    nlsdiag(&["run", "--config", &slow, "--out-dir", a.to_str().unwrap()]);
    nlsdiag(&["run", "--config", &cfg, "--out-dir", b.to_str().unwrap()]);
    let r1 = root.path().join("r1.md");
    let r2 = root.path().join("r2.md");
    assert!(nlsdiag(&["report", "--out", r1.to_str().unwrap(), a.to_str().unwrap(), b.to_str().unwrap()]).status.success());
    assert!(nlsdiag(&["report", "--out", r2.to_str().unwrap(), b.to_str().unwrap(), a.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&r1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&r2).unwrap());
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert!(rows[0].starts_with("| free_calibration |"));
    assert!(rows[1].starts_with("| nls_longrange | 0.5 | 1 | t^0.750 |"));
    assert!(rows[1].ends_with("| 2/3 |"));
}
