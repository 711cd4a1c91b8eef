use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpdo(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpdo"))
        .args(args)
        .env("DPDO_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|c| *c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

const LEMMA1: &str = "mode = \"lemma1\"\noutput = \"l1.csv\"\n[grid]\nh_sweep = [1.0, 0.5, 0.25]\nk_max = 3\n";

const ROUNDTRIP: &str = "mode = \"roundtrip\"
seed = 5
output = \"rt.csv\"

[problem]
family = \"identity\"
s = -1.0
n = 1
b = [\"one\"]
g = [\"one\"]

[grid]
h = 1.0
nodes = 256
";

#[test]
fn lemma1_rows_stay_below_the_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "l1.toml", LEMMA1);
    let out = dpdo(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("l1.csv")).unwrap();
    assert!(csv.starts_with("# schema=lemma1-v1\nh,k,max_gap,max_bound,ratio\n"));
    let ratios = column(&csv, "ratio");
    assert_eq!(ratios.len(), 9);
    assert!(ratios.iter().all(|&r| r <= 1.0));
    let summary = std::fs::read_to_string(dir.path().join("l1.summary")).unwrap();
    assert!(summary.contains("gate.criterion3=pass"));
}

#[test]
fn identity_roundtrip_recovers_traces() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "rt.toml", ROUNDTRIP);
    let out = dpdo(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rt.csv")).unwrap();
    assert_eq!(column(&csv, "N"), vec![256.0]);
    assert!(column(&csv, "rel_error")[0] <= 1e-6);
}

#[test]
fn missing_n_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &ROUNDTRIP.replace("n = 1\n", ""));
    for cmd in ["run", "validate"] {
        let out = dpdo(&[cmd, &cfg], dir.path());
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("`n`"), "{err}");
        assert!(err.contains("bad.toml:"), "{err}");
    }
    assert!(!dir.path().join("rt.csv").exists());
}

#[test]
fn syntax_errors_carry_a_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "syntax.toml", "mode = \"lemma1\"\n[grid]\nh_sweep = [1.0, \n");
    let out = dpdo(&["validate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syntax.toml:"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "solve.toml", &ROUNDTRIP.replace("roundtrip", "solve").replace("256", "32"));
    let first = dir.path().join("first.csv");
    assert_eq!(dpdo(&["run", &cfg], dir.path()).status.code(), Some(0));
    std::fs::rename(dir.path().join("rt.csv"), &first).unwrap();
    assert_eq!(dpdo(&["run", &cfg], dir.path()).status.code(), Some(0));
    let a = std::fs::read(first).unwrap();
    let b = std::fs::read(dir.path().join("rt.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn schema_and_validate() {
    let dir = TempDir::new().unwrap();
    let out = dpdo(&["schema", "theorem4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema=theorem4-v1\n"));
    assert!(text.contains("norm:"));
    assert_eq!(dpdo(&["schema", "bogus"], dir.path()).status.code(), Some(2));

    let cfg = write_config(&dir, "l1.toml", LEMMA1);
    let out = dpdo(&["validate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("l1.csv").exists());
}

#[test]
fn hypothesis_violation_rejected_before_running() {
    let dir = TempDir::new().unwrap();
    let body = "mode = \"theorem4\"\n[problem]\nfamily = \"bessel\"\nindex = 3.0\ns = 2.25\nn = 1\n[grid]\nh_sweep = [1.0, 0.5, 0.25]\n";
    let cfg = write_config(&dir, "t4.toml", body);
    let out = dpdo(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.beta"));
}
