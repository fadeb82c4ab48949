use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn beamlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamlab"))
        .args(["--out", dir.to_str().unwrap()])
        .args(args)
        .env("BEAMLAB_THREADS", "1")
        .output()
        .expect("spawn beamlab")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn free_decay_fit_has_fresnel_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = beamlab(dir.path(), &["decay", "--m", "0", "--kind", "cos", "--cutoff", "full", "--tmin", "10", "--tmax", "1000", "--points", "12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,supnorm");
    assert_eq!(lines.len(), 13);
    let fit = read_json(&dir.path().join("decay_fit.json"));
    let slope = fit["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() <= 0.02, "slope {slope}");
    assert!(fit["stderr"].is_number());
    assert_eq!(fit["window"].as_array().unwrap().len(), 2);
    assert_eq!(fit["config"]["potential"]["family"], "zero");
    assert_eq!(fit["settings"]["subgrid"], "fixed");
}

#[test]
fn decay_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["decay", "--m", "1", "--cutoff", "low", "--tmin", "10", "--tmax", "400", "--points", "9"];
    assert_eq!(beamlab(a.path(), &args).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_beamlab"))
        .args(["--out", b.path().to_str().unwrap()])
        .args(args)
        .env("BEAMLAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let ca = std::fs::read(a.path().join("decay.csv")).unwrap();
    let cb = std::fs::read(b.path().join("decay.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn classify_first_kind_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid":{"L":8,"n":256},"potential":{"family":"resonance_example","params":{"c":1,"d":1}},"cutoff":{"lambda0":0.5}}"#,
    );
    let out = beamlab(dir.path(), &["--config", &cfg, "classify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("classify.json"));
    assert_eq!(report["classification"], "FirstKind");
    assert_eq!(report["lambda0"], 0.5);
    assert_eq!(report["config"]["grid"]["n"], 256);
}

#[test]
fn spectrum_rows_match_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid":{"L":10,"n":64},"potential":{"family":"scaled_sech2","params":{"a":-0.3}}}"#);
    let out = beamlab(dir.path(), &["--config", &cfg, "spectrum"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue,participation_ratio,is_bound");
    assert_eq!(lines.len(), 65);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first.len(), 4);
    // mantissa with 16 decimals → 17 significant digits
    let mantissa = first[1].trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18);
}

#[test]
fn probe_and_vdc_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid":{"L":15,"n":128},"potential":{"family":"scaled_sech2","params":{"a":-0.3}}}"#);
    let out = beamlab(dir.path(), &["--config", &cfg, "probe", "--what", "minv", "--points", "9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = read_json(&dir.path().join("probe_minv_fit.json"));
    assert!(fit["fit"]["slope"].as_f64().unwrap().abs() < 0.3);

    let out = beamlab(dir.path(), &["vdc", "--t-list", "10,100", "--N-range", "-4:2", "--m", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("vdc.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "N,t,abs_kn,theta,ratio");
    assert_eq!(csv.lines().count(), 1 + 2 * 7);
}

#[test]
fn free_checks_and_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = beamlab(dir.path(), &["free", "--check", "taylor"]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&dir.path().join("free_taylor.json"));
    for case in r["results"].as_array().unwrap() {
        assert!(case["abs_err"].as_f64().unwrap() < 1e-10);
    }
    let out = beamlab(dir.path(), &["free", "--check", "fresnel", "--t-list", "1,5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&dir.path().join("free_fresnel.json"));
    assert!(r["results"][1]["max_rel_err"].as_f64().unwrap() < 1e-3);

    let cfg = write_config(dir.path(), r#"{"grid":{"L":10,"n":64},"potential":{"family":"zero"},"output":{"format":"json"}}"#);
    let out = beamlab(dir.path(), &["--config", &cfg, "spectrum"]);
    assert_eq!(out.status.code(), Some(0));
    let t = read_json(&dir.path().join("spectrum.json"));
    assert_eq!(t["rows"].as_array().unwrap().len(), 64);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = beamlab(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let cfg = write_config(dir.path(), r#"{"grid":{"L":10,"n":100},"potential":{"family":"zero"}}"#);
    assert_eq!(beamlab(dir.path(), &["--config", &cfg, "spectrum"]).status.code(), Some(2));

    // far too few quadrature nodes for a large phase → numerical failure with a reason
    let cfg = write_config(dir.path(), r#"{"grid":{"L":10,"n":64},"potential":{"family":"zero"},"quadrature":{"rel_tol":1e-10,"max_nodes":64}}"#);
    let out = beamlab(dir.path(), &["--config", &cfg, "vdc", "--t-list", "1000", "--N-range", "2:3"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["reason"], "quadrature_nonconvergence");

    let out = Command::new(env!("CARGO_BIN_EXE_beamlab"))
        .args(["--out", dir.path().to_str().unwrap(), "free", "--check", "taylor"])
        .env("BEAMLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
