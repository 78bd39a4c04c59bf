use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn twin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twin")).args(args).output().unwrap()
}

fn lucas(file: &str) -> String {
    root().join("data/lucas").join(file).display().to_string()
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.toml");
    let o = twin(&["discover", "--data", "/nonexistent.csv", "--schema", &lucas("schema.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn unknown_pipeline_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(&cfg, "name = \"x\"\nout_dir = \"o\"\nstages = [\"discover\"]\nbogus = 1\n").unwrap();
    let o = twin(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn rejected_twin_exits_with_gate_code_and_keeps_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let ok = |o: Output| assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    ok(twin(&["discover", "--data", &lucas("lucas0.csv"), "--schema", &lucas("schema.toml"), "--out", &p("g.toml")]));
    // Unit pre-link noise on the discovered graph: too sharp, RMSEA fails.
    ok(twin(&["fit", "--data", &lucas("lucas0.csv"), "--schema", &lucas("schema.toml"), "--graph", &p("g.toml"), "--out", &p("scm.json")]));
    ok(twin(&["train", "--data", &lucas("lucas0.csv"), "--schema", &lucas("schema.toml"), "--target", "Lung_Cancer", "--kind", "gbt", "--out", &p("m.json")]));
    let o = twin(&[
        "validate", "--data", &lucas("lucas0.csv"), "--schema", &lucas("schema.toml"), "--scm", &p("scm.json"), "--model", &p("m.json"),
        "--target", "Lung_Cancer", "--nmc", "20000", "--out", &p("v.csv"),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(p("v.csv")).unwrap();
    assert!(report.contains("global,rmsea,"));
    assert!(Path::new(&p("v.csv.manifest.json")).exists());
}

#[test]
fn plot_names_the_empty_metric() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("c.csv");
    std::fs::write(&curve, "sample_index,step,delta,y_true,y_pred,score,precision,recall\n0,0,0,1,1,0.9,0.5,\n").unwrap();
    let out = dir.path().join("p.csv");
    let o = twin(&["plot", "--curve", curve.to_str().unwrap(), "--metrics", "precision,recall", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("recall"));
    assert!(!out.exists());
}
