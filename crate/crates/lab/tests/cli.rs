use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dirichlet-lab");

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).env("DIRICHLET_LAB_OUT", out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn bm_qv_exits_zero_with_bracket_near_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["run", "bm_qv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("bm_qv");
    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("[consistent] qv"), "{report}");
    let qv = std::fs::read_to_string(dir.join("00_qv.csv")).unwrap();
    let row: Vec<f64> = qv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[1] - 1.0).abs() < 0.02, "{qv}");
    for f in ["manifest.json", "paths.csv", "paths.svg", "01_weak_qv.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn wrong_drift_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["run", "wrong_drift"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("wrong_drift/00_martingale.csv")).unwrap();
    assert!(csv.starts_with("v_id,g_id,s,t,stat,se,z,reject"));
    assert!(csv.lines().last().unwrap().starts_with("# "));
}

#[test]
fn negative_rate_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let text = dirichlet_lab::catalog::bundled("poisson_qv").unwrap().replace("\"rate\": 2.0", "\"rate\": -2.0");
    let cfg = write_config(tmp.path(), "neg.json", &text);
    for cmd in ["run", "validate"] {
        let o = lab(&[cmd, &cfg], tmp.path());
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("generator.rate"), "{}", stderr(&o));
    }
}

#[test]
fn schema_errors_carry_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", "{\n  \"schema_version\": 1,\n  \"idd\": 3\n}\n");
    let o = lab(&["validate", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_and_lookup_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(lab(&["run", "no_such_experiment"], tmp.path()).status.code(), Some(1));
}

#[test]
fn list_is_complete_and_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = lab(&["list"], tmp.path());
    let b = lab(&["list"], tmp.path());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let ids: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(
        ids,
        [
            "bm_qv",
            "convolution_qv",
            "poisson_qv",
            "chainrule_c01",
            "char_htransform",
            "pdmp_generator",
            "distdrift_sigma",
            "wrong_drift"
        ]
    );
    assert!(text.lines().all(|l| l.split('\t').count() == 3));
    for id in ids {
        assert_eq!(lab(&["validate", id], tmp.path()).status.code(), Some(0), "{id}");
    }
}
