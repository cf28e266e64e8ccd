use std::path::Path;
use std::process::{Command, Output};

use helson_core::forge::ChiAssignment;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_helson");
const ZERO_SPEC: &str = r#"[{"re": 0.5, "im": 0.0, "order": 1}]"#;

fn helson(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("HELSON_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn forged(spec: &str, out: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("zeros.json"), spec).unwrap();
    let o = helson(
        tmp.path(),
        &["forge", "--spec", "zeros.json", "--theta", "0.5833333333333334", "--xmax", "2e5", "--out", out],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    tmp
}

#[test]
fn forge_writes_all_artifacts() {
    let tmp = forged(ZERO_SPEC, "run");
    for f in ["chi.txt", "ledger.json", "report.json", "spec.json", "run.cfg", "manifest.json"] {
        assert!(tmp.path().join("run").join(f).is_file(), "{f}");
    }
    let text = std::fs::read_to_string(tmp.path().join("run/chi.txt")).unwrap();
    assert!(text.starts_with("helson-chi v1 theta=0.58333333333333337 xmax=200000 spec="));
    let chi = ChiAssignment::parse(&text).unwrap();
    assert_eq!(chi.to_text(), text);
    let manifest = std::fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap();
    assert!(manifest.contains(chi.config_hash.as_deref().unwrap()));
}

#[test]
fn missing_spec_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let o = helson(tmp.path(), &["forge", "--spec", "absent.json", "--xmax", "1e5"]);
    assert_eq!(code(&o), 2);
    let o = helson(tmp.path(), &["forge", "--xmax", "1e5"]);
    assert_eq!(code(&o), 2);
    std::fs::write(tmp.path().join("bad.json"), r#"[{"re": 1.5, "im": 0, "order": 1}]"#).unwrap();
    let o = helson(tmp.path(), &["forge", "--spec", "bad.json", "--xmax", "1e5"]);
    assert_eq!(code(&o), 2);
    std::fs::write(tmp.path().join("z.json"), "[]").unwrap();
    let o = helson(tmp.path(), &["forge", "--spec", "z.json", "--xmax", "1e5", "--eps", "0.4"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = forged(ZERO_SPEC, "a");
    let o = helson(
        tmp.path(),
        &["forge", "--spec", "zeros.json", "--theta", "0.5833333333333334", "--xmax", "2e5", "--out", "b"],
    );
    assert_eq!(code(&o), 0);
    for f in ["chi.txt", "ledger.json", "report.json", "run.cfg"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn config_file_drives_forge() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("zeros.json"), "[]").unwrap();
    std::fs::write(
        tmp.path().join("run.cfg"),
        "# demo\ntheta = 0.5833333333333334\nx_max = 1e5\nspec = zeros.json\nout = cfgrun\nseed = 3\n",
    )
    .unwrap();
    let o = helson(tmp.path(), &["forge", "--config", "run.cfg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stored = std::fs::read_to_string(tmp.path().join("cfgrun/run.cfg")).unwrap();
    assert!(stored.contains("seed = 3"));
    assert!(stored.contains("x_max = 100000"));
}

#[test]
fn verify_passes_and_reports_growth() {
    let tmp = forged("[]", "run");
    let o = helson(tmp.path(), &["verify", "run", "--json", "verify.json"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("files   unchanged"));
    assert!(text.contains("(match)"));
    assert!(text.contains("stage 1"));
    assert!(text.trim_end().ends_with("PASS"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["constants"].as_array().unwrap().len(), 3);
    assert!(json["stages"][0]["max_ratio"].as_array().unwrap().len() == 3);
}

#[test]
fn verify_detects_a_tampered_angle() {
    let tmp = forged(ZERO_SPEC, "run");
    let path = tmp.path().join("run/chi.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let i = lines.len() / 2;
    let (p, _) = lines[i].split_once(',').unwrap();
    lines[i] = format!("{p},1.25");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = helson(tmp.path(), &["verify", "run"]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text.contains("CHANGED: chi.txt"), "{text}");
    assert!(text.contains("MISMATCH"), "{text}");
}

#[test]
fn verify_detects_a_config_mismatch() {
    let tmp = forged(ZERO_SPEC, "run");
    let path = tmp.path().join("run/run.cfg");
    let text = std::fs::read_to_string(&path).unwrap().replace("seed = 0", "seed = 1");
    std::fs::write(&path, text).unwrap();
    let o = helson(tmp.path(), &["verify", "run"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config digest"));
}

#[test]
fn eval_grid_and_empty_points() {
    let tmp = forged(ZERO_SPEC, "run");
    std::fs::write(tmp.path().join("none.txt"), "# nothing\n").unwrap();
    let o = helson(tmp.path(), &["eval", "run", "--points", "none.txt"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "re,im,j,X,value_re,value_im,abs,tail_bound,converged\n");

    let o = helson(tmp.path(), &["eval", "run", "--grid", "-0.25,2,-5,5,10,11", "-j", "3", "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 110);
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        let re: f64 = f[0].parse().unwrap();
        let im: f64 = f[1].parse().unwrap();
        let at_zero = re == 0.5 && im == 0.0;
        assert_eq!(f[8] == "true", re > -0.25 && !at_zero, "{row}");
        if f[8] == "true" {
            assert!(f[6].parse::<f64>().unwrap().is_finite(), "{row}");
        }
    }

    std::fs::write(tmp.path().join("pts.txt"), "2,0\n1.5 3\n").unwrap();
    let o = helson(tmp.path(), &["eval", "run", "--points", "pts.txt", "-j", "2", "--out", "vals.csv"]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(tmp.path().join("vals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = helson(tmp.path(), &["eval", "run", "--points", "pts.txt", "-j", "7"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn probe_table_recovers_orders() {
    let tmp = forged(ZERO_SPEC, "run");
    let o = helson(tmp.path(), &["probe", "run", "--at", "0.5,1.0", "--at", "-0.1,2", "--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][2], "1");
    assert_eq!(rows[0][5], "1");
    for r in &rows[1..] {
        assert_eq!(r[5], "0");
        assert_eq!(r[6], "true");
    }
    let o = helson(tmp.path(), &["probe", "run", "--at", "0.52,0", "--radius", "0.05"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn audit_primes_writes_a_table() {
    let tmp = TempDir::new().unwrap();
    let o = helson(tmp.path(), &["audit-primes", "--xmax", "1e5", "--out", "audit.csv"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("intervals"));
    let csv = std::fs::read_to_string(tmp.path().join("audit.csv")).unwrap();
    assert!(csv.starts_with("k,x_k,count,ratio\n"));
    assert!(csv.lines().count() > 100);
}

#[test]
fn thread_override_is_validated() {
    let tmp = forged("[]", "run");
    let o = Command::new(BIN)
        .args(["eval", "run", "--grid", "1.5,2,0,1,2,2"])
        .current_dir(tmp.path())
        .env("HELSON_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(BIN)
        .args(["eval", "run", "--grid", "1.5,2,0,1,2,2"])
        .current_dir(tmp.path())
        .env("HELSON_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
