use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
kappas = [1.0, 10.0, 100.0]
[sweep]
episodes = 200
repeats = 2
thresholds = 50
[ac]
episodes = 300
profile_points = 5
profile_episodes = 300
[q]
episodes = 500
jacobian_episodes = 100
[eval]
episodes = 1000
[diagnose]
replicas = 4
run_lengths = [200, 400]
"#;

fn qcd(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.join("config.toml");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qcd"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(out: &Path, sub: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("manifest_{sub}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn outputs(m: &Value) -> Vec<String> {
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn approx_rows(out: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(out.join("approx.csv")).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect()
}

#[test]
fn approx_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = qcd(&["approx"], "kappas = [1.0, 100.0]", out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = approx_rows(out);
    // kappa = 1: log kappa = 0
    assert_eq!(rows[0][1], 0.0);
    assert_eq!(rows[0][2], 0.0);
    // log(100) / upsilon_+ with rho_a = -log(1 - 0.02)
    assert!((rows[1][1] - 4.0340).abs() < 1e-3, "{}", rows[1][1]);
    assert!((rows[1][3] - 1.141577).abs() < 1e-6);

    for case in ["case2", "case3"] {
        let cfg = format!("kappas = [2.0, 10.0, 27.0, 100.0]\n[model]\ncase = \"{case}\"\n");
        let o = qcd(&["approx"], &cfg, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for row in approx_rows(out) {
            assert!(row[1..].iter().all(|v| v.is_finite() && *v > 0.0), "{case}: {row:?}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for sub in ["sweep", "train-ac", "profile-ac", "train-q", "eval-policy", "diagnose"] {
        let oa = qcd(&[sub, "--seed", "7"], SMALL, a.path());
        assert!(oa.status.success(), "{sub}: {}", String::from_utf8_lossy(&oa.stderr));
        // a different worker count must not change anything
        let ob = qcd(&[sub, "--seed", "7", "--workers", "1"], SMALL, b.path());
        assert!(ob.status.success(), "{sub}: {}", String::from_utf8_lossy(&ob.stderr));
        let (ma, mb) = (manifest(a.path(), sub), manifest(b.path(), sub));
        assert_eq!(ma["config_hash"], mb["config_hash"]);
        assert_eq!(ma["seed"], 7);
        let files = outputs(&ma);
        assert!(!files.is_empty());
        assert_eq!(files, outputs(&mb));
        for f in &files {
            let (x, y) = (
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
            );
            assert!(x == y, "{sub}: {f} differs between runs");
        }
    }
}

#[test]
fn manifest_lists_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = qcd(&["diagnose"], SMALL, out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(out, "diagnose");
    let listed = outputs(&m);
    let mut on_disk: Vec<String> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "config.toml" && !n.starts_with("manifest_"))
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    assert_eq!(m["subcommand"], "diagnose");
    assert!(m["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    for n in ["stability.json", "covariance_N200.json", "z_hist_N400_0.csv", "variances.csv"] {
        assert!(listed.iter().any(|f| f == n), "missing {n}");
    }
    let hist = std::fs::read_to_string(out.join("z_hist_N200_0.csv")).unwrap();
    assert!(hist.starts_with("left,count\n"));
}

#[test]
fn train_q_reports_policy_and_resets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = qcd(&["train-q"], SMALL, out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(out, "train-q");
    assert!(m["resets"].is_u64());
    let policy: Value = serde_json::from_str(&std::fs::read_to_string(out.join("policy.json")).unwrap()).unwrap();
    for key in ["theta", "h_theta", "is_threshold", "eigenvalues_re", "eigenvalues_im", "rhp_flag"] {
        assert!(policy.get(key).is_some(), "missing {key}");
    }
    assert_eq!(policy["theta"].as_array().unwrap().len(), 5);
    let trace = std::fs::read_to_string(out.join("q_trace.csv")).unwrap();
    assert!(trace.starts_with("episode,k,"));
    assert_eq!(trace.lines().count(), 501);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for bad in ["[q]\nbogus = 1", "kappa = -3", "[model]\nsigma = 0", "[model]\ncase = \"case9\"", "seed = \"x\""] {
        let o = qcd(&["approx"], bad, out);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_qcd"))
        .args(["approx", "--config", "/nonexistent/qcd.toml", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn paper_scale_changes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(qcd(&["approx"], "", out).status.success());
    let desk = manifest(out, "approx");
    assert!(qcd(&["approx", "--paper-scale"], "", out).status.success());
    let paper = manifest(out, "approx");
    assert_eq!(paper["paper_scale"], true);
    assert_ne!(desk["config_hash"], paper["config_hash"]);
}
