use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FELLER_SUPER: &str = "[mechanism]\nalpha = 1.0\nbeta = 1.0\n";
const FELLER_SUB: &str = "[mechanism]\nalpha = -1.0\nbeta = 1.0\n";

fn csbp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csbp")).current_dir(dir).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The run directory printed on the last line of stdout, relative to `cwd`.
fn run_dir(cwd: &Path, o: &Output) -> PathBuf {
    let s = stdout(o);
    let line = s.lines().last().unwrap();
    cwd.join(line.strip_prefix("run directory: ").unwrap())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn mech_classifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (FELLER_SUPER.to_string(), "Supercritical, λ* = 1.0, Grey: true"),
        (FELLER_SUB.to_string(), "Subcritical, Grey: true"),
        ("[mechanism]\nalpha = -1.0\nbeta = 0.0\n[mechanism.levy]\nfamily = \"atoms\"\natoms = [[1.0, 1.0]]\n".to_string(), "Subcritical, Grey: false"),
    ];
    for (cfg, expect) in cases {
        let p = write_config(tmp.path(), &cfg);
        let o = csbp(tmp.path(), &["mech", "--config", p.to_str().unwrap()]);
        assert!(o.status.success(), "{o:?}");
        assert_eq!(stdout(&o).lines().next().unwrap(), expect);
        let dir = run_dir(tmp.path(), &o);
        let psi = fs::read_to_string(dir.join("psi.csv")).unwrap();
        assert!(psi.starts_with("theta,psi,psi_prime\n0.0,0.0,"));
        assert!(dir.join("config.resolved").exists() && dir.join("run.json").exists());
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = [
        format!("{FELLER_SUPER}typo = 1\n"),
        format!("{FELLER_SUPER}[experiment]\nkind = \"lambda_skeleton\"\n"),
        format!("{FELLER_SUB}[experiment]\nkind = \"T_skeleton\"\nT = 1.0\nt = 1.0\n"),
        format!("{FELLER_SUPER}[experiment]\nkind = \"spine\"\n"),
    ];
    for text in &bad {
        let p = write_config(tmp.path(), text);
        let o = csbp(tmp.path(), &["simulate", "--config", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}: {o:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    }
    let o = csbp(tmp.path(), &["mech"]);
    assert_eq!(o.status.code(), Some(2));
    let o = csbp(tmp.path(), &["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let o = csbp(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let p = write_config(tmp.path(), &format!("{FELLER_SUPER}[experiment]\nT_list = [2.0, 4.0]\n"));
    let o = csbp(tmp.path(), &["sweep", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_csbp_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &format!("{FELLER_SUPER}[experiment]\nkind = \"csbp\"\nN = 10000\ndt = 0.001\n"));
    let o = csbp(tmp.path(), &["simulate", "--config", p.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{o:?}");
    assert!(o.stdout.is_empty());
    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let s = json(&runs[0].join("summary.json"));
    let (mean, se) = (s["mean_X_t"]["mean"].as_f64().unwrap(), s["mean_X_t"]["se"].as_f64().unwrap());
    let e = std::f64::consts::E;
    assert!((mean - e).abs() < 4.0 * se + 1e-3 * e, "{mean} ± {se}");
    assert_eq!(s["oracle_mean_X_t"].as_f64().unwrap(), e);
}

#[test]
fn rerun_from_resolved_config_is_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &format!("{FELLER_SUB}[experiment]\nkind = \"T_skeleton\"\nT = 2.0\nN = 500\ndt = 0.01\n"));
    let a = csbp(tmp.path(), &["simulate", "--config", p.to_str().unwrap(), "--seed", "17", "--paths"]);
    assert!(a.status.success(), "{a:?}");
    let first = run_dir(tmp.path(), &a);
    let resolved = first.join("config.resolved");
    let text = fs::read_to_string(&resolved).unwrap();
    assert!(text.contains("seed = 17") && text.contains("emit_paths = true") && text.contains("[experiment.init]"), "{text}");
    let b = csbp(tmp.path(), &["simulate", "--config", resolved.to_str().unwrap()]);
    assert!(b.status.success(), "{b:?}");
    let second = run_dir(tmp.path(), &b);
    assert_ne!(first, second);
    for f in ["summary.json", "paths.csv", "events.csv", "config.resolved"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let rec = json(&second.join("run.json"));
    assert_eq!(rec["artifacts"][0], "config.resolved");
    assert_eq!(rec["report_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn lambda_skeleton_from_zero_notes_empty_skeleton() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{FELLER_SUPER}[experiment]\nkind = \"lambda_skeleton\"\nlambda = 1.0\nN = 200\ndt = 0.01\ninit = {{ law = \"fixed\", value = 0 }}\n");
    let p = write_config(tmp.path(), &text);
    let o = csbp(tmp.path(), &["simulate", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let s = json(&run_dir(tmp.path(), &o).join("summary.json"));
    assert_eq!(s["skeleton"]["z_identically_zero"], true);
    assert!(s["notes"][0].as_str().unwrap().contains("Z ≡ 0"));
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = csbp(tmp.path(), &["verify", "identities", "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = csbp(tmp.path(), &["verify", "selftest"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
    let dir = run_dir(tmp.path(), &o);
    assert_eq!(json(&dir.join("report.json"))["verdict"], "fail");
    assert!(fs::read_to_string(dir.join("report.txt")).unwrap().contains("FAIL"));
}

#[test]
fn verify_report_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), "[verify]\nN = 2000\ndt = 0.01\n");
    let run = || {
        let o = csbp(tmp.path(), &["verify", "theorem22", "--config", p.to_str().unwrap()]);
        assert!(o.status.code().unwrap() <= 1, "{o:?}");
        fs::read(run_dir(tmp.path(), &o).join("report.json")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn sweep_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &format!("{FELLER_SUB}[experiment]\nT_list = [2.0]\nN = 1000\ndt = 0.01\n"));
    let o = csbp(tmp.path(), &["sweep", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(run_dir(tmp.path(), &o).join("sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "T,P_hat_Z0_eq_1,d_T,se");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2.0,"));
}

#[test]
fn table_has_infinity_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), &format!("{FELLER_SUB}[experiment]\nt = 1.0\ndt = 0.5\ntheta = [1.0]\n"));
    let o = csbp(tmp.path(), &["table", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(run_dir(tmp.path(), &o).join("table.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "t,theta,u,du_dtheta");
    assert_eq!(lines.len(), 1 + 3 + 2);
    // u_1(1) = e^{-1}/(2 − e^{-1}) for α = −1, β = 1
    let row: Vec<f64> = lines[3].split(',').take(3).map(|v| v.parse().unwrap()).collect();
    let exact = (-1.0f64).exp() / (2.0 - (-1.0f64).exp());
    assert!((row[2] - exact).abs() < 1e-9, "{}", lines[3]);
    assert!(lines[5].starts_with("1.0,inf,"));
}
