use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bjlab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn golden_regressions() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty());
    for f in files {
        let g = read_json(&f);
        let cmd = g["command"].as_str().unwrap();
        let out = tempfile::tempdir().unwrap();
        let seed = g["seed"].to_string();
        let o = run(cmd, &configs().join(g["config"].as_str().unwrap()), out.path(), &["--seed", &seed]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", f.display(), String::from_utf8_lossy(&o.stderr));
        let r = read_json(&out.path().join(format!("{cmd}.json")));
        assert_eq!(r["verdict"], g["verdict"], "{}", f.display());
        for (k, spec) in g["summary"].as_object().unwrap() {
            let want = spec["value"].as_f64().unwrap();
            let tol = spec["tol"].as_f64().unwrap();
            let got = r["summary"][k].as_f64().unwrap_or_else(|| panic!("{}: missing {k}", f.display()));
            assert!((got - want).abs() <= tol, "{}: {k} = {got}, frozen {want} ± {tol}", f.display());
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let cfg = configs().join("amo.toml");
    for cmd in ["verify-upper", "green-scan", "preflight"] {
        let mut seen: Option<(Vec<u8>, Vec<u8>)> = None;
        for threads in ["1", "4", "4"] {
            let out = tempfile::tempdir().unwrap();
            run(cmd, &cfg, out.path(), &["--threads", threads, "--seed", "11"]);
            let json = std::fs::read(out.path().join(format!("{cmd}.json"))).unwrap();
            let csv = std::fs::read(out.path().join(format!("{cmd}.csv"))).unwrap();
            match &seen {
                None => seen = Some((json, csv)),
                Some((j, c)) => {
                    assert!(*j == json, "{cmd}: JSON differs with {threads} threads");
                    assert!(*c == csv, "{cmd}: CSV differs with {threads} threads");
                }
            }
        }
    }
}

#[test]
fn localization_negative_control_fails() {
    let out = tempfile::tempdir().unwrap();
    let o = run("localize", &configs().join("amo_control.toml"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = read_json(&out.path().join("localize.json"));
    assert_eq!(r["verdict"], "FAIL");
    assert!(r["summary"]["fraction_localized"].as_f64().unwrap() < 0.05);
}

#[test]
fn localize_writes_block_norms() {
    let out = tempfile::tempdir().unwrap();
    let o = run("localize", &configs().join("amo_localize.toml"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.path().join("localize_block_norms.csv")).unwrap();
    assert!(text.starts_with("vector,energy,block,norm\n"));
    // 300 eigenvectors × 300 blocks plus the header
    assert_eq!(text.lines().count(), 300 * 300 + 1);
}

#[test]
fn preflight_reports_every_check() {
    let out = tempfile::tempdir().unwrap();
    let o = run("preflight", &configs().join("amo.toml"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out.path().join("preflight.json"));
    for k in ["det_w_min", "f_min_relative_spread", "diophantine_constant", "lambda0_estimate", "eps0"] {
        assert!(r["summary"][k].is_number(), "missing {k}");
    }
    let t = r["summary"]["diophantine_constant"].as_f64().unwrap();
    assert!((t - 0.381966).abs() < 1e-5);
    assert_eq!(r["provenance"]["code_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["provenance"]["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(configs().join("amo.toml")).unwrap();

    let bad = dir.path().join("zero.toml");
    std::fs::write(&bad, base.replace("lambda = 10.0", "lambda = 0.0")).unwrap();
    let o = run("preflight", &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("coupling must be nonzero"));

    let bad = dir.path().join("unknown.toml");
    std::fs::write(&bad, base.replace("x = 0.1234", "x = 0.1234\nfrobnicate = 1")).unwrap();
    let o = run("preflight", &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));

    let o = run("hardy-check", &configs().join("amo.toml"), dir.path(), &["--radii", "1.1,1.2"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run("preflight", &dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin().arg("frobnicate").arg("--config").arg("x").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_and_matrix_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        "lyapunov",
        &configs().join("amo.toml"),
        dir.path(),
        &["--energies", "-1.0,0.5"],
    );
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("lyapunov.json"));
    assert!(r["summary"]["E-1.top_exponent"].is_number());
    assert!(r["summary"]["E0.5.top_exponent"].is_number());

    let m = dir.path().join("m.txt");
    std::fs::write(&m, "2 -1 0 3\n1 4 -2 0\n0 1 1 5\n-3 0 2 1\n").unwrap();
    let o = run("minor-oracle", &configs().join("amo.toml"), dir.path(), &["--matrix", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("minor-oracle.json"));
    assert_eq!(r["summary"]["pairs"], 16.0);
    assert_eq!(r["summary"]["exact_mismatches"], 0.0);

    std::fs::write(&m, "1 x\n2 3\n").unwrap();
    let o = run("minor-oracle", &configs().join("amo.toml"), dir.path(), &["--matrix", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("minor_paths"));
}
