use qred::summary::RunManifest;
use qred::ScenarioConfig;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn qred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qred")).args(args).env("QRED_THREADS", "2").output().expect("binary runs")
}

fn run_golden(out: &Path) -> Output {
    let cfg = golden("s1.json");
    qred(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn shipped_configs_round_trip_and_validate() {
    for name in ["s1.json", "s1-half-form.json", "s2.json"] {
        let path = workspace().join("configs").join(name);
        let cfg = ScenarioConfig::load(&path).unwrap();
        assert_eq!(ScenarioConfig::parse(&cfg.to_json()).unwrap(), cfg);
        cfg.validate().unwrap();
        let o = qred(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{name}");
    }
}

#[test]
fn rationals_are_pairs() {
    let cfg = ScenarioConfig::load(&golden("s1.json")).unwrap();
    assert_eq!(cfg.shift, vec![[1, 2]]);
    let bad = cfg.to_json().replace("[\n    [\n      1,\n      2\n    ]\n  ]", "[[1, 0]]");
    assert!(ScenarioConfig::parse(&bad).is_err());
}

#[test]
fn hash_ignores_output_directory() {
    let mut cfg = ScenarioConfig::load(&golden("s1.json")).unwrap();
    let h = cfg.hash();
    cfg.output = PathBuf::from("elsewhere");
    assert_eq!(cfg.hash(), h);
    cfg.k.push(16);
    assert_ne!(cfg.hash(), h);
}

#[test]
fn run_writes_listed_files_with_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_golden(dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for want in ["densities.csv", "gram.csv", "summary.json", "plot.gp"] {
        assert!(names.contains(&want), "{names:?}");
    }
    let hash = ScenarioConfig::load(&golden("s1.json")).unwrap().hash();
    assert_eq!(m.config_hash, hash);
    qred::report::check_files(dir.path(), &m).unwrap();
    assert!(!dir.path().join(".staging").exists());
}

#[test]
fn csv_outputs_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_golden(dir.path()).status.success());
    for name in ["densities.csv", "gram.csv"] {
        let got = fs::read_to_string(dir.path().join(name)).unwrap();
        let want = fs::read_to_string(golden(&format!("s1_{name}"))).unwrap();
        assert_eq!(got, want, "{name}");
        assert!(!got.contains('\r'));
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_golden(a.path()).status.success());
    let cfg = golden("s1.json");
    let o = Command::new(env!("CARGO_BIN_EXE_qred"))
        .args(["--threads", "1", "run", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    for name in ["densities.csv", "gram.csv", "summary.json", "convergence.csv", "plot.gp"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn odd_k_on_s1_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("s1.json");
    let o = qred(&["run", cfg.to_str().unwrap(), "--k", "2,3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lift to the line bundle") && err.contains("3/2"), "{err}");
    assert!(!dir.path().join("manifest.json").exists());
    assert_eq!(qred(&["validate", cfg.to_str().unwrap(), "--k", "5"]).status.code(), Some(2));
}

#[test]
fn half_form_on_s1_needs_odd_k() {
    let path = workspace().join("configs/s1-half-form.json");
    assert!(qred(&["validate", path.to_str().unwrap()]).status.success());
    let o = qred(&["validate", path.to_str().unwrap(), "--k", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("half-form bundle"));
}

#[test]
fn report_prints_density_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("s1.json");
    let o = qred(&["run", cfg.to_str().unwrap(), "--k", "8,16,32,64,128", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let o = qred(&["report", dir.path().join("manifest.json").to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    let i_line = text.lines().find(|l| l.contains("density I_k")).expect("I_k line");
    assert!(i_line.contains("@k=128") && i_line.ends_with("PASS"), "{i_line}");
    assert!(text.lines().any(|l| l.contains("density J_k") && l.ends_with("PASS")));
}

#[test]
fn report_rejects_empty_or_missing_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(&m, r#"{"config_hash":"x","tool_version":"qred","files":[],"stages":[]}"#).unwrap();
    let o = qred(&["report", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no output files"));
    let o = qred(&["report", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_detects_tampered_headers() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_golden(dir.path()).status.success());
    let p = dir.path().join("gram.csv");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, text.replacen("sha256:", "sha256:0", 1)).unwrap();
    let m = dir.path().join("manifest.json");
    let o = qred(&["report", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
