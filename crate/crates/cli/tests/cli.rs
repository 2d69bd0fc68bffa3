use std::path::Path;
use std::process::{Command, Output};

use coprime_fcm::{make_scenario, Config, Preset};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coprime-fcm"))
}

fn write_config(dir: &Path, name: &str, config: &Config) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, config.to_json()).unwrap();
    path
}

fn run_cli(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn estimates(dir: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(dir.join("estimates.json")).unwrap();
    serde_json::from_str::<Vec<serde_json::Value>>(&text).unwrap()
}

#[test]
fn sim1_run_writes_artifacts_with_ten_estimates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sim1.json", &make_scenario(Preset::Sim1, 2));
    let out = tmp.path().join("out");
    let res = run_cli(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["spectrum.csv", "estimates.json", "meta.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(estimates(&out).len(), 10);

    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("theta,h_ab,h_ac,h_bc,h_combined,pseudo_combined\n"));
    assert_eq!(csv.lines().count(), 4096 + 1);

    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 2);
    assert_eq!(meta["pairs"][0]["signal_dim"], meta["pairs"][0]["scenario_signal_dim"]);
    assert_eq!(meta["pairs"][0]["eigenvalues"].as_array().unwrap().len(), 42);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn sim2_combined_run_finds_nine_peaks() {
    let tmp = TempDir::new().unwrap();
    let make = run_cli(&[
        "make-scenario",
        "--preset",
        "sim2",
        "--out",
        tmp.path().join("sim2.json").to_str().unwrap(),
    ]);
    assert!(make.status.success());
    let out = tmp.path().join("out");
    let res = run_cli(&[
        "run",
        "--config",
        tmp.path().join("sim2.json").to_str().unwrap(),
        "--arrays",
        "abc",
        "--combine",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    // make_scenario output validates without warnings.
    assert!(!String::from_utf8_lossy(&res.stderr).contains("warning"));
    let est = estimates(&out);
    assert_eq!(est.len(), 9);
    let truth = [-0.6, -0.5, -0.4, -0.3, -0.1, 0.1, 0.2, 0.25, 0.3];
    for t in truth {
        let t = t * std::f64::consts::PI;
        assert!(
            est.iter().any(|e| (e["theta"].as_f64().unwrap() - t).abs() <= 0.02 * std::f64::consts::PI),
            "no estimate near {t}"
        );
    }
    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let second = csv.lines().nth(1).unwrap();
    assert!(second.split(',').all(|f| !f.is_empty()));
}

#[test]
fn baseline_method_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sim1.json", &make_scenario(Preset::Sim1, 3));
    let out = tmp.path().join("out");
    let res = run_cli(&[
        "run",
        cfg.to_str().unwrap(),
        "--method",
        "baseline",
        "--grid-points",
        "1024",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["options"]["method"], "baseline");
    assert_eq!(meta["pairs"][0]["matrix_dim"], 31);
    assert_eq!(std::fs::read_to_string(out.join("spectrum.csv")).unwrap().lines().count(), 1025);
}

#[test]
fn malformed_config_exits_with_line_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, "{\n  \"arrays\": [\n    {\"label\": \"A\", \"spacing\": 6,, }\n  ]\n}\n").unwrap();
    let res = run_cli(&["run", path.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn invalid_scenario_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut c = make_scenario(Preset::Sim1, 1);
    c.arrays[1].spacing = 9;
    let cfg = write_config(tmp.path(), "c.json", &c);
    let res = run_cli(&["run", cfg.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("arrays[1].spacing"));

    let res = run_cli(&["run", cfg.to_str().unwrap(), "--method", "music"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn vanishing_group_is_named() {
    let tmp = TempDir::new().unwrap();
    let mut c = make_scenario(Preset::Sim1, 1);
    // Directions 2π/6 apart share every A lobe; opposite coefficients cancel on A.
    let g = &mut c.groups[4];
    g.doas = vec![0.1, 0.1 + std::f64::consts::PI / 3.0];
    let coeffs = g.coeffs.as_mut().unwrap();
    coeffs[1].re = -coeffs[0].re;
    coeffs[1].im = -coeffs[0].im;
    let cfg = write_config(tmp.path(), "v.json", &c);
    let res = run_cli(&["run", cfg.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("group 4") && err.contains("array A"), "{err}");
}

#[test]
fn estimates_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let mut c = make_scenario(Preset::Sim1, 5);
    c.estimation.grid_points = 1024;
    let cfg = write_config(tmp.path(), "sim1.json", &c);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("out{threads}"));
        let res = bin()
            .args(["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(res.status.success());
        outputs.push(std::fs::read(out.join("estimates.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let mut c = make_scenario(Preset::Sim1, 5);
    c.estimation.grid_points = 512;
    c.run.snapshots = 200;
    let cfg = write_config(tmp.path(), "sim1.json", &c);
    let out = tmp.path().join("out");
    let res = run_cli(&["run", cfg.to_str().unwrap(), "--seed", "11", "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["config"]["run"]["seed"], 11);
}
