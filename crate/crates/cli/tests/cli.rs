use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_irs-mec"))
}

#[test]
fn preset_prints_a_loadable_config() {
    let out = bin().args(["preset", "fig12"]).output().unwrap();
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["sweep"]["param"], "K");
    assert_eq!(cfg["system"]["irs_elements"], 40);
}

#[test]
fn unknown_preset_fails_with_the_list() {
    let out = bin().args(["preset", "nope"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fig7") && err.contains("fig13"), "{err}");
}

#[test]
fn run_writes_csv_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"realizations": 3, "system": {"irs_elements": 8}, "sweep": {"param": "N", "values": [4, 8]}}"#,
    )
    .unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "2"));
    let mut lines = a.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,sweep_param,sweep_value,scheme,quant,realization,seed,device_avg_latency_ms,\
         per_device_latency_ms,iterations,converged,walltime_ms"
    );
    assert_eq!(lines.count(), 2 * 3 * 3);
}

#[test]
fn run_rejects_bad_config_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"realizations": 0}"#).unwrap();
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("realizations"));
}

#[test]
fn solve_prints_a_solution() {
    let out = bin()
        .args(["solve", "--preset", "default-two", "--seed", "3", "--scheme", "randphase"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(sol["scheme"], "randphase");
    assert_eq!(sol["latency"]["total"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_reports_a_small_gap() {
    let out = bin()
        .args(["oracle", "--elements", "2", "--resolution", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["relative_gap"].as_f64().unwrap() < 0.01);
    let out = bin().args(["oracle", "--elements", "5"]).output().unwrap();
    assert!(!out.status.success());
}
