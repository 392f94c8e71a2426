use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimo-duality"))
}

const SMALL: &str = "snr_db = 0, 10\nrealizations = 3\nproblems = p1, p3\naser_symbols = 200\n";

#[test]
fn run_writes_identical_csv_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("out{jobs}.csv"));
        let plots = dir.path().join(format!("plots{jobs}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .arg("--plots")
            .arg(&plots)
            .args(["--jobs", jobs])
            .status()
            .unwrap();
        assert!(status.success());
        assert!(plots.join("plots.gp").exists() && plots.join("aser.dat").exists());
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("snr_db,problem,design_mode,sum_amse,aser,total_power,max_violation,iterations"));
    assert_eq!(lines.count(), 2 * 2 * 3);
    assert!(!text.contains('\r'));
}

#[test]
fn seed_flag_changes_the_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(format!("s{seed}.csv"));
        assert!(bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", seed])
            .status()
            .unwrap()
            .success());
        fs::read(out).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "snr_db = 0\nfrobnicate = 3\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("x.csv")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn solve_prints_a_transceiver() {
    let out = bin().args(["solve", "--problem", "p2", "--snr-db", "-5", "--mode", "naive"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["problem"], "p2");
    assert_eq!(v["design_mode"], "naive");
    assert_eq!(v["b"].as_array().unwrap().len(), 2);
    assert_eq!(v["w"][0]["re"].as_array().unwrap().len(), 2);
    assert!(v["max_violation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["power"]["per_antenna"].as_array().unwrap().len(), 4);
}

#[test]
fn solve_rejects_power_minimization() {
    assert!(!bin().args(["solve", "--problem", "p6", "--snr-db", "0"]).output().unwrap().status.success());
}

#[test]
fn verify_passes() {
    let out = bin().args(["verify", "--instances", "5"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn bundled_configs_run() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let quick: String = text
            .lines()
            .filter(|l| !l.starts_with("realizations") && !l.starts_with("aser_symbols"))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
            + "realizations = 1\naser_symbols = 100\n";
        let cfg = dir.path().join("quick.cfg");
        fs::write(&cfg, quick).unwrap();
        let out =
            bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("q.csv")).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}
