use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
name = "cli"
preset = "wave_weak"
deltas = [0.1, 0.07, 0.05]
n_locations = 2
replicates = 3
n_steps = 300
k_max = 128
seed = 4
estimator = "decomposition"
"#;

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    let cfg = dir.join("cli.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hyperspde"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn mc_study_then_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--threads", "1", "mc-study"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["cli_cells.csv", "cli_replicates.csv", "cli_summary.txt", "cli_rmse.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let cells = std::fs::read_to_string(out.join("cli_cells.csv")).unwrap();
    // header plus 3 deltas x 2 parameters
    assert_eq!(cells.lines().count(), 7);
    let svg = std::fs::read_to_string(out.join("cli_rmse.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    let cells_path = out.join("cli_cells.csv");
    let o = run(dir.path(), &["rates", cells_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rates = std::fs::read_to_string(out.join("rates.txt")).unwrap();
    assert_eq!(rates.lines().count(), 2);
    assert!(rates.contains("slope"));
}

#[test]
fn simulate_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--integrator", "euler", "simulate", "--binary"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["cli_paths.bin", "cli_modes.csv", "cli_measurements_0.csv", "cli_measurements_1.csv", "cli_simulate.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let o = run(dir.path(), &["--seed", "11", "estimate", "--replicate", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est = std::fs::read_to_string(out.join("cli_estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 4);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["rates", "/nonexistent/cells.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, "deltas = [0.1]\nreplicatez = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hyperspde"))
        .arg("--config")
        .arg(&cfg)
        .arg("mc-study")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
