//! End-to-end tests of the command-line interface: config validation,
//! result tables, sweep grids, overrides and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bubblelab")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

const HOMOGENEOUS: &str = "\
[market]
model = homogeneous
periods = 15

[asset.1]
dividend_support = 0, 0.1, 0.16, 0.22
terminal_value = 1.80
kappa = 4
alpha = 0.85
phi = 0.01

[output]
path = out.csv
";

#[test]
fn golden_homogeneous_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "h.cfg", HOMOGENEOUS);
    let out = dir.path().join("golden.csv");
    let output = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);

    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16); // header + 15 periods
    assert_eq!(
        lines[0],
        "run_id,t,fv_1,price_1,bid_1,ask_1,rd_1,imbalance_1,kappa,alpha,phi"
    );
    // Frozen from the recursion (12 significant digits).
    assert_eq!(
        lines[1],
        "0,1,3.6,4.10078431373,3.97764705882,4.30897959184,0.18144359193,-0.0392156862745,4,0.85,0.01"
    );
    assert_eq!(
        lines[15],
        "0,15,1.92,2.63020016238,1.66478233596,5.74180030157,0.257318899415,-0.461538461538,4,0.85,0.01"
    );

    // The price column reproduces the analytic path at serialization
    // precision for every period.
    let asset = bubblelab::AssetSpec::reference_speculative(4.0, 0.85, 0.01).unwrap();
    let analytic = bubblelab::homogeneous::average_price_path(&asset, 15)
        .unwrap()
        .path
        .prices();
    for (line, expected) in lines[1..].iter().zip(analytic) {
        let price: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(((price - expected) / expected).abs() < 1e-11);
    }
}

#[test]
fn validate_reports_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = HOMOGENEOUS
        .replace("phi = 0.01", "phi = 0.05")
        .replace("alpha = 0.85", "alpha = 1.0");
    let config = write_config(dir.path(), "bad.cfg", &bad);
    let output = run(&["validate", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);

    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("[0, 0.5/T)"), "weak-foresight bound named: {stdout}");
    assert!(stdout.contains("(0,1)"), "alpha interval named: {stdout}");

    // Machine-readable record on stderr.
    let stderr = String::from_utf8(output.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"], "validation");
    assert!(record["violations"].as_array().unwrap().len() >= 2);
}

#[test]
fn validate_accepts_bundled_configs_and_run_succeeds() {
    // validate-then-run round trip over the bundled figure configs.
    let dir = tempfile::tempdir().unwrap();
    let configs_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(configs_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("cfg") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        if name.starts_with("mc_") {
            continue; // exercised separately with a reduced session count
        }
        let output = run(&["validate", path.to_str().unwrap()]);
        assert_eq!(exit_code(&output), 0, "validate {name}");
        let out = dir.path().join(format!("{name}.csv"));
        let output = run(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(exit_code(&output), 0, "run {name}");
        assert!(out.exists());
    }
}

#[test]
fn population_sum_mismatch_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = HOMOGENEOUS.replace("model = homogeneous", "model = monte_carlo")
        + "\n[population]\ntotal = 100\nnoise = 50\ndirectional = 45\nmarket_neutral = 10\n";
    let config = write_config(dir.path(), "pop.cfg", &text);
    let output = run(&["validate", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("population.total"));
}

#[test]
fn missing_sweep_section_is_a_single_cell_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "h.cfg", HOMOGENEOUS);
    let out = dir.path().join("single.csv");
    let output = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().skip(1).all(|l| l.starts_with("0,")));
    // No grid file for a plain run.
    assert!(!dir.path().join("single_grid.csv").exists());

    // The sweep subcommand insists on axes.
    let output = run(&["sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn sweep_writes_table_and_grid_with_flagged_cells() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HOMOGENEOUS}\n[sweep]\nphi = 0, 0.01, 0.2\n");
    let config = write_config(dir.path(), "s.cfg", &text);
    let out = dir.path().join("sweep.csv");
    let output = run(&["sweep", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);

    // Two good cells in the table (phi = 0.2 violates the bound).
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 15);
    let grid = std::fs::read_to_string(dir.path().join("sweep_grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "phi,rd_1,flag");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("0.2,,"));
    assert!(lines[3].contains("0.5/T"));
}

#[test]
fn fig7_table_has_the_event_phase_structure() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fig7.cfg");
    let out = dir.path().join("fig7.csv");
    let output = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);

    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let event_col = header.iter().position(|c| *c == "event").unwrap();
    let cum_col = header.iter().position(|c| *c == "cum_imbalance").unwrap();

    let mut events = Vec::new();
    let mut cums = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        events.push(fields[event_col].to_string());
        cums.push(fields[cum_col].parse::<f64>().unwrap());
    }
    assert_eq!(events[0], "E2");
    let first_e4 = events.iter().position(|e| e == "E4").unwrap();
    let first_e3 = events.iter().position(|e| e == "E3").unwrap();
    assert!(first_e4 < first_e3);
    assert!(cums[..first_e3].iter().all(|&c| c > 0.0));
    assert!(cums[first_e3] < 0.0);
}

#[test]
fn runtime_degeneracy_exits_three() {
    // No noise traders: event E2 (both groups buying) leaves the supply
    // side empty at run time; validation cannot see this, the engine can.
    let dir = tempfile::tempdir().unwrap();
    let text = "\
[market]
model = hetero_single
periods = 15

[asset.1]
dividend_support = 0, 0.1, 0.16, 0.22
terminal_value = 1.80
kappa = 4
alpha = 0.85
phi = 0

[population]
noise = 0
fundamentalist = 6
speculator = 4

[strategy]
alpha_f = 0.25
gamma1 = 0.10
gamma2 = 4

[output]
path = out.csv
";
    let config = write_config(dir.path(), "degenerate.cfg", text);
    assert_eq!(exit_code(&run(&["validate", config.to_str().unwrap()])), 0);
    let out = dir.path().join("never.csv");
    let output = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 3);
    let stderr = String::from_utf8(output.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"], "degenerate");
}

#[test]
fn set_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "h.cfg", HOMOGENEOUS);
    let base = dir.path().join("base.csv");
    let bumped = dir.path().join("bumped.csv");
    run(&["run", config.to_str().unwrap(), "--out", base.to_str().unwrap()]);
    let output = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        bumped.to_str().unwrap(),
        "--set",
        "asset.1.kappa=5",
    ]);
    assert_eq!(exit_code(&output), 0);
    let a = std::fs::read_to_string(&base).unwrap();
    let b = std::fs::read_to_string(&bumped).unwrap();
    assert_ne!(a, b);
    assert!(b.lines().nth(1).unwrap().ends_with(",5,0.85,0.01"));

    // A bad override is a validation failure.
    let output = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        bumped.to_str().unwrap(),
        "--set",
        "asset.1.alpha=1.0",
    ]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn simulate_requires_the_monte_carlo_model_and_honors_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "h.cfg", HOMOGENEOUS);
    let output = run(&["simulate", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);

    let mc = "\
[market]
model = monte_carlo
periods = 15
sessions = 500
seed = 7

[asset.1]
dividend_support = 0, 0.1, 0.16, 0.22
terminal_value = 1.80
kappa = 4
alpha = 0.85
phi = 0

[population]
noise = 50
directional = 0
market_neutral = 0

[output]
path = mc.csv
";
    let config = write_config(dir.path(), "mc.cfg", mc);
    let out = dir.path().join("mc.csv");
    let output = run(&[
        "simulate",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sessions",
        "200",
        "--seed",
        "11",
    ]);
    assert_eq!(exit_code(&output), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[0].starts_with("run_id,t,fv_1,mc_price_1,se_price_1"));
    assert!(lines[1].ends_with(",200,11"), "overrides echoed: {}", lines[1]);
}

#[test]
fn tsv_format_uses_tabs() {
    let dir = tempfile::tempdir().unwrap();
    let text = HOMOGENEOUS.replace("path = out.csv", "path = out.tsv\nformat = tsv");
    let config = write_config(dir.path(), "h.cfg", &text);
    let out = dir.path().join("out.tsv");
    let output = run(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().contains('\t'));
    assert!(!text.lines().next().unwrap().contains(','));
}

#[test]
fn parse_errors_carry_positions_in_the_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "broken.cfg", "[market\nmodel = homogeneous\n");
    let output = run(&["validate", config.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    let stderr = String::from_utf8(output.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    let key = record["violations"][0]["key"].as_str().unwrap();
    assert!(key.starts_with("parse:1:"), "position in key: {key}");
}
