use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "distance_km,nu,mode,p0_opt,mu_opt,key_rate,e_ph,E_K,flags";

fn scfqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scfqkd"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn key_rate(report: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.trim().strip_prefix("key_rate"))
        .expect("key_rate line")
        .trim()
        .parse()
        .unwrap()
}

struct CsvRow {
    distance: f64,
    nu: f64,
    mode: String,
    p0: f64,
    mu: f64,
    rate: f64,
    flags: String,
}

fn parse_csv(text: &str) -> Vec<CsvRow> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 9, "{line}");
            CsvRow {
                distance: f[0].parse().unwrap(),
                nu: f[1].parse().unwrap(),
                mode: f[2].to_string(),
                p0: f[3].parse().unwrap(),
                mu: f[4].parse().unwrap(),
                rate: f[5].parse().unwrap(),
                flags: f[8].to_string(),
            }
        })
        .collect()
}

fn last_positive(rows: &[CsvRow], mode: &str) -> f64 {
    rows.iter()
        .filter(|r| r.mode == mode && r.rate > 0.0)
        .map(|r| r.distance)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn rate_at_hundred_km_is_positive() {
    let out = scfqkd(&["rate", "--distance", "100", "--nu", "1e-8"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(key_rate(&text) > 0.0, "{text}");
    for name in ["e_ph", "E_K", "n_u/N", "c2_bar", "S_Z_R", "D_eff"] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn rate_beyond_secure_range_is_flagged() {
    let out = scfqkd(&["rate", "--distance", "400"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(key_rate(&text), 0.0);
    assert!(text.contains("no_key"));
}

#[test]
fn rate_reports_every_requested_mode() {
    let out = scfqkd(&["rate", "--distance", "80", "--mode", "original,twcc,aopp"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for mode in ["mode original", "mode twcc", "mode aopp"] {
        assert!(text.contains(mode), "missing {mode}");
    }
    assert!(text.contains("E_aopp") && text.contains("n_t3/N"));
}

#[test]
fn malformed_configs_exit_with_code_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"p0": 0.5, "mu": 0.1}"#, "mu"),
        (r#"{"p0": 1.5}"#, "p0"),
        (r#"{"nu_upper_A": 0.5}"#, "nu_upper_A"),
        (r#"{"E_d": "high"}"#, "E_d"),
        (r#"{"p0": 0.5"#, "EOF"),
    ];
    for (i, (json, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        fs::write(&path, json).unwrap();
        let out = scfqkd(&["rate", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{json}");
        assert!(stderr(&out).contains(field), "{json}: {}", stderr(&out));
    }
}

#[test]
fn flags_and_environment_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"distance_km": 400.0}"#).unwrap();
    let file_only = scfqkd(&["rate", "--config", path.to_str().unwrap()]);
    assert_eq!(key_rate(&stdout(&file_only)), 0.0);
    let flag = scfqkd(&[
        "rate",
        "--config",
        path.to_str().unwrap(),
        "--distance",
        "50",
    ]);
    assert!(key_rate(&stdout(&flag)) > 0.0);

    let env = Command::new(env!("CARGO_BIN_EXE_scfqkd"))
        .args(["rate"])
        .env_clear()
        .env("SCFQKD_DISTANCE", "400")
        .output()
        .unwrap();
    assert_eq!(key_rate(&stdout(&env)), 0.0);
}

#[test]
fn empty_sweep_emits_only_the_header() {
    let out = scfqkd(&["sweep", "--d-min", "100", "--d-max", "50"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), format!("{HEADER}\n"));
}

#[test]
fn sweep_orders_rates_by_nu() {
    let out = scfqkd(&[
        "sweep",
        "--d-max",
        "200",
        "--step",
        "20",
        "--nu",
        "0,1e-8,1e-6",
        "--mode",
        "original",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = parse_csv(&stdout(&out));
    assert_eq!(rows.len(), 11 * 3);
    for chunk in rows.chunks(3) {
        assert!(chunk.iter().all(|r| r.distance == chunk[0].distance));
        assert_eq!([chunk[0].nu, chunk[1].nu, chunk[2].nu], [0.0, 1e-8, 1e-6]);
        assert!(
            chunk[0].rate >= chunk[1].rate * (1.0 - 1e-6),
            "{}",
            chunk[0].distance
        );
        assert!(chunk[1].rate >= chunk[2].rate, "{}", chunk[0].distance);
        for r in chunk {
            assert!(r.mu >= r.nu && r.p0 > 0.0 && r.p0 < 1.0);
            assert_eq!(r.rate == 0.0, r.flags.contains("no_key"));
        }
    }
}

#[test]
fn aopp_extends_the_range_at_high_misalignment() {
    let out = scfqkd(&[
        "sweep",
        "--d-min",
        "100",
        "--d-max",
        "220",
        "--step",
        "10",
        "--ed",
        "0.10",
        "--nu",
        "1e-8",
        "--mode",
        "original,aopp",
    ]);
    assert!(out.status.success());
    let rows = parse_csv(&stdout(&out));
    assert!(last_positive(&rows, "aopp") > last_positive(&rows, "original"));
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let args = [
        "sweep",
        "--d-max",
        "120",
        "--step",
        "30",
        "--nu",
        "0,1e-8",
        "--mode",
        "aopp,original",
        "--grid",
        "15",
    ];
    let one = scfqkd(&[&["--workers", "1"], &args[..]].concat());
    let four = scfqkd(&[&["--workers", "4"], &args[..]].concat());
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    let rows = parse_csv(&stdout(&one));
    let keys: Vec<(f64, f64, String)> = rows
        .iter()
        .map(|r| (r.distance, r.nu, r.mode.clone()))
        .collect();
    assert_eq!(keys[0], (0.0, 0.0, "aopp".to_string()));
    assert_eq!(keys[1], (0.0, 0.0, "original".to_string()));
    assert_eq!(keys[2].1, 1e-8);
}

#[test]
fn fixed_params_sweep_uses_the_configured_sources() {
    let out = scfqkd(&[
        "sweep",
        "--fixed-params",
        "--p0",
        "0.9",
        "--mu",
        "0.01",
        "--d-max",
        "40",
        "--step",
        "20",
    ]);
    assert!(out.status.success());
    let rows = parse_csv(&stdout(&out));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.p0 == 0.9 && r.mu == 0.01));
}

#[test]
fn outputs_carry_a_reloadable_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rate.csv");
    let out = scfqkd(&[
        "rate",
        "--distance",
        "70",
        "--ed",
        "0.05",
        "--mode",
        "twcc",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let sidecar = dir.path().join("rate.csv.config.json");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(meta["command"], "rate");
    assert_eq!(meta["config"]["distance_km"], 70.0);
    assert_eq!(meta["config"]["E_d"], 0.05);

    let again = dir.path().join("again.csv");
    let out = scfqkd(&[
        "rate",
        "--config",
        sidecar.to_str().unwrap(),
        "--mode",
        "twcc",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn sweep_can_write_a_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let script = dir.path().join("plot.py");
    let out = scfqkd(&[
        "sweep",
        "--d-max",
        "20",
        "--fixed-params",
        "--out",
        csv.to_str().unwrap(),
        "--plot-script",
        script.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&csv).unwrap().starts_with(HEADER));
    assert!(Path::new(&format!("{}.config.json", csv.display())).exists());
    assert!(fs::read_to_string(&script).unwrap().contains("sweep.csv"));

    let missing_out = scfqkd(&["sweep", "--plot-script", script.to_str().unwrap()]);
    assert_eq!(missing_out.status.code(), Some(2));
}

#[test]
fn optimize_compares_against_the_original_optimum() {
    let out = scfqkd(&[
        "optimize",
        "--distance",
        "100",
        "--mode",
        "original,aopp",
        "--grid",
        "20",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("p0*") && text.contains("at the original optimum"));
}

#[test]
fn monte_carlo_reports_are_reproducible() {
    let args = ["mc", "--n-windows", "2000000", "--seed", "11"];
    let a = scfqkd(&args);
    let b = scfqkd(&args);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("n_Z_L") && text.contains("n_u1") && text.contains("PASS"));
    let other = scfqkd(&["mc", "--n-windows", "2000000", "--seed", "12"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn monte_carlo_rejects_zero_test_fraction() {
    let out = scfqkd(&["mc", "--r", "0", "--n-windows", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("test fraction"));
}

#[test]
fn oracle_check_passes_by_default() {
    let out = scfqkd(&["oracle-check"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 4);
}

#[test]
fn oracle_check_detects_a_perturbed_model() {
    let out = scfqkd(&["oracle-check", "--perturb", "1e-8"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("FAIL: max deviation"));
}

#[test]
fn oracle_check_refuses_a_short_truncation() {
    let out = scfqkd(&["oracle-check", "--n-max", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("truncation"));
}
