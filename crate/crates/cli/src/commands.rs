//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use scfqkd_core::channel::asymptotic_stats;
use scfqkd_core::montecarlo::{self, count_checks, phase_error_sigma, SimSeed};
use scfqkd_core::optimize::{optimize_with_report, OptimizationProblem};
use scfqkd_core::oracle::{compare_with_channel, OracleGrid};
use scfqkd_core::pipeline::{asymptotic_report, asymptotic_report_with_c0};
use scfqkd_core::rates::{security_summary, BoundCoefficients};
use scfqkd_core::{KeyRateReport, Mode, ProtocolConfig, RateDetail};

use crate::config::{self, write_sidecar, ConfigLayer, Effective};
use crate::output::{num, plot_script, write_csv, Row};
use crate::{CliError, ConfigArgs};

/// Monte-Carlo z-scores beyond this fail the run.
const MC_Z_LIMIT: f64 = 5.0;

fn effective(args: &ConfigArgs, base: ConfigLayer) -> Result<Effective, CliError> {
    config::resolve(args.layer(base)?)
}

/// The `--nu` list, or the configured bound when none is given.
fn nu_values(args: &ConfigArgs, effective: &Effective) -> Vec<f64> {
    if args.nu.is_empty() {
        let p = effective.protocol;
        vec![p.nu_upper_a.max(p.nu_upper_b)]
    } else {
        args.nu.clone()
    }
}

fn with_nu(protocol: ProtocolConfig, nu: f64) -> ProtocolConfig {
    ProtocolConfig {
        nu_upper_a: nu,
        nu_upper_b: nu,
        ..protocol
    }
}

/// Re-validates after a `--nu` override, which can break `nu <= mu`.
fn checked(effective: &Effective, protocol: ProtocolConfig) -> Result<ProtocolConfig, CliError> {
    scfqkd_core::validate_config(protocol, effective.channel)
        .map(|(p, _)| p)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn describe(
    out: &mut String,
    effective: &Effective,
    protocol: &ProtocolConfig,
    report: &KeyRateReport,
) {
    let channel = effective.channel;
    let stats = asymptotic_stats(protocol, &channel);
    let s = &report.summary;
    let n = protocol.n().max(1.0);
    let _ = writeln!(
        out,
        "mode {} at {} km, nu = {:e}, mu = {:e}, p0 = {}",
        report.mode,
        channel.distance_km,
        protocol.nu(),
        protocol.mu(),
        protocol.p0
    );
    let mut line = |name: &str, value: f64| {
        let _ = writeln!(out, "  {name:<14} {}", num(value));
    };
    line("key_rate", report.key_rate);
    line("raw_key_rate", report.raw_key_rate);
    line("e_ph", report.e_ph());
    line("E_K", report.bit_error());
    line("n_u/N", s.n_u / n);
    line("e_ph_bound", s.e_ph_upper);
    line("n_ph/N", s.n_ph_upper / n);
    line("c0", s.c0);
    line("c1", s.c1);
    line("c2_bar", s.c2_bar);
    line("S_O_L", stats.s_o_l);
    line("S_O_R", stats.s_o_r);
    line("S_B_L", stats.s_b_l);
    line("S_B_R", stats.s_b_r);
    line("S_Z_L", stats.s_z_l);
    line("S_Z_R", stats.s_z_r);
    line("D_eff", stats.d_eff);
    match report.detail {
        RateDetail::Original { n_t, e_k } => {
            line("n_t/N", n_t / n);
            line("E_K(raw)", e_k);
        }
        RateDetail::Twcc {
            n_u_twcc,
            e_ph_twcc,
            stats,
        } => {
            line("n_u'/N", n_u_twcc / n);
            line("e_ph'", e_ph_twcc);
            line("n_t1/N", stats.n_t1 / n);
            line("n_t2/N", stats.n_t2 / n);
            line("n_t3/N", stats.n_t3 / n);
            line("E_1", stats.e_1);
            line("E_2", stats.e_2);
            line("E_3", stats.e_3);
        }
        RateDetail::Aopp {
            n_u_aopp,
            e_ph_aopp,
            stats,
        } => {
            line("n_u''/N", n_u_aopp / n);
            line("e_ph''", e_ph_aopp);
            line("n_b0/N", stats.n_b0 / n);
            line("n_b1/N", stats.n_b1 / n);
            line("n_g/N", stats.n_g / n);
            line("n_t''/N", stats.n_t_aopp / n);
            line("E_aopp", stats.e_aopp);
        }
    }
    let mut flags = Vec::new();
    if report.no_key {
        flags.push("no_key");
    }
    if s.bracket_clamped {
        flags.push("bracket_clamped");
    }
    if !flags.is_empty() {
        let _ = writeln!(out, "  flags          {}", flags.join(";"));
    }
}

pub fn rate(
    args: &ConfigArgs,
    modes: &[Mode],
    c0: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let effective = effective(args, ConfigLayer::default())?;
    let nus = nu_values(args, &effective);
    let mut text = String::new();
    let mut rows = Vec::new();
    for &nu in &nus {
        let protocol = if args.nu.is_empty() {
            effective.protocol
        } else {
            checked(&effective, with_nu(effective.protocol, nu))?
        };
        for &mode in modes {
            let report = asymptotic_report_with_c0(&protocol, &effective.channel, mode, c0)?;
            describe(&mut text, &effective, &protocol, &report);
            rows.push(Row {
                distance_km: effective.channel.distance_km,
                nu,
                mode,
                p0: protocol.p0,
                mu: protocol.mu(),
                report,
                mu_at_bound: false,
            });
        }
    }
    print!("{text}");
    if let Some(path) = out {
        write_csv(&rows, Some(path))?;
        write_sidecar(
            path,
            "rate",
            &effective,
            json!({ "nu": nus, "modes": modes, "c0": c0 }),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRange {
    pub d_min: f64,
    pub d_max: f64,
    pub step: f64,
}

impl SweepRange {
    fn distances(&self) -> Result<Vec<f64>, CliError> {
        let SweepRange { d_min, d_max, step } = *self;
        if !(d_min.is_finite() && d_max.is_finite() && d_min >= 0.0) {
            return Err(CliError::Config(format!(
                "distance range [{d_min}, {d_max}] must be finite and non-negative"
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(CliError::Config(format!(
                "--step must be positive, got {step}"
            )));
        }
        if d_min > d_max {
            return Ok(Vec::new());
        }
        // a small slack keeps d_max itself when the range is a whole number of steps
        let count = ((d_max - d_min) / step * (1.0 + 1e-12)).floor() as usize + 1;
        Ok((0..count).map(|i| d_min + i as f64 * step).collect())
    }
}

fn optimized_row(
    effective: &Effective,
    distance: f64,
    nu: f64,
    mode: Mode,
    grid: usize,
) -> Result<Row, CliError> {
    let channel = effective.channel.with_distance(distance);
    let problem = OptimizationProblem::new(nu, mode).with_grid(grid);
    let (optimum, report) = optimize_with_report(&problem, &channel)?;
    Ok(Row {
        distance_km: distance,
        nu,
        mode,
        p0: optimum.p0,
        mu: optimum.mu,
        report,
        mu_at_bound: optimum.mu_at_bound,
    })
}

fn fixed_row(effective: &Effective, distance: f64, nu: f64, mode: Mode) -> Result<Row, CliError> {
    let protocol = checked(effective, with_nu(effective.protocol, nu))?;
    let report = asymptotic_report(&protocol, &effective.channel.with_distance(distance), mode)?;
    Ok(Row {
        distance_km: distance,
        nu,
        mode,
        p0: protocol.p0,
        mu: protocol.mu(),
        report,
        mu_at_bound: false,
    })
}

pub fn sweep(
    args: &ConfigArgs,
    modes: &[Mode],
    range: SweepRange,
    fixed_params: bool,
    grid: usize,
    out: Option<&Path>,
    plot: Option<&Path>,
) -> Result<(), CliError> {
    if plot.is_some() && out.is_none() {
        return Err(CliError::Config("--plot-script needs --out".into()));
    }
    let effective = effective(args, ConfigLayer::default())?;
    let nus = nu_values(args, &effective);
    let distances = range.distances()?;
    let points: Vec<(f64, f64, Mode)> = distances
        .iter()
        .flat_map(|&d| {
            nus.iter()
                .flat_map(move |&nu| modes.iter().map(move |&m| (d, nu, m)))
        })
        .collect();
    // indexed parallel collect keeps (distance, nu, mode) order
    let rows = points
        .par_iter()
        .map(|&(d, nu, mode)| {
            if fixed_params {
                fixed_row(&effective, d, nu, mode)
            } else {
                optimized_row(&effective, d, nu, mode, grid)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_csv(&rows, out)?;
    if let Some(path) = out {
        write_sidecar(
            path,
            "sweep",
            &effective,
            json!({
                "nu": nus,
                "modes": modes,
                "d_min": range.d_min,
                "d_max": range.d_max,
                "step": range.step,
                "fixed_params": fixed_params,
                "grid": grid,
            }),
        )?;
        if let Some(script) = plot {
            fs::write(script, plot_script(path)).map_err(|e| CliError::io(script, e))?;
        }
    }
    Ok(())
}

pub fn optimize(
    args: &ConfigArgs,
    modes: &[Mode],
    grid: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let effective = effective(args, ConfigLayer::default())?;
    let nus = nu_values(args, &effective);
    let distance = effective.channel.distance_km;
    let mut rows = Vec::new();
    let mut text = String::new();
    for &nu in &nus {
        let original = optimized_row(&effective, distance, nu, Mode::Original, grid)?;
        let _ = writeln!(text, "distance {distance} km, nu = {nu:e}");
        for &mode in modes {
            let row = if mode == Mode::Original {
                original.clone()
            } else {
                optimized_row(&effective, distance, nu, mode, grid)?
            };
            let _ = writeln!(
                text,
                "  {:<8} p0* = {}  mu* = {}  R* = {}{}",
                mode.as_str(),
                num(row.p0),
                num(row.mu),
                num(row.report.key_rate),
                if row.flags().is_empty() {
                    String::new()
                } else {
                    format!("  [{}]", row.flags())
                }
            );
            if mode != Mode::Original {
                // the same mode evaluated at the original mode's optimum, for comparison
                let protocol = ProtocolConfig::symmetric(nu, original.mu, original.p0, 0.0, 1);
                let shared = asymptotic_report(&protocol, &effective.channel, mode)?;
                let _ = writeln!(
                    text,
                    "  {:<8} at the original optimum R = {}  (own optimum gains {})",
                    "",
                    num(shared.key_rate),
                    num(row.report.key_rate - shared.key_rate)
                );
            }
            rows.push(row);
        }
    }
    print!("{text}");
    if let Some(path) = out {
        write_csv(&rows, Some(path))?;
        write_sidecar(
            path,
            "optimize",
            &effective,
            json!({ "nu": nus, "modes": modes, "grid": grid }),
        )?;
    }
    Ok(())
}

pub fn monte_carlo(args: &ConfigArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if args.nu.len() > 1 {
        return Err(CliError::Config("mc takes a single --nu value".into()));
    }
    let effective = effective(args, config::monte_carlo_defaults())?;
    let protocol = match args.nu.first() {
        Some(&nu) => checked(&effective, with_nu(effective.protocol, nu))?,
        None => effective.protocol,
    };
    let channel = effective.channel;
    let result = montecarlo::run(&protocol, &channel, SimSeed(seed))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "Monte-Carlo run: N = {}, seed = {seed}, distance = {} km, nu = {:e}, mu = {:e}, p0 = {}, r = {}",
        protocol.n_windows, channel.distance_km, protocol.nu(), protocol.mu(), protocol.p0, protocol.r
    );
    let _ = writeln!(
        text,
        "{:<8} {:>14} {:>24} {:>24} {:>10}",
        "count", "observed", "expected", "sigma", "z"
    );
    let checks = count_checks(&protocol, &channel, &result.counts);
    let mut worst: f64 = 0.0;
    for check in &checks {
        worst = worst.max(check.z().abs());
        let _ = writeln!(
            text,
            "{:<8} {:>14} {:>24} {:>24} {:>10.3}",
            check.name,
            check.observed,
            num(check.expected),
            num(check.sigma),
            check.z()
        );
    }

    let expected_stats = asymptotic_stats(&protocol, &channel);
    let _ = writeln!(text, "{:<8} {:>24} {:>24}", "rate", "estimated", "analytic");
    let pairs = [
        ("S_O_L", result.stats.s_o_l, expected_stats.s_o_l),
        ("S_O_R", result.stats.s_o_r, expected_stats.s_o_r),
        ("S_B_L", result.stats.s_b_l, expected_stats.s_b_l),
        ("S_B_R", result.stats.s_b_r, expected_stats.s_b_r),
        ("S_Z_L", result.stats.s_z_l, expected_stats.s_z_l),
        ("S_Z_R", result.stats.s_z_r, expected_stats.s_z_r),
    ];
    for (name, estimated, analytic) in pairs {
        let _ = writeln!(
            text,
            "{name:<8} {:>24} {:>24}",
            num(estimated),
            num(analytic)
        );
    }

    let coeffs = BoundCoefficients::for_protocol(&protocol);
    let analytic = security_summary(&expected_stats, &protocol, &coeffs).e_ph_upper;
    let estimated = result.original_report.summary.e_ph_upper;
    let sigma = phase_error_sigma(&expected_stats, &protocol, &coeffs);
    let z_ph = (estimated - analytic) / sigma;
    worst = worst.max(z_ph.abs());
    let _ = writeln!(
        text,
        "e_ph     {:>24} {:>24}  sigma {}  z {z_ph:.3}",
        num(estimated),
        num(analytic),
        num(sigma)
    );

    let _ = writeln!(
        text,
        "{:<8} {:>24} {:>24}",
        "mode", "key rate (MC)", "key rate (analytic)"
    );
    let reports = [
        &result.original_report,
        &result.twcc_report,
        &result.aopp_report,
    ];
    for report in reports {
        let asymptotic = asymptotic_report(&protocol, &channel, report.mode)?;
        let _ = writeln!(
            text,
            "{:<8} {:>24} {:>24}",
            report.mode.as_str(),
            num(report.key_rate),
            num(asymptotic.key_rate)
        );
    }
    let pass = worst <= MC_Z_LIMIT;
    let _ = writeln!(
        text,
        "{}: max |z| = {worst:.3} (limit {MC_Z_LIMIT})",
        if pass { "PASS" } else { "FAIL" }
    );

    print!("{text}");
    if let Some(path) = out {
        fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
        write_sidecar(
            path,
            "mc",
            &Effective { protocol, channel },
            json!({ "seed": seed }),
        )?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "Monte-Carlo z-score {worst:.3} exceeds {MC_Z_LIMIT}"
        )))
    }
}

pub fn oracle_check(
    config_path: Option<&Path>,
    misalignments: Vec<f64>,
    points: usize,
    tolerance: f64,
    perturbation: f64,
    n_max: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let file = match config_path {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    let effective = config::resolve(file)?;
    if points < 2 {
        return Err(CliError::Config("--points must be at least 2".into()));
    }
    if let Some(bad) = misalignments.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(CliError::Config(format!(
            "E_d must lie in [0, 1], got {bad}"
        )));
    }
    let grid = OracleGrid {
        intensities: (0..points)
            .map(|i| i as f64 / (points - 1) as f64)
            .collect(),
        misalignments: misalignments.clone(),
        p_d: effective.channel.p_d,
        n_max,
        perturbation,
    };
    let report = compare_with_channel(&grid)?;

    println!(
        "{:<8} {:>8} {:>24}  verdict",
        "E_d", "points", "max deviation"
    );
    for &e_d in &misalignments {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.e_d == e_d).collect();
        let worst = rows.iter().map(|r| r.deviation()).fold(0.0, f64::max);
        println!(
            "{e_d:<8} {:>8} {:>24}  {}",
            rows.len(),
            num(worst),
            if worst <= tolerance { "PASS" } else { "FAIL" }
        );
    }
    let worst = report.max_deviation();
    let pass = report.passes(tolerance);
    println!(
        "{}: max deviation {} (tolerance {tolerance:e})",
        if pass { "PASS" } else { "FAIL" },
        num(worst)
    );

    if let Some(path) = out {
        let mut csv =
            String::from("w_A,w_B,E_d,S_L_analytic,S_R_analytic,S_L_oracle,S_R_oracle,deviation\n");
        for r in &report.rows {
            let fields = [
                r.w_a,
                r.w_b,
                r.e_d,
                r.analytic.0,
                r.analytic.1,
                r.oracle.0,
                r.oracle.1,
                r.deviation(),
            ];
            csv.push_str(&fields.map(num).join(","));
            csv.push('\n');
        }
        fs::write(path, csv).map_err(|e| CliError::io(path, e))?;
        write_sidecar(
            path,
            "oracle-check",
            &effective,
            json!({ "E_d": misalignments, "points": points, "tolerance": tolerance, "n_max": n_max }),
        )?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "oracle deviation {worst:e} exceeds tolerance {tolerance:e}"
        )))
    }
}
