use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use istn_offload::experiment::{
    parse_grid, run_cdf, run_sweep, summarize, write_cdf_comparison_csv, write_metrics_csv, write_summary_csv,
    SweepSpec, SweepVariable,
};
use istn_offload::pipeline::{feasibility_checks, solve_mode};
use istn_offload::satellite_assoc::{write_association_csv, AssociationProblem};
use istn_offload::scenario::{constellation_preset, load_scenario, NetworkMode, Scenario, PRESET_NAMES};
use istn_offload::terrestrial_alloc::write_sca_trace;
use istn_offload::{Error, Result};

/// Two-stage eMBB/URLLC offloading in an integrated satellite-terrestrial
/// network: allocation, association, delay analytics and simulation.
#[derive(Parser)]
#[command(name = "istn-offload", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve allocation and association for one scenario; prints a JSON report.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Override the scenario's mode (istn or terrestrial).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Capacity or load sweep; writes metrics.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// capacity (C_Ter in bit/s) or load (rho).
        #[arg(long, default_value = "capacity")]
        variable: String,
        /// Comma list or start:stop:step; defaults to 10..100 Mbps or 0.1..0.9.
        #[arg(long)]
        grid: Option<String>,
        /// Constellation presets, comma separated.
        #[arg(long, default_value = "Telsat,OneWeb,SpaceX")]
        presets: String,
        /// istn, terrestrial or both.
        #[arg(long, default_value = "both")]
        mode: String,
        /// Seeds as a comma list or an inclusive range a:b.
        #[arg(long, default_value = "1:5")]
        seeds: String,
        /// Load held fixed in a capacity sweep.
        #[arg(long, default_value_t = 0.8)]
        fixed_rho: f64,
        /// C_Ter in bit/s held fixed in a load sweep.
        #[arg(long, default_value_t = 20e6)]
        fixed_capacity: f64,
        /// Worker threads.
        #[arg(long, env = "ISTN_OFFLOAD_WORKERS")]
        workers: Option<usize>,
    },
    /// Empirical vs analytic sojourn CDF in both modes (exponential service).
    Cdf {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Grid points in the emitted CSV.
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// List the constellation presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; the Telsat defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(p) => load_scenario(p),
            None => Scenario::with_preset("Telsat"),
        }
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(d) = &self.out_dir {
            fs::create_dir_all(d).map_err(|e| Error::Io {
                path: d.clone(),
                source: e,
            })?;
        }
        Ok(self.out_dir.as_deref())
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io { path, source: e })
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("bad seed list {text:?}"));
    if let Some((a, b)) = text.split_once(':') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_modes(text: &str) -> Result<Vec<NetworkMode>> {
    match text.to_ascii_lowercase().as_str() {
        "both" => Ok(vec![NetworkMode::Istn, NetworkMode::TerrestrialBenchmark]),
        other => other.split(',').map(|m| NetworkMode::parse(m.trim())).collect(),
    }
}

fn cmd_solve(common: &Common, mode: Option<&str>) -> Result<bool> {
    let mut s = common.scenario()?;
    if let Some(m) = mode {
        s.mode = NetworkMode::parse(m)?;
    }
    let r = solve_mode(&s, s.mode)?;
    let checks = feasibility_checks(&s, &r);
    let all_pass = checks.iter().all(|c| c.pass);
    let n = r.cells.len();
    let (alpha, beta) = match &r.association {
        Some(a) => (a.alpha.clone(), a.beta.clone()),
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let cells: Vec<Value> = r
        .cells
        .iter()
        .map(|c| {
            json!({
                "sbs": c.sbs,
                "embb_bandwidth_hz": c.problem.b,
                "punctured_hz": c.solution.f_star,
                "l_e_star_bps": c.solution.l_e_star,
                "l_u_star_bps": c.solution.l_u_star,
                "sca_iterations": c.solution.iterations,
                "sca_converged": c.solution.converged,
                "residual_embb_bps": c.residual_embb_bps,
                "rho": c.rho,
                "lambda_pkt_per_s": c.queue.lambda,
                "mu_pkt_per_s": c.queue.mu,
                "mean_wait_s": c.analytic.map(|a| a.mean_wait),
                "mean_sojourn_s": c.analytic.map(|a| a.mean_sojourn),
            })
        })
        .collect();
    let report = json!({
        "preset": s.constellation.name,
        "mode": r.mode.label(),
        "num_sbs": n,
        "backhaul_capacity_bps": s.terrestrial.backhaul_capacity_bps,
        "link_capacity_bps": r.link_capacity_bps,
        "target_load": s.target_load,
        "association": {
            "alpha": alpha,
            "alpha_sum": alpha.iter().sum::<f64>(),
            "beta": beta,
            "offloaded_bps": r.association.as_ref().map(|a| a.offloaded.clone()),
            "objective": r.association.as_ref().map(|a| a.objective),
        },
        "cells": cells,
        "checks": checks,
        "all_checks_pass": all_pass,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?
    );
    if let Some(dir) = common.out_dir()? {
        write_json(dir, "solve.json", &report)?;
        for c in &r.cells {
            write_sca_trace(create(dir, &format!("sca_trace_cell{}.csv", c.sbs))?, &c.solution)?;
        }
        if let Some(a) = &r.association {
            let p = AssociationProblem::new(r.l_e_star(), r.l_u_star(), s.weights.clone(), &s.constellation)?;
            write_association_csv(create(dir, "association.csv")?, &p, a)?;
        }
    }
    Ok(all_pass)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    common: &Common,
    variable: &str,
    grid: Option<&str>,
    presets: &str,
    mode: &str,
    seeds: &str,
    fixed_rho: f64,
    fixed_capacity: f64,
    workers: Option<usize>,
) -> Result<bool> {
    let base = common.scenario()?;
    let variable = SweepVariable::parse(variable)?;
    let mut spec = SweepSpec::new(variable);
    if let Some(g) = grid {
        spec.grid = parse_grid(g)?;
    }
    spec.presets = presets.split(',').map(|p| p.trim().to_string()).collect();
    spec.modes = parse_modes(mode)?;
    spec.seeds = parse_seeds(seeds)?;
    spec.fixed_rho = fixed_rho;
    spec.fixed_capacity_bps = fixed_capacity;
    let rows = run_sweep(&base, &spec, workers)?;
    let summary = summarize(&rows);
    let dir = common.out_dir()?.unwrap_or(Path::new("."));
    write_metrics_csv(create(dir, "metrics.csv")?, &rows)?;
    write_summary_csv(create(dir, "summary.csv")?, &summary)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    eprintln!(
        "{} metric rows, {} summary rows, {failed} failed runs -> {}",
        rows.len(),
        summary.len(),
        dir.display()
    );
    Ok(true)
}

fn cmd_cdf(common: &Common, seed: u64, points: usize) -> Result<bool> {
    let s = common.scenario()?;
    let report = run_cdf(&s, seed, points)?;
    let dominated = report.rows.iter().all(|r| r[1] >= r[3] && r[2] >= r[4]);
    let summary = json!({
        "preset": s.constellation.name,
        "seed": seed,
        "istn": report.istn,
        "terrestrial": report.terrestrial,
        "istn_cdf_above_terrestrial": dominated,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?
    );
    let dir = common.out_dir()?.unwrap_or(Path::new("."));
    write_cdf_comparison_csv(create(dir, "cdf.csv")?, &report)?;
    write_json(dir, "cdf_ks.json", &summary)?;
    Ok(true)
}

fn cmd_presets() -> Result<bool> {
    println!("name,beam_bandwidth_hz,sat_capacity_bps,carrier_to_noise_db");
    for name in PRESET_NAMES {
        let c = constellation_preset(name)?;
        println!(
            "{},{},{},{}",
            c.name, c.beam_bandwidth_hz, c.sat_capacity_bps, c.carrier_to_noise_db
        );
    }
    Ok(true)
}

/// 2 for bad input or configuration, 1 for solver and simulation failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Parse(_)
        | Error::Validation(_)
        | Error::UnknownPreset(_)
        | Error::InvalidInput(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { common, mode } => cmd_solve(common, mode.as_deref()),
        Command::Sweep {
            common,
            variable,
            grid,
            presets,
            mode,
            seeds,
            fixed_rho,
            fixed_capacity,
            workers,
        } => cmd_sweep(
            common,
            variable,
            grid.as_deref(),
            presets,
            mode,
            seeds,
            *fixed_rho,
            *fixed_capacity,
            *workers,
        ),
        Command::Cdf { common, seed, points } => cmd_cdf(common, *seed, *points),
        Command::Presets => cmd_presets(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some feasibility checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
