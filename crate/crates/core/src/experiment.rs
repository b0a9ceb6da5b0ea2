//! Parameter sweeps and the delay-CDF comparison.
//!
//! A sweep solves every (preset, mode, grid point) once and then simulates
//! it under each seed. Channels come from the scenario's own `rng_seed`, so
//! the seeds vary the traffic only. Jobs run on a worker pool and the rows
//! are assembled in grid order, which makes the CSVs independent of
//! scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::csvfmt::num;
use crate::error::{Error, Result};
use crate::pipeline::{solve_mode, PipelineResult};
use crate::queueing::{mixture_sojourn_cdf, AnalyticDelay};
use crate::scenario::{constellation_preset, NetworkMode, Scenario, ServiceLaw};
use crate::simulator::{run_sim_with, SimMetrics, SimOptions};
use crate::stats::{empirical_cdf, ks_statistic, mean_std, step_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVariable {
    /// Backhaul capacity C_Ter in bit/s, at a fixed load.
    Capacity,
    /// Target link load, at a fixed C_Ter.
    Load,
}

impl SweepVariable {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "capacity" => Ok(SweepVariable::Capacity),
            "load" => Ok(SweepVariable::Load),
            other => Err(Error::Parse(format!(
                "unknown sweep variable {other:?} (capacity or load)"
            ))),
        }
    }

    /// 10..100 Mbps, or loads 0.1..0.9.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepVariable::Capacity => (1..=10).map(|k| k as f64 * 10e6).collect(),
            SweepVariable::Load => (1..=9).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub presets: Vec<String>,
    pub modes: Vec<NetworkMode>,
    pub seeds: Vec<u64>,
    /// Load held fixed in a capacity sweep.
    pub fixed_rho: f64,
    /// C_Ter held fixed in a load sweep.
    pub fixed_capacity_bps: f64,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable) -> Self {
        SweepSpec {
            variable,
            grid: variable.default_grid(),
            presets: crate::scenario::PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            modes: vec![NetworkMode::Istn, NetworkMode::TerrestrialBenchmark],
            seeds: vec![1, 2, 3, 4, 5],
            fixed_rho: 0.8,
            fixed_capacity_bps: 20e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Validation("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "sweep grid must be finite and strictly increasing".into(),
            ));
        }
        match self.variable {
            SweepVariable::Capacity if self.grid[0] <= 0.0 => {
                return Err(Error::Validation("capacity grid values must be > 0".into()));
            }
            SweepVariable::Load if self.grid[0] <= 0.0 || *self.grid.last().unwrap() >= 1.0 => {
                return Err(Error::Validation("load grid values must lie in (0, 1)".into()));
            }
            _ => {}
        }
        if self.presets.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Validation(
                "sweep needs at least one preset, mode and seed".into(),
            ));
        }
        for p in &self.presets {
            constellation_preset(p)?;
        }
        if !(self.fixed_rho > 0.0 && self.fixed_rho < 1.0) {
            return Err(Error::Validation("fixed load must lie in (0, 1)".into()));
        }
        if !(self.fixed_capacity_bps > 0.0) {
            return Err(Error::Validation("fixed capacity must be > 0".into()));
        }
        Ok(())
    }

    /// `(C_Ter, rho)` of grid point `k`.
    fn point(&self, k: usize) -> (f64, f64) {
        match self.variable {
            SweepVariable::Capacity => (self.grid[k], self.fixed_rho),
            SweepVariable::Load => (self.fixed_capacity_bps, self.grid[k]),
        }
    }
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |s: &str| Error::Parse(format!("bad grid value {s:?}"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
            .collect::<Result<_>>()?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(Error::Parse(format!("bad grid range {text:?}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| start + k as f64 * step).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| bad(s)))
        .collect()
}

/// One simulated (preset, mode, point, seed).
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub mode: NetworkMode,
    pub preset: String,
    pub c_ter_bps: f64,
    pub rho: f64,
    pub seed: u64,
    pub mean_urllc_delay_s: Option<f64>,
    pub dropped_embb_bits: Option<u64>,
    pub availability: Option<f64>,
    /// `ok`, or the error that stopped this run.
    pub status: String,
}

/// Seed average of one (preset, mode, point).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub mode: NetworkMode,
    pub preset: String,
    pub c_ter_bps: f64,
    pub rho: f64,
    pub runs: usize,
    pub mean_urllc_delay_s: (f64, f64),
    pub dropped_embb_bits: (f64, f64),
    pub availability: (f64, f64),
}

/// Scenario for one sweep point.
pub fn point_scenario(base: &Scenario, preset: &str, mode: NetworkMode, c_ter_bps: f64, rho: f64) -> Result<Scenario> {
    let mut s = base.clone();
    s.constellation = constellation_preset(preset)?;
    s.mode = mode;
    s.terrestrial.backhaul_capacity_bps = c_ter_bps;
    s.target_load = rho;
    s.validate()?;
    Ok(s)
}

/// Solves and simulates one scenario under one seed.
pub fn run_point(s: &Scenario, solved: &PipelineResult, seed: u64, opts: &SimOptions) -> Result<SimMetrics> {
    run_sim_with(
        s,
        &solved.allocations(),
        solved.association.as_ref(),
        s.sim.horizon_s,
        seed,
        opts,
    )
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Validation("workers must be >= 1".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Numerical(format!("worker pool: {e}")))
}

/// Runs the sweep; rows come out ordered by preset, mode, grid point, seed.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, workers: Option<usize>) -> Result<Vec<MetricRow>> {
    spec.validate()?;
    base.validate()?;
    let mut points = Vec::new();
    for preset in &spec.presets {
        for &mode in &spec.modes {
            for k in 0..spec.grid.len() {
                let (c, rho) = spec.point(k);
                points.push((preset.clone(), mode, c, rho));
            }
        }
    }
    let opts = SimOptions {
        sample_cap: 0,
        record_departures: false,
    };
    pool(workers)?.install(|| {
        let solved: Vec<Result<(Scenario, PipelineResult)>> = points
            .par_iter()
            .map(|(preset, mode, c, rho)| {
                let s = point_scenario(base, preset, *mode, *c, *rho)?;
                let r = solve_mode(&s, *mode)?;
                Ok((s, r))
            })
            .collect();
        let jobs: Vec<(usize, u64)> = (0..points.len())
            .flat_map(|p| spec.seeds.iter().map(move |&sd| (p, sd)))
            .collect();
        let rows = jobs
            .par_iter()
            .map(|&(p, seed)| {
                let (preset, mode, c, rho) = &points[p];
                let mut row = MetricRow {
                    mode: *mode,
                    preset: preset.clone(),
                    c_ter_bps: *c,
                    rho: *rho,
                    seed,
                    mean_urllc_delay_s: None,
                    dropped_embb_bits: None,
                    availability: None,
                    status: "ok".into(),
                };
                let outcome = match &solved[p] {
                    Ok((s, r)) => run_point(s, r, seed, &opts),
                    Err(e) => Err(Error::Numerical(e.to_string())),
                };
                match outcome {
                    Ok(m) => {
                        row.mean_urllc_delay_s = m.mean_urllc_delay_s;
                        row.dropped_embb_bits = Some(m.dropped_embb_bits);
                        row.availability = Some(m.availability);
                    }
                    Err(e) => row.status = e.to_string(),
                }
                row
            })
            .collect();
        Ok(rows)
    })
}

/// Mean and sample standard deviation over the successful seeds of each
/// point, in the order the points first appear.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let r = &rows[i];
        let mut j = i;
        while j < rows.len() && same_point(&rows[j], r) {
            j += 1;
        }
        let ok: Vec<&MetricRow> = rows[i..j].iter().filter(|x| x.status == "ok").collect();
        let delays: Vec<f64> = ok.iter().filter_map(|x| x.mean_urllc_delay_s).collect();
        let dropped: Vec<f64> = ok
            .iter()
            .filter_map(|x| x.dropped_embb_bits.map(|v| v as f64))
            .collect();
        let avail: Vec<f64> = ok.iter().filter_map(|x| x.availability).collect();
        out.push(SummaryRow {
            mode: r.mode,
            preset: r.preset.clone(),
            c_ter_bps: r.c_ter_bps,
            rho: r.rho,
            runs: ok.len(),
            mean_urllc_delay_s: mean_std(&delays),
            dropped_embb_bits: mean_std(&dropped),
            availability: mean_std(&avail),
        });
        i = j;
    }
    out
}

fn same_point(a: &MetricRow, b: &MetricRow) -> bool {
    a.mode == b.mode && a.preset == b.preset && a.c_ter_bps == b.c_ter_bps && a.rho == b.rho
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `mode,preset,C_Ter_bps,rho,seed,mean_urllc_delay_s,dropped_embb_bits,availability,status`
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode",
        "preset",
        "C_Ter_bps",
        "rho",
        "seed",
        "mean_urllc_delay_s",
        "dropped_embb_bits",
        "availability",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.mode.label().to_string(),
            r.preset.clone(),
            num(r.c_ter_bps),
            num(r.rho),
            r.seed.to_string(),
            opt_num(r.mean_urllc_delay_s),
            r.dropped_embb_bits.map(|v| v.to_string()).unwrap_or_default(),
            opt_num(r.availability),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("metrics csv", e))?;
    Ok(())
}

/// Seed-averaged rows; every metric gets a `_mean` and a `_std` column.
pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode",
        "preset",
        "C_Ter_bps",
        "rho",
        "runs",
        "mean_urllc_delay_s_mean",
        "mean_urllc_delay_s_std",
        "dropped_embb_bits_mean",
        "dropped_embb_bits_std",
        "availability_mean",
        "availability_std",
    ])?;
    let cell = |v: f64| if v.is_finite() { num(v) } else { String::new() };
    for r in rows {
        w.write_record([
            r.mode.label().to_string(),
            r.preset.clone(),
            num(r.c_ter_bps),
            num(r.rho),
            r.runs.to_string(),
            cell(r.mean_urllc_delay_s.0),
            cell(r.mean_urllc_delay_s.1),
            cell(r.dropped_embb_bits.0),
            cell(r.dropped_embb_bits.1),
            cell(r.availability.0),
            cell(r.availability.1),
        ])?;
    }
    w.flush().map_err(|e| Error::io("summary csv", e))?;
    Ok(())
}

/// Empirical and analytic sojourn distribution of one mode.
#[derive(Debug, Clone, Serialize)]
pub struct ModeCdf {
    pub mode: NetworkMode,
    pub horizon_s: f64,
    pub delivered: u64,
    pub ks: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
    /// Per-cell analytic delays and the share of delivered packets per cell.
    #[serde(skip)]
    pub delays: Vec<AnalyticDelay>,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl ModeCdf {
    pub fn analytic(&self, x: f64) -> f64 {
        mixture_sojourn_cdf(x, &self.weights, &self.delays)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfReport {
    pub istn: ModeCdf,
    pub terrestrial: ModeCdf,
    /// `(x, empirical_ISTN, analytic_ISTN, empirical_Ter, analytic_Ter)`.
    #[serde(skip)]
    pub rows: Vec<[f64; 5]>,
}

/// Fewest delivered packets per mode for a CDF comparison.
pub const CDF_MIN_DELIVERED: u64 = 100_000;

fn mode_cdf(base: &Scenario, mode: NetworkMode, seed: u64, sample_cap: usize) -> Result<ModeCdf> {
    let mut s = base.clone();
    s.mode = mode;
    s.sim.service = ServiceLaw::Exponential;
    let solved = solve_mode(&s, mode)?;
    let delays: Vec<AnalyticDelay> = solved
        .cells
        .iter()
        .map(|c| c.analytic.ok_or(Error::Unstable { rho: c.queue.rho }))
        .collect::<Result<_>>()?;
    let opts = SimOptions {
        sample_cap,
        record_departures: false,
    };
    let mut m = run_point(&s, &solved, seed, &opts)?;
    // lengthen the run until enough packets are delivered
    for _ in 0..8 {
        let delivered: u64 = m.delivered_per_cell.iter().sum();
        if delivered >= CDF_MIN_DELIVERED || delivered == 0 {
            break;
        }
        s.sim.horizon_s *= 2.0;
        m = run_point(&s, &solved, seed, &opts)?;
    }
    let delivered: u64 = m.delivered_per_cell.iter().sum();
    if delivered == 0 || m.delay_samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let weights: Vec<f64> = m
        .delivered_per_cell
        .iter()
        .map(|&d| d as f64 / delivered as f64)
        .collect();
    let ks = ks_statistic(&m.delay_samples, |x| mixture_sojourn_cdf(x, &weights, &delays))?;
    Ok(ModeCdf {
        mode,
        horizon_s: s.sim.horizon_s,
        delivered,
        ks,
        samples: m.delay_samples,
        delays,
        weights,
    })
}

/// Simulates both modes with exponential service and compares the pooled
/// sojourn samples with the analytic CDF on a `points`-point grid.
pub fn run_cdf(base: &Scenario, seed: u64, points: usize) -> Result<CdfReport> {
    base.validate()?;
    if points < 2 {
        return Err(Error::InvalidInput("CDF grid needs at least 2 points".into()));
    }
    let cap = CDF_MIN_DELIVERED as usize;
    let (istn, terrestrial) = rayon::join(
        || mode_cdf(base, NetworkMode::Istn, seed, cap),
        || mode_cdf(base, NetworkMode::TerrestrialBenchmark, seed, cap),
    );
    let (istn, terrestrial) = (istn?, terrestrial?);
    let e_istn = empirical_cdf(&istn.samples)?;
    let e_ter = empirical_cdf(&terrestrial.samples)?;
    // grid up to the 99.9th percentile of the slower mode
    let upper = [&istn.samples, &terrestrial.samples]
        .iter()
        .map(|s| quantile(s, 0.999))
        .fold(0.0, f64::max);
    let rows = (0..points)
        .map(|k| {
            let x = upper * k as f64 / (points - 1) as f64;
            [
                x,
                step_value(&e_istn, x),
                istn.analytic(x),
                step_value(&e_ter, x),
                terrestrial.analytic(x),
            ]
        })
        .collect();
    Ok(CdfReport {
        istn,
        terrestrial,
        rows,
    })
}

fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((s.len() as f64 * q).ceil() as usize).clamp(1, s.len()) - 1;
    s[k]
}

/// `x_seconds,empirical_ISTN,analytic_ISTN,empirical_Ter,analytic_Ter`
pub fn write_cdf_comparison_csv<W: Write>(out: W, report: &CdfReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "x_seconds",
        "empirical_ISTN",
        "analytic_ISTN",
        "empirical_Ter",
        "analytic_Ter",
    ])?;
    for r in &report.rows {
        w.write_record(r.iter().map(|&v| num(v)))?;
    }
    w.flush().map_err(|e| Error::io("cdf csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1,2, 3").unwrap(), vec![1.0, 2.0, 3.0]);
        let g = parse_grid("1e7:1e8:1e7").unwrap();
        assert_eq!(g.len(), 10);
        assert!((g[9] - 1e8).abs() < 1e-3);
        assert!(parse_grid("0.1:0.9:0.1").unwrap().len() == 9);
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:0:1").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec::new(SweepVariable::Capacity);
        s.validate().unwrap();
        s.grid = vec![2.0, 1.0];
        assert!(s.validate().is_err());
        s.grid = vec![];
        assert!(s.validate().is_err());
        let mut l = SweepSpec::new(SweepVariable::Load);
        l.validate().unwrap();
        l.grid = vec![0.5, 1.0];
        assert!(l.validate().is_err());
        l.grid = vec![0.5];
        l.presets = vec!["Nope".into()];
        assert!(l.validate().is_err());
    }

    #[test]
    fn summary_groups_consecutive_points() {
        let row = |seed, delay: f64, status: &str| MetricRow {
            mode: NetworkMode::Istn,
            preset: "Telsat".into(),
            c_ter_bps: 1.0,
            rho: 0.5,
            seed,
            mean_urllc_delay_s: Some(delay),
            dropped_embb_bits: Some(10),
            availability: Some(1.0),
            status: status.into(),
        };
        let mut rows = vec![row(1, 1.0, "ok"), row(2, 3.0, "ok"), row(3, 100.0, "failed")];
        let mut other = row(1, 5.0, "ok");
        other.rho = 0.6;
        rows.push(other);
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].runs, 2);
        assert_eq!(s[0].mean_urllc_delay_s.0, 2.0);
        assert!((s[0].mean_urllc_delay_s.1 - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].runs, 1);
    }
}
