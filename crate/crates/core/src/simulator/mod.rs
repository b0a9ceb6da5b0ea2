//! Packet-level simulation of every SBS backhaul as one FCFS server.
//!
//! eMBB packets arrive as a Poisson stream at the cell's terrestrial eMBB
//! rate. URLLC demand is redrawn per slot from the Pareto law, admitted up to
//! the link capacity, and packetized evenly over the slot. Each cell has its
//! own random streams, so the URLLC demand seen by the ISTN and benchmark
//! runs of one seed is identical.

mod engine;

pub use engine::{run_queue, ClassCounts, Departure, EventKind, Merge, QueueConfig, QueueEvent, QueueOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::satellite_assoc::AssociationSolution;
use crate::scenario::{NetworkMode, Scenario, ServiceLaw};
use crate::terrestrial_alloc::PuncturingSolution;
use crate::traffic::{gen_urllc_demand, EmbbStream, PacketClass, UrllcStream};

pub use crate::stats::empirical_cdf;

const STREAM_EMBB: u64 = 0;
const STREAM_URLLC: u64 = 1;
const STREAM_SERVICE: u64 = 2;
const STREAM_RESERVOIR: u64 = 3;

/// Independent random stream `purpose` of cell `cell` under `seed`.
pub fn stream_rng(seed: u64, cell: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 8) | purpose);
    rng
}

/// Equivalent terrestrial capacity of the benchmark: an equal share of the
/// satellite capacity added to every cell.
pub fn benchmark_capacity(c_ter: f64, c_sat: f64, num_sbs: usize) -> Result<f64> {
    if num_sbs == 0 {
        return Err(Error::InvalidInput("benchmark capacity needs N >= 1".into()));
    }
    Ok(c_ter + c_sat / num_sbs as f64)
}

/// URLLC admission: `(accepted, blocked)` rates; demand above the link
/// capacity is blocked.
pub fn admit_urllc(offered_bps: f64, capacity_bps: f64) -> (f64, f64) {
    let accepted = offered_bps.min(capacity_bps).max(0.0);
    (accepted, (offered_bps - accepted).max(0.0))
}

/// Offered traffic and link of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellLoad {
    pub embb_bps: f64,
    pub capacity_bps: f64,
    /// Clip applied to each Pareto draw before admission.
    pub urllc_clip_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon_s: f64,
    pub warmup_fraction: f64,
    pub drop_depth_s: f64,
    pub service: ServiceLaw,
    pub slot_length_s: f64,
    pub embb_bits: f64,
    pub urllc_bits: f64,
    pub pareto_shape: f64,
    pub pareto_scale_bps: f64,
    /// Disables URLLC traffic when false (calibration runs).
    pub urllc_enabled: bool,
}

impl SimConfig {
    pub fn from_scenario(s: &Scenario, horizon_s: f64) -> Self {
        SimConfig {
            horizon_s,
            warmup_fraction: s.sim.warmup_fraction,
            drop_depth_s: s.sim.drop_depth_s,
            service: s.sim.service,
            slot_length_s: s.sim.slot_length_s,
            embb_bits: s.terrestrial.embb_packet_bits,
            urllc_bits: s.terrestrial.urllc_packet_bits,
            pareto_shape: s.pareto_shape,
            pareto_scale_bps: s.pareto_scale_bps(),
            urllc_enabled: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon_s > 0.0) {
            return Err(Error::InvalidInput("horizon must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidInput("warm-up fraction must lie in [0, 1)".into()));
        }
        if !(self.slot_length_s > 0.0 && self.embb_bits > 0.0 && self.urllc_bits > 0.0) {
            return Err(Error::InvalidInput("slot length and packet sizes must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    /// Size of the uniform reservoir of delivered-packet delays (0 = none).
    pub sample_cap: usize,
    pub record_departures: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            sample_cap: 100_000,
            record_departures: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimMetrics {
    /// `None` when no URLLC packet was delivered in the window.
    pub mean_urllc_delay_s: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub dropped_embb_bits: u64,
    pub blocked_urllc_bits: f64,
    /// Delivered bits over offered bits, blocked URLLC demand included.
    pub availability: f64,
    pub embb: ClassCounts,
    pub urllc: ClassCounts,
    /// Uniform sample of delivered-packet sojourn times, all cells pooled.
    pub delay_samples: Vec<f64>,
    pub delivered_per_cell: Vec<u64>,
    pub mean_in_system_per_cell: Vec<f64>,
    #[serde(skip)]
    pub departures: Vec<Vec<Departure>>,
}

struct Reservoir {
    cap: usize,
    seen: u64,
    items: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Reservoir {
    fn offer(&mut self, v: f64) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(v);
        } else if self.cap > 0 {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.cap {
                self.items[j as usize] = v;
            }
        }
    }
}

/// Simulates every cell over `[0, horizon)` and drains the queues.
pub fn simulate_cells(cells: &[CellLoad], cfg: &SimConfig, seed: u64, opts: &SimOptions) -> Result<SimMetrics> {
    cfg.validate()?;
    let window_start = cfg.warmup_fraction * cfg.horizon_s;
    let window_end = cfg.horizon_s;
    let mut reservoir = Reservoir {
        cap: opts.sample_cap,
        seen: 0,
        items: Vec::new(),
        rng: stream_rng(seed, usize::MAX >> 8, STREAM_RESERVOIR),
    };
    let mut embb = ClassCounts::default();
    let mut urllc = ClassCounts::default();
    let mut urllc_delay_sum = 0.0;
    let mut delay_sum = 0.0;
    let mut blocked_urllc_bits = 0.0;
    let mut delivered_per_cell = Vec::with_capacity(cells.len());
    let mut mean_in_system_per_cell = Vec::with_capacity(cells.len());
    let mut departures = Vec::new();

    for (i, cell) in cells.iter().enumerate() {
        if !(cell.capacity_bps > 0.0) || cell.embb_bps < 0.0 {
            return Err(Error::InvalidInput(format!(
                "cell {i}: capacity must be > 0 and eMBB rate >= 0"
            )));
        }
        let num_slots = (cfg.horizon_s / cfg.slot_length_s).ceil() as usize;
        let admitted: Vec<f64> = if cfg.urllc_enabled {
            let offered = gen_urllc_demand(
                cfg.pareto_shape,
                cfg.pareto_scale_bps,
                num_slots,
                cell.urllc_clip_bps,
                &mut stream_rng(seed, i, STREAM_URLLC),
            );
            offered
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let (acc, blocked) = admit_urllc(x, cell.capacity_bps);
                    let lo = (k as f64 * cfg.slot_length_s).max(window_start);
                    let hi = ((k + 1) as f64 * cfg.slot_length_s).min(window_end);
                    if hi > lo {
                        blocked_urllc_bits += blocked * (hi - lo);
                    }
                    acc
                })
                .collect()
        } else {
            Vec::new()
        };
        let embb_stream = EmbbStream::new(
            cell.embb_bps,
            cfg.embb_bits,
            cfg.horizon_s,
            i,
            stream_rng(seed, i, STREAM_EMBB),
        );
        let urllc_stream = UrllcStream::new(admitted, cfg.slot_length_s, cfg.urllc_bits, cfg.horizon_s, i);
        let qcfg = QueueConfig {
            capacity_bps: cell.capacity_bps,
            service: cfg.service,
            drop_depth_s: cfg.drop_depth_s,
            window_start,
            window_end,
        };
        let mut service_rng = stream_rng(seed, i, STREAM_SERVICE);
        let out = run_queue(
            Merge::new(embb_stream, urllc_stream),
            &qcfg,
            &mut service_rng,
            opts.record_departures,
            |d, _| reservoir.offer(d),
        );
        embb.add(&out.embb);
        urllc.add(&out.urllc);
        urllc_delay_sum += out.urllc_delay_sum;
        delay_sum += out.delay_sum;
        delivered_per_cell.push(out.delivered());
        mean_in_system_per_cell.push(out.mean_in_system);
        if opts.record_departures {
            departures.push(out.departures);
        }
    }

    let bits_in = embb.bits_in + urllc.bits_in;
    let bits_out = embb.bits_out + urllc.bits_out;
    let delivered = embb.packets_out + urllc.packets_out;
    Ok(SimMetrics {
        mean_urllc_delay_s: (urllc.packets_out > 0).then(|| urllc_delay_sum / urllc.packets_out as f64),
        mean_delay_s: (delivered > 0).then(|| delay_sum / delivered as f64),
        dropped_embb_bits: embb.bits_dropped,
        blocked_urllc_bits,
        // blocked URLLC demand was sent by the users, so it counts as offered
        availability: if bits_in == 0 && blocked_urllc_bits == 0.0 {
            1.0
        } else {
            bits_out as f64 / (bits_in as f64 + blocked_urllc_bits)
        },
        embb,
        urllc,
        delay_samples: reservoir.items,
        delivered_per_cell,
        mean_in_system_per_cell,
        departures,
    })
}

/// Per-cell loads of a solved scenario in the scenario's mode.
pub fn cell_loads_for(
    scenario: &Scenario,
    allocations: &[PuncturingSolution],
    association: Option<&AssociationSolution>,
) -> Result<Vec<CellLoad>> {
    let n = scenario.terrestrial.num_sbs;
    if allocations.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} cell allocations, got {}",
            allocations.len()
        )));
    }
    let c_ter = scenario.terrestrial.backhaul_capacity_bps;
    let c_bench = benchmark_capacity(c_ter, scenario.constellation.sat_capacity_bps, n)?;
    let (capacity, betas) = match (scenario.mode, association) {
        (NetworkMode::Istn, Some(a)) => {
            if a.beta.len() != n {
                return Err(Error::InvalidInput(
                    "association size does not match the cell count".into(),
                ));
            }
            (c_ter, a.beta.clone())
        }
        (NetworkMode::Istn, None) => {
            return Err(Error::InvalidInput("ISTN mode needs an association solution".into()));
        }
        (NetworkMode::TerrestrialBenchmark, None) => (c_bench, vec![0.0; n]),
        (NetworkMode::TerrestrialBenchmark, Some(_)) => {
            return Err(Error::InvalidInput(
                "the terrestrial benchmark offloads nothing; drop the association".into(),
            ));
        }
    };
    Ok(allocations
        .iter()
        .zip(&betas)
        .map(|(a, b)| CellLoad {
            embb_bps: (1.0 - b) * a.l_e_star,
            capacity_bps: capacity,
            urllc_clip_bps: c_bench,
        })
        .collect())
}

/// Simulates a solved scenario with the default sampling options.
pub fn run_sim(
    scenario: &Scenario,
    allocations: &[PuncturingSolution],
    association: Option<&AssociationSolution>,
    horizon_s: f64,
    seed: u64,
) -> Result<SimMetrics> {
    run_sim_with(
        scenario,
        allocations,
        association,
        horizon_s,
        seed,
        &SimOptions::default(),
    )
}

pub fn run_sim_with(
    scenario: &Scenario,
    allocations: &[PuncturingSolution],
    association: Option<&AssociationSolution>,
    horizon_s: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimMetrics> {
    let cells = cell_loads_for(scenario, allocations, association)?;
    simulate_cells(&cells, &SimConfig::from_scenario(scenario, horizon_s), seed, opts)
}

/// Outcome of an M/M/1 calibration run.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub mean_sojourn: f64,
    pub mean_in_system: f64,
    pub delivered: u64,
}

/// Single-class Poisson queue with exponential service and no dropping,
/// sized to deliver about `packets` packets after the 10% warm-up.
pub fn mm1_calibration(lambda: f64, mu: f64, packets: u64, seed: u64) -> Result<Calibration> {
    if !(lambda > 0.0 && mu > lambda) {
        return Err(Error::Unstable { rho: lambda / mu });
    }
    let bits = 1000.0;
    let warmup = 0.1;
    let cfg = SimConfig {
        horizon_s: packets as f64 / (lambda * (1.0 - warmup)),
        warmup_fraction: warmup,
        drop_depth_s: f64::INFINITY,
        service: ServiceLaw::Exponential,
        slot_length_s: 1.0,
        embb_bits: bits,
        urllc_bits: bits,
        pareto_shape: 1.0,
        pareto_scale_bps: 1.0,
        urllc_enabled: false,
    };
    let cell = CellLoad {
        embb_bps: lambda * bits,
        capacity_bps: mu * bits,
        urllc_clip_bps: 0.0,
    };
    let m = simulate_cells(
        &[cell],
        &cfg,
        seed,
        &SimOptions {
            sample_cap: 0,
            record_departures: false,
        },
    )?;
    Ok(Calibration {
        mean_sojourn: m.mean_delay_s.ok_or(Error::NoSamples)?,
        mean_in_system: m.mean_in_system_per_cell[0],
        delivered: m.embb.packets_out,
    })
}

/// Fraction of class-`class` packets delivered among those offered.
pub fn class_availability(c: &ClassCounts) -> f64 {
    if c.bits_in == 0 {
        1.0
    } else {
        c.bits_out as f64 / c.bits_in as f64
    }
}

/// Labels for packet classes in CSV output.
pub fn class_label(c: PacketClass) -> &'static str {
    c.label()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(horizon: f64) -> SimConfig {
        SimConfig {
            horizon_s: horizon,
            warmup_fraction: 0.1,
            drop_depth_s: 1.0,
            service: ServiceLaw::Deterministic,
            slot_length_s: 1.0,
            embb_bits: 800.0,
            urllc_bits: 240.0,
            pareto_shape: 1.0,
            pareto_scale_bps: 1e4,
            urllc_enabled: true,
        }
    }

    #[test]
    fn benchmark_capacity_examples() {
        assert!((benchmark_capacity(20e6, 558.7e6, 10).unwrap() - 75.87e6).abs() < 1.0);
        assert_eq!(benchmark_capacity(20e6, 5e6, 1).unwrap(), 25e6);
        assert_eq!(benchmark_capacity(20e6, 0.0, 4).unwrap(), 20e6);
        assert!(benchmark_capacity(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn admission_examples() {
        assert_eq!(admit_urllc(25e6, 20e6), (20e6, 5e6));
        assert_eq!(admit_urllc(5e6, 20e6), (5e6, 0.0));
        assert_eq!(admit_urllc(5e6, 0.0), (0.0, 5e6));
    }

    #[test]
    fn zero_traffic_is_fully_available() {
        let mut c = cfg(5.0);
        c.urllc_enabled = false;
        let cell = CellLoad {
            embb_bps: 0.0,
            capacity_bps: 1e6,
            urllc_clip_bps: 1e6,
        };
        let m = simulate_cells(&[cell], &c, 1, &SimOptions::default()).unwrap();
        assert_eq!(m.availability, 1.0);
        assert!(m.mean_urllc_delay_s.is_none());
        assert!(m.delay_samples.is_empty());
    }

    #[test]
    fn conservation_and_determinism() {
        let cells = [
            CellLoad {
                embb_bps: 15e6,
                capacity_bps: 20e6,
                urllc_clip_bps: 75e6,
            },
            CellLoad {
                embb_bps: 25e6,
                capacity_bps: 20e6,
                urllc_clip_bps: 75e6,
            },
        ];
        let a = simulate_cells(&cells, &cfg(5.0), 7, &SimOptions::default()).unwrap();
        let b = simulate_cells(&cells, &cfg(5.0), 7, &SimOptions::default()).unwrap();
        for c in [a.embb, a.urllc] {
            assert_eq!(c.packets_in, c.packets_out + c.packets_dropped);
            assert_eq!(c.packets_in_flight, 0);
            assert_eq!(c.bits_in, c.bits_out + c.bits_dropped);
        }
        assert_eq!(a.urllc.packets_dropped, 0);
        assert!(a.dropped_embb_bits > 0, "overloaded cell must drop");
        assert!(a.availability > 0.0 && a.availability < 1.0);
        assert_eq!(a.embb, b.embb);
        assert_eq!(a.delay_samples, b.delay_samples);
        assert_eq!(a.mean_urllc_delay_s, b.mean_urllc_delay_s);
        let c = simulate_cells(&cells, &cfg(5.0), 8, &SimOptions::default()).unwrap();
        assert_ne!(a.delay_samples, c.delay_samples);
    }

    #[test]
    fn reservoir_is_capped() {
        let cells = [CellLoad {
            embb_bps: 5e6,
            capacity_bps: 20e6,
            urllc_clip_bps: 20e6,
        }];
        let m = simulate_cells(
            &cells,
            &cfg(2.0),
            3,
            &SimOptions {
                sample_cap: 100,
                record_departures: false,
            },
        )
        .unwrap();
        assert_eq!(m.delay_samples.len(), 100);
    }

    #[test]
    fn mm1_short_run() {
        let c = mm1_calibration(500.0, 1000.0, 200_000, 11).unwrap();
        assert!((c.mean_sojourn / 2e-3 - 1.0).abs() < 0.05, "{}", c.mean_sojourn);
    }
}
