mod common;

use istn_offload::scenario::ServiceLaw;
use istn_offload::simulator::{
    mm1_calibration, run_queue, simulate_cells, stream_rng, CellLoad, QueueConfig, SimConfig, SimOptions,
};
use istn_offload::traffic::{PacketArrival, PacketClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::lindley_departures;

fn random_arrivals(n: usize, seed: u64) -> Vec<PacketArrival> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += -1e-3 * (1.0 - rng.random::<f64>()).ln();
            let urllc = rng.random::<f64>() < 0.3;
            PacketArrival {
                time: t,
                size_bits: if urllc {
                    240.0
                } else {
                    rng.random_range(400.0..1600.0f64).round()
                },
                class: if urllc { PacketClass::Urllc } else { PacketClass::Embb },
                sbs: 0,
            }
        })
        .collect()
}

fn open_window(capacity_bps: f64) -> QueueConfig {
    QueueConfig {
        capacity_bps,
        service: ServiceLaw::Deterministic,
        drop_depth_s: f64::INFINITY,
        window_start: 0.0,
        window_end: f64::INFINITY,
    }
}

#[test]
fn departures_follow_the_lindley_recursion() {
    let arrivals = random_arrivals(20_000, 5);
    let c = 1.0e6;
    let out = run_queue(
        arrivals.iter().copied(),
        &open_window(c),
        &mut stream_rng(1, 0, 0),
        true,
        |_, _| {},
    );
    let services: Vec<f64> = arrivals.iter().map(|p| p.size_bits / c).collect();
    let times: Vec<f64> = arrivals.iter().map(|p| p.time).collect();
    let expect = lindley_departures(&times, &services);
    assert_eq!(out.departures.len(), expect.len());
    for (d, e) in out.departures.iter().zip(&expect) {
        assert!((d.departure - e).abs() <= 1e-12 * e.max(1.0), "{} vs {e}", d.departure);
    }
}

#[test]
fn service_is_first_come_first_served() {
    let arrivals = random_arrivals(5_000, 6);
    let mut cfg = open_window(0.9e6);
    cfg.service = ServiceLaw::Exponential;
    let out = run_queue(
        arrivals.iter().copied(),
        &cfg,
        &mut stream_rng(2, 0, 0),
        true,
        |_, _| {},
    );
    for w in out.departures.windows(2) {
        assert!(w[0].arrival <= w[1].arrival);
        assert!(w[0].departure <= w[1].departure);
        assert!(w[0].seq < w[1].seq);
    }
}

fn busy_config() -> SimConfig {
    SimConfig {
        horizon_s: 2.0,
        warmup_fraction: 0.1,
        drop_depth_s: 2e-3,
        service: ServiceLaw::Exponential,
        slot_length_s: 1e-3,
        embb_bits: 800.0,
        urllc_bits: 240.0,
        pareto_shape: 1.0,
        pareto_scale_bps: 2e4,
        urllc_enabled: true,
    }
}

fn busy_cells() -> Vec<CellLoad> {
    vec![
        CellLoad {
            embb_bps: 9.5e6,
            capacity_bps: 10e6,
            urllc_clip_bps: 12e6,
        },
        CellLoad {
            embb_bps: 4e6,
            capacity_bps: 10e6,
            urllc_clip_bps: 12e6,
        },
    ]
}

#[test]
fn packets_and_bits_are_conserved() {
    let m = simulate_cells(&busy_cells(), &busy_config(), 3, &SimOptions::default()).unwrap();
    for c in [m.embb, m.urllc] {
        assert_eq!(c.packets_in, c.packets_out + c.packets_dropped + c.packets_in_flight);
        assert_eq!(c.packets_in_flight, 0);
        assert_eq!(c.bits_in, c.bits_out + c.bits_dropped);
    }
    assert!(m.dropped_embb_bits > 0, "the overloaded cell should drop");
    assert_eq!(m.urllc.packets_dropped, 0);
    let offered = (m.embb.bits_in + m.urllc.bits_in) as f64 + m.blocked_urllc_bits;
    let expect = (m.embb.bits_out + m.urllc.bits_out) as f64 / offered;
    assert!((m.availability - expect).abs() < 1e-12);
    assert!(m.availability < 1.0);
}

#[test]
fn same_seed_same_run() {
    let a = simulate_cells(&busy_cells(), &busy_config(), 11, &SimOptions::default()).unwrap();
    let b = simulate_cells(&busy_cells(), &busy_config(), 11, &SimOptions::default()).unwrap();
    let c = simulate_cells(&busy_cells(), &busy_config(), 12, &SimOptions::default()).unwrap();
    assert_eq!(a.embb, b.embb);
    assert_eq!(a.urllc, b.urllc);
    assert_eq!(a.mean_urllc_delay_s, b.mean_urllc_delay_s);
    assert_eq!(a.delay_samples, b.delay_samples);
    assert_ne!(a.embb, c.embb);
}

#[test]
fn mm1_occupancy_is_stable_across_seeds() {
    let (lambda, mu) = (700.0, 1000.0);
    let rho: f64 = lambda / mu;
    let l = rho / (1.0 - rho);
    let runs: Vec<f64> = (1..=8)
        .map(|s| mm1_calibration(lambda, mu, 200_000, s).unwrap().mean_in_system)
        .collect();
    let mean = runs.iter().sum::<f64>() / 8.0;
    let sd = (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
    assert!(
        (mean - l).abs() <= 3.0 * sd / 8f64.sqrt(),
        "mean {mean} vs {l} (sd {sd})"
    );
}

#[test]
fn mm1_sojourn_within_two_percent() {
    let (lambda, mu) = (500.0, 1000.0);
    let c = mm1_calibration(lambda, mu, 500_000, 21).unwrap();
    let expect = 1.0 / (mu - lambda);
    assert!(
        (c.mean_sojourn - expect).abs() <= 0.02 * expect,
        "{} vs {expect}",
        c.mean_sojourn
    );
    assert!(c.delivered > 400_000);
}
