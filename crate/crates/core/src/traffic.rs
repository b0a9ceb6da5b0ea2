//! eMBB and URLLC demand processes.
//!
//! eMBB packets form a Poisson stream. URLLC demand is an offered bit rate
//! redrawn every slot from a Pareto law, then packetized deterministically:
//! `floor(rate * slot / size)` packets spaced evenly across the slot.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PacketClass {
    Embb,
    Urllc,
}

impl PacketClass {
    pub fn label(self) -> &'static str {
        match self {
            PacketClass::Embb => "embb",
            PacketClass::Urllc => "urllc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketArrival {
    pub time: f64,
    pub size_bits: f64,
    pub class: PacketClass,
    pub sbs: usize,
}

/// Offered rates of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandSample {
    pub slot_index: usize,
    pub embb_rate_bps: f64,
    pub urllc_rate_bps: f64,
}

/// F_D^{-1}(1 - eps) = x_m / eps^(1/a): the URLLC rate exceeded with
/// probability eps.
pub fn pareto_quantile(eps: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "outage epsilon must lie in (0, 1), got {eps}"
        )));
    }
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::InvalidInput("Pareto shape and scale must be > 0".into()));
    }
    Ok(scale / eps.powf(1.0 / shape))
}

/// Inverse CDF of Pareto(a, x_m) at `u` in [0, 1).
pub fn pareto_inverse_cdf(u: f64, shape: f64, scale: f64) -> f64 {
    scale / (1.0 - u).powf(1.0 / shape)
}

/// CDF of Pareto(a, x_m).
pub fn pareto_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x < scale {
        0.0
    } else {
        1.0 - (scale / x).powf(shape)
    }
}

pub fn sample_pareto<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    pareto_inverse_cdf(rng.random::<f64>(), shape, scale)
}

/// Per-slot URLLC offered rates: i.i.d. Pareto draws clipped at `cap`.
pub fn gen_urllc_demand<R: Rng + ?Sized>(shape: f64, scale: f64, num_slots: usize, cap: f64, rng: &mut R) -> Vec<f64> {
    (0..num_slots)
        .map(|_| sample_pareto(shape, scale, rng).min(cap))
        .collect()
}

/// Slot-by-slot demand table with a constant eMBB rate.
pub fn gen_demand<R: Rng + ?Sized>(
    embb_rate_bps: f64,
    shape: f64,
    scale: f64,
    num_slots: usize,
    cap: f64,
    rng: &mut R,
) -> Vec<DemandSample> {
    gen_urllc_demand(shape, scale, num_slots, cap, rng)
        .into_iter()
        .enumerate()
        .map(|(slot_index, urllc_rate_bps)| DemandSample {
            slot_index,
            embb_rate_bps,
            urllc_rate_bps,
        })
        .collect()
}

/// Lazily generated Poisson eMBB packet stream on `[0, horizon)`.
pub struct EmbbStream<R> {
    packet_rate: f64,
    packet_bits: f64,
    horizon: f64,
    sbs: usize,
    now: f64,
    rng: R,
}

impl<R: Rng> EmbbStream<R> {
    pub fn new(rate_bps: f64, packet_bits: f64, horizon: f64, sbs: usize, rng: R) -> Self {
        EmbbStream {
            packet_rate: rate_bps.max(0.0) / packet_bits,
            packet_bits,
            horizon,
            sbs,
            now: 0.0,
            rng,
        }
    }
}

impl<R: Rng> Iterator for EmbbStream<R> {
    type Item = PacketArrival;

    fn next(&mut self) -> Option<PacketArrival> {
        if self.packet_rate <= 0.0 {
            return None;
        }
        let u: f64 = self.rng.random();
        self.now += -(1.0 - u).ln() / self.packet_rate;
        if self.now >= self.horizon {
            self.packet_rate = 0.0;
            return None;
        }
        Some(PacketArrival {
            time: self.now,
            size_bits: self.packet_bits,
            class: PacketClass::Embb,
            sbs: self.sbs,
        })
    }
}

/// Poisson eMBB stream with mean inter-arrival `packet_bits / rate`.
pub fn gen_embb_stream<R: Rng>(rate_bps: f64, packet_bits: f64, horizon: f64, rng: R) -> Vec<PacketArrival> {
    EmbbStream::new(rate_bps, packet_bits, horizon, 0, rng).collect()
}

/// Number of URLLC packets carried by `rate` over one slot.
pub fn packets_in_slot(rate_bps: f64, slot_s: f64, packet_bits: f64) -> u64 {
    (rate_bps * slot_s / packet_bits).floor().max(0.0) as u64
}

/// URLLC packets from a per-slot admitted-rate sequence.
pub struct UrllcStream {
    rates: Vec<f64>,
    slot_s: f64,
    packet_bits: f64,
    horizon: f64,
    sbs: usize,
    slot: usize,
    index: u64,
    count: u64,
}

impl UrllcStream {
    pub fn new(rates: Vec<f64>, slot_s: f64, packet_bits: f64, horizon: f64, sbs: usize) -> Self {
        let count = rates.first().map_or(0, |&r| packets_in_slot(r, slot_s, packet_bits));
        UrllcStream {
            rates,
            slot_s,
            packet_bits,
            horizon,
            sbs,
            slot: 0,
            index: 0,
            count,
        }
    }
}

impl Iterator for UrllcStream {
    type Item = PacketArrival;

    fn next(&mut self) -> Option<PacketArrival> {
        while self.index >= self.count {
            self.slot += 1;
            if self.slot >= self.rates.len() {
                return None;
            }
            self.index = 0;
            self.count = packets_in_slot(self.rates[self.slot], self.slot_s, self.packet_bits);
        }
        let start = self.slot as f64 * self.slot_s;
        let time = start + self.index as f64 * self.slot_s / self.count as f64;
        self.index += 1;
        if time >= self.horizon {
            self.rates.clear();
            return None;
        }
        Some(PacketArrival {
            time,
            size_bits: self.packet_bits,
            class: PacketClass::Urllc,
            sbs: self.sbs,
        })
    }
}

/// Writes arrivals as `time_s,class,size_bits,sbs`.
pub fn write_trace_csv<W: Write>(out: W, arrivals: &[PacketArrival]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "class", "size_bits", "sbs"])?;
    for a in arrivals {
        w.write_record([
            crate::csvfmt::num(a.time),
            a.class.label().to_string(),
            crate::csvfmt::num(a.size_bits),
            a.sbs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("trace csv", e))?;
    Ok(())
}
