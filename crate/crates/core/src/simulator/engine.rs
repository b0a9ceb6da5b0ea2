//! Single FCFS server driven by an event heap.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scenario::ServiceLaw;
use crate::traffic::{PacketArrival, PacketClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueEvent {
    pub time: f64,
    pub kind: EventKind,
    pub seq: u64,
    pub packet: PacketArrival,
}

impl Eq for QueueEvent {}

impl Ord for QueueEvent {
    /// Reversed so that `BinaryHeap` pops the earliest event; arrivals go
    /// before departures at equal times, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueueEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassCounts {
    pub packets_in: u64,
    pub packets_out: u64,
    pub packets_dropped: u64,
    pub packets_in_flight: u64,
    pub bits_in: u64,
    pub bits_out: u64,
    pub bits_dropped: u64,
}

impl ClassCounts {
    pub fn add(&mut self, o: &ClassCounts) {
        self.packets_in += o.packets_in;
        self.packets_out += o.packets_out;
        self.packets_dropped += o.packets_dropped;
        self.packets_in_flight += o.packets_in_flight;
        self.bits_in += o.bits_in;
        self.bits_out += o.bits_out;
        self.bits_dropped += o.bits_dropped;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QueueConfig {
    pub capacity_bps: f64,
    pub service: ServiceLaw,
    /// Drop an arriving eMBB packet when the unfinished work exceeds this.
    pub drop_depth_s: f64,
    /// Statistics cover arrivals in `[window_start, window_end)`.
    pub window_start: f64,
    pub window_end: f64,
}

/// Everything one queue run reports; counters cover the window only.
#[derive(Debug, Clone, Default)]
pub struct QueueOutcome {
    pub embb: ClassCounts,
    pub urllc: ClassCounts,
    pub urllc_delay_sum: f64,
    pub delay_sum: f64,
    /// Time-average number in system over the window.
    pub mean_in_system: f64,
    pub departures: Vec<Departure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Departure {
    pub seq: u64,
    pub class: PacketClass,
    pub arrival: f64,
    pub departure: f64,
}

impl QueueOutcome {
    pub fn delivered(&self) -> u64 {
        self.embb.packets_out + self.urllc.packets_out
    }
}

struct Waiting {
    seq: u64,
    packet: PacketArrival,
    service: f64,
}

/// Runs the queue until every admitted packet has left. `on_delay` sees
/// each delivered in-window packet's sojourn time.
pub fn run_queue<I, F>(
    arrivals: I,
    cfg: &QueueConfig,
    service_rng: &mut ChaCha8Rng,
    record_departures: bool,
    mut on_delay: F,
) -> QueueOutcome
where
    I: Iterator<Item = PacketArrival>,
    F: FnMut(f64, PacketClass),
{
    let mut arrivals = arrivals.peekable();
    let mut heap = BinaryHeap::new();
    let mut queue: VecDeque<Waiting> = VecDeque::new();
    let mut out = QueueOutcome::default();
    let mut seq = 0u64;
    let mut busy_until = 0.0f64;
    let mut in_service: Option<Waiting> = None;
    let mut in_system = 0u64;
    let mut last_t = cfg.window_start;
    let mut area = 0.0;

    let mut schedule_next_arrival = |heap: &mut BinaryHeap<QueueEvent>, seq: &mut u64| {
        if let Some(p) = arrivals.next() {
            heap.push(QueueEvent {
                time: p.time,
                kind: EventKind::Arrival,
                seq: *seq,
                packet: p,
            });
            *seq += 1;
        }
    };
    schedule_next_arrival(&mut heap, &mut seq);

    let in_window = |t: f64| t >= cfg.window_start && t < cfg.window_end;

    while let Some(ev) = heap.pop() {
        // time-average occupancy, clipped to the window
        let t_lo = last_t.max(cfg.window_start);
        let t_hi = ev.time.min(cfg.window_end);
        if t_hi > t_lo {
            area += in_system as f64 * (t_hi - t_lo);
        }
        last_t = ev.time;

        match ev.kind {
            EventKind::Arrival => {
                let p = ev.packet;
                let bits = p.size_bits as u64;
                let counted = in_window(p.time);
                let counts = match p.class {
                    PacketClass::Embb => &mut out.embb,
                    PacketClass::Urllc => &mut out.urllc,
                };
                if counted {
                    counts.packets_in += 1;
                    counts.bits_in += bits;
                }
                let backlog = (busy_until - ev.time).max(0.0);
                if p.class == PacketClass::Embb && backlog > cfg.drop_depth_s {
                    if counted {
                        counts.packets_dropped += 1;
                        counts.bits_dropped += bits;
                    }
                } else {
                    let mean = p.size_bits / cfg.capacity_bps;
                    let service = match cfg.service {
                        ServiceLaw::Deterministic => mean,
                        ServiceLaw::Exponential => -mean * (1.0 - service_rng.random::<f64>()).ln(),
                    };
                    busy_until = busy_until.max(ev.time) + service;
                    in_system += 1;
                    let w = Waiting {
                        seq: ev.seq,
                        packet: p,
                        service,
                    };
                    if in_service.is_none() {
                        heap.push(QueueEvent {
                            time: ev.time + service,
                            kind: EventKind::Departure,
                            seq: ev.seq,
                            packet: p,
                        });
                        in_service = Some(w);
                    } else {
                        queue.push_back(w);
                    }
                }
                schedule_next_arrival(&mut heap, &mut seq);
            }
            EventKind::Departure => {
                let done = in_service.take().expect("departure without a packet in service");
                in_system -= 1;
                let p = done.packet;
                if in_window(p.time) {
                    let delay = ev.time - p.time;
                    let counts = match p.class {
                        PacketClass::Embb => &mut out.embb,
                        PacketClass::Urllc => {
                            out.urllc_delay_sum += delay;
                            &mut out.urllc
                        }
                    };
                    counts.packets_out += 1;
                    counts.bits_out += p.size_bits as u64;
                    out.delay_sum += delay;
                    on_delay(delay, p.class);
                    if record_departures {
                        out.departures.push(Departure {
                            seq: done.seq,
                            class: p.class,
                            arrival: p.time,
                            departure: ev.time,
                        });
                    }
                }
                if let Some(next) = queue.pop_front() {
                    heap.push(QueueEvent {
                        time: ev.time + next.service,
                        kind: EventKind::Departure,
                        seq: next.seq,
                        packet: next.packet,
                    });
                    in_service = Some(next);
                }
            }
        }
    }

    let span = cfg.window_end - cfg.window_start;
    out.mean_in_system = if span > 0.0 { area / span } else { 0.0 };
    out.embb.packets_in_flight = out.embb.packets_in - out.embb.packets_out - out.embb.packets_dropped;
    out.urllc.packets_in_flight = out.urllc.packets_in - out.urllc.packets_out - out.urllc.packets_dropped;
    out
}

/// Merges two time-sorted arrival streams.
pub struct Merge<A: Iterator, B: Iterator> {
    a: std::iter::Peekable<A>,
    b: std::iter::Peekable<B>,
}

impl<A, B> Merge<A, B>
where
    A: Iterator<Item = PacketArrival>,
    B: Iterator<Item = PacketArrival>,
{
    pub fn new(a: A, b: B) -> Self {
        Merge {
            a: a.peekable(),
            b: b.peekable(),
        }
    }
}

impl<A, B> Iterator for Merge<A, B>
where
    A: Iterator<Item = PacketArrival>,
    B: Iterator<Item = PacketArrival>,
{
    type Item = PacketArrival;

    fn next(&mut self) -> Option<PacketArrival> {
        match (self.a.peek(), self.b.peek()) {
            (Some(x), Some(y)) => {
                if x.time <= y.time {
                    self.a.next()
                } else {
                    self.b.next()
                }
            }
            (Some(_), None) => self.a.next(),
            (None, _) => self.b.next(),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn pkt(time: f64, class: PacketClass) -> PacketArrival {
        PacketArrival {
            time,
            size_bits: 100.0,
            class,
            sbs: 0,
        }
    }

    fn cfg() -> QueueConfig {
        QueueConfig {
            capacity_bps: 100.0,
            service: ServiceLaw::Deterministic,
            drop_depth_s: f64::INFINITY,
            window_start: 0.0,
            window_end: 100.0,
        }
    }

    #[test]
    fn heap_order_time_then_kind_then_seq() {
        let mut h = BinaryHeap::new();
        let p = pkt(0.0, PacketClass::Embb);
        for (time, kind, seq) in [
            (1.0, EventKind::Departure, 0),
            (1.0, EventKind::Arrival, 5),
            (0.5, EventKind::Departure, 9),
            (1.0, EventKind::Arrival, 2),
        ] {
            h.push(QueueEvent {
                time,
                kind,
                seq,
                packet: p,
            });
        }
        let order: Vec<_> = std::iter::from_fn(|| h.pop())
            .map(|e| (e.time, e.kind, e.seq))
            .collect();
        assert_eq!(
            order,
            vec![
                (0.5, EventKind::Departure, 9),
                (1.0, EventKind::Arrival, 2),
                (1.0, EventKind::Arrival, 5),
                (1.0, EventKind::Departure, 0)
            ]
        );
    }

    #[test]
    fn back_to_back_service() {
        // three packets at t = 0, each takes 1 s
        let arr = vec![
            pkt(0.0, PacketClass::Embb),
            pkt(0.0, PacketClass::Urllc),
            pkt(0.0, PacketClass::Embb),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = run_queue(arr.into_iter(), &cfg(), &mut rng, true, |_, _| {});
        let deps: Vec<f64> = o.departures.iter().map(|d| d.departure).collect();
        assert_eq!(deps, vec![1.0, 2.0, 3.0]);
        assert_eq!(o.urllc_delay_sum, 2.0);
        assert_eq!(o.delay_sum, 6.0);
    }

    #[test]
    fn drops_embb_only_above_depth() {
        let arr = vec![
            pkt(0.0, PacketClass::Embb),
            pkt(0.0, PacketClass::Embb),
            pkt(0.0, PacketClass::Embb),
            pkt(0.1, PacketClass::Embb),
            pkt(0.1, PacketClass::Urllc),
        ];
        let c = QueueConfig {
            drop_depth_s: 1.5,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = run_queue(arr.into_iter(), &c, &mut rng, false, |_, _| {});
        assert_eq!(o.embb.packets_dropped, 2);
        assert_eq!(o.urllc.packets_dropped, 0);
        assert_eq!(o.embb.packets_in, o.embb.packets_out + o.embb.packets_dropped);
        assert_eq!(o.embb.bits_dropped, 200);
        assert_eq!(o.urllc.packets_out, 1);
    }

    #[test]
    fn merge_keeps_time_order() {
        let a = vec![pkt(0.0, PacketClass::Embb), pkt(2.0, PacketClass::Embb)];
        let b = vec![pkt(1.0, PacketClass::Urllc), pkt(3.0, PacketClass::Urllc)];
        let m: Vec<f64> = Merge::new(a.into_iter(), b.into_iter()).map(|p| p.time).collect();
        assert_eq!(m, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
