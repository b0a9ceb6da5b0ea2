//! Brute-force references shared by the integration and acceptance tests.
//! Nothing here calls the solvers under test.

#![allow(dead_code)]

use istn_offload::satellite_assoc::AssociationProblem;
use istn_offload::scenario::constellation_preset;
use istn_offload::terrestrial_alloc::PuncturingProblem;
use rand::Rng;

/// Shannon rate on `x` Hz with channel coefficient `g`, written out directly.
pub fn rate(x: f64, g: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (1.0 + g / x).log2()
    }
}

/// Random 2-user instance where both users carry a URLLC partner. The
/// capacity sits between the load at a feasible point and 15% above it, so
/// the backhaul constraint is often binding.
pub fn random_two_user_problem<R: Rng>(rng: &mut R) -> PuncturingProblem {
    let b: Vec<f64> = (0..2).map(|_| rng.random_range(0.5e6..2e6)).collect();
    let ge: Vec<f64> = (0..2).map(|_| 10f64.powf(rng.random_range(6.5..8.0))).collect();
    let gu: Vec<f64> = (0..2).map(|_| 10f64.powf(rng.random_range(6.5..8.0))).collect();
    let max_u: f64 = (0..2).map(|v| rate(b[v], gu[v])).sum();
    let q = rng.random_range(0.2..0.6) * max_u;
    // a common fraction t of every grant that clears the outage threshold by 5%
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let t = 0.5 * (lo + hi);
        let u: f64 = (0..2).map(|v| rate(t * b[v], gu[v])).sum();
        if u < 1.05 * q {
            lo = t;
        } else {
            hi = t;
        }
    }
    let load: f64 = (0..2)
        .map(|v| rate(hi * b[v], gu[v]) + rate((1.0 - hi) * b[v], ge[v]))
        .sum();
    let epsilon = 0.01;
    PuncturingProblem {
        b: b.clone(),
        gamma_embb: ge,
        gamma_urllc: gu,
        epsilon,
        pareto_shape: 1.0,
        pareto_scale_bps: q * epsilon,
        capacity_bps: load * rng.random_range(1.0..1.15),
        bandwidth_hz: 1.2 * (b[0] + b[1]),
    }
}

/// Exhaustive search over `f_v = k * 1e-4 * b_v`, `k = 0..=1e4`: the largest
/// eMBB sum rate among grid points that meet the outage, backhaul and
/// bandwidth constraints. `None` if no grid point is feasible.
pub fn two_user_grid_optimum(p: &PuncturingProblem) -> Option<f64> {
    assert_eq!(p.b.len(), 2);
    assert_eq!(p.gamma_urllc.len(), 2);
    let steps = 10_000usize;
    let q = p.pareto_scale_bps / p.epsilon.powf(1.0 / p.pareto_shape);
    let table = |v: usize| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = p.b[v] / steps as f64;
        let f: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        let u = f.iter().map(|&x| rate(x, p.gamma_urllc[v])).collect();
        let e = f.iter().map(|&x| rate(p.b[v] - x, p.gamma_embb[v])).collect();
        (f, u, e)
    };
    let (f1, u1, e1) = table(0);
    let (f2, u2, e2) = table(1);
    let mut best: Option<f64> = None;
    for i in 0..=steps {
        for j in 0..=steps {
            let lu = u1[i] + u2[j];
            let le = e1[i] + e2[j];
            if lu >= q && lu + le <= p.capacity_bps && f1[i] + f2[j] <= p.bandwidth_hz && best.is_none_or(|b| le > b) {
                best = Some(le);
            }
        }
    }
    best
}

/// Random N = 3 association instance with distinct URLLC loads.
pub fn random_association_problem<R: Rng>(rng: &mut R) -> AssociationProblem {
    let preset = ["Telsat", "OneWeb", "SpaceX"][rng.random_range(0..3)];
    let sat = constellation_preset(preset).unwrap();
    let c = sat.sat_capacity_bps;
    let l_e: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.6) * c).collect();
    let l_u: Vec<f64> = (0..3).map(|_| rng.random_range(1e5..5e6)).collect();
    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    w[2] = 1.0 - w[0] - w[1];
    AssociationProblem::new(l_e, l_u, w, &sat).unwrap()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][col] = b[r];
        }
        *xc = det(m) / d;
    }
    Some(x)
}

/// Best weighted offload over the alpha simplex at 0.01 resolution, in units
/// of the satellite capacity. For each alpha the beta problem is a 3-variable
/// LP, solved exactly by enumerating its vertices.
pub fn association_grid_optimum(p: &AssociationProblem) -> f64 {
    assert_eq!(p.l_e_star.len(), 3);
    let c = p.sat_capacity_bps;
    let l: Vec<f64> = p.l_e_star.iter().map(|x| x / c).collect();
    let gain: Vec<f64> = (0..3).map(|i| p.weights[i] * l[i]).collect();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| p.l_u_star[a].total_cmp(&p.l_u_star[b]));
    let mut best = 0.0f64;
    for i in 0..=100usize {
        for j in 0..=(100 - i) {
            let alpha = [i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0];
            // more URLLC load never gets less bandwidth
            if alpha[order[0]] > alpha[order[1]] + 1e-12 || alpha[order[1]] > alpha[order[2]] + 1e-12 {
                continue;
            }
            // rows a . beta <= rhs
            let mut rows: Vec<([f64; 3], f64)> = Vec::new();
            for k in 0..3 {
                let r = p.beam_bandwidth_hz
                    * alpha[k]
                    * if alpha[k] > 0.0 {
                        (1.0 + p.cn / alpha[k]).log2()
                    } else {
                        0.0
                    }
                    / c;
                let mut a = [0.0; 3];
                a[k] = l[k];
                rows.push((a, r.min(l[k])));
                let mut lo = [0.0; 3];
                lo[k] = -1.0;
                rows.push((lo, 0.0));
            }
            rows.push(([l[0], l[1], l[2]], 1.0));
            for w in 0..2 {
                let mut a = [0.0; 3];
                a[order[w]] = 1.0;
                a[order[w + 1]] = -1.0;
                rows.push((a, 0.0));
            }
            let m = rows.len();
            for x in 0..m {
                for y in (x + 1)..m {
                    for z in (y + 1)..m {
                        let Some(beta) = solve3([rows[x].0, rows[y].0, rows[z].0], [rows[x].1, rows[y].1, rows[z].1])
                        else {
                            continue;
                        };
                        let feasible = rows
                            .iter()
                            .all(|(a, r)| a[0] * beta[0] + a[1] * beta[1] + a[2] * beta[2] <= r + 1e-12);
                        if feasible {
                            best = best.max(gain[0] * beta[0] + gain[1] * beta[1] + gain[2] * beta[2]);
                        }
                    }
                }
            }
        }
    }
    best
}

/// FCFS single-server departures by the Lindley recursion.
pub fn lindley_departures(arrivals: &[f64], services: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(arrivals.len());
    let mut free_at = f64::NEG_INFINITY;
    for (a, s) in arrivals.iter().zip(services) {
        let start = a.max(free_at);
        free_at = start + s;
        out.push(free_at);
    }
    out
}
