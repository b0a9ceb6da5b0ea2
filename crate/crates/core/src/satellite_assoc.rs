//! Satellite association: how much of each cell's eMBB load moves to the
//! satellite backhaul (beta) and which share of the beam each cell gets
//! (alpha).
//!
//! The multi-objective program is solved through its weighted-sum form:
//! maximize `sum w_i beta_i L_e_i` subject to the per-cell satellite rate
//! `beta_i L_e_i <= R(alpha_i)`, the satellite capacity, the simplex on
//! alpha, and the priority rule that a cell with more URLLC load never gets
//! less alpha or beta than one with less.

use std::io::Write;

use serde::Serialize;

use crate::barrier::{self, BarrierOptions, ConvexProgram, Term};
use crate::csvfmt::num;
use crate::error::{Error, Result};
use crate::scenario::ConstellationConfig;
use crate::terrestrial_alloc::{shannon, shannon_d1, shannon_d2};

/// URLLC loads closer than this (relative) are treated as tied; SCA returns
/// loads that sit on the outage quantile only to solver precision.
pub const TIE_TOLERANCE: f64 = 1e-7;

/// `alpha W log2(1 + cn / alpha)`: the rate on an alpha-share of the beam
/// when the full-beam carrier-to-noise ratio is `cn`.
pub fn sat_rate_uncapped(alpha: f64, beam_bandwidth_hz: f64, cn: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(beam_bandwidth_hz * shannon(alpha, cn))
}

/// [`sat_rate_uncapped`] capped at the satellite capacity.
pub fn sat_rate(alpha: f64, beam_bandwidth_hz: f64, cn: f64, sat_capacity_bps: f64) -> Result<f64> {
    Ok(sat_rate_uncapped(alpha, beam_bandwidth_hz, cn)?.min(sat_capacity_bps))
}

/// 1 when cell i must not be favored over cell j, i.e. `L_u_i <= L_u_j`.
pub fn priority_delta(l_u_i: f64, l_u_j: f64) -> u8 {
    u8::from(l_u_i <= l_u_j)
}

/// `(1 - beta_i) L_e_i`: eMBB load left on the terrestrial backhaul.
pub fn terrestrial_residual_load(beta: &[f64], l_e_star: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != l_e_star.len() {
        return Err(Error::InvalidInput("beta and L_e lengths differ".into()));
    }
    Ok(beta.iter().zip(l_e_star).map(|(b, l)| (1.0 - b) * l).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationProblem {
    pub l_e_star: Vec<f64>,
    pub l_u_star: Vec<f64>,
    pub weights: Vec<f64>,
    pub beam_bandwidth_hz: f64,
    pub cn: f64,
    pub sat_capacity_bps: f64,
}

impl AssociationProblem {
    pub fn new(l_e_star: Vec<f64>, l_u_star: Vec<f64>, weights: Vec<f64>, sat: &ConstellationConfig) -> Result<Self> {
        let p = AssociationProblem {
            l_e_star,
            l_u_star,
            weights,
            beam_bandwidth_hz: sat.beam_bandwidth_hz,
            cn: sat.cn_linear(),
            sat_capacity_bps: sat.sat_capacity_bps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_sbs(&self) -> usize {
        self.l_e_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_sbs();
        if n == 0 || self.l_u_star.len() != n || self.weights.len() != n {
            return Err(Error::InvalidInput(
                "association needs N >= 1 cells with matching load and weight vectors".into(),
            ));
        }
        if self
            .l_e_star
            .iter()
            .chain(&self.l_u_star)
            .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::InvalidInput("loads must be finite and >= 0".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights must sum to 1, got {total}")));
        }
        if !(self.beam_bandwidth_hz > 0.0 && self.cn > 0.0 && self.sat_capacity_bps > 0.0) {
            return Err(Error::InvalidInput(
                "beam bandwidth, C/N and satellite capacity must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Weighted offloaded traffic `sum w_i beta_i L_e_i`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .zip(&self.l_e_star)
            .zip(&self.weights)
            .map(|((b, l), w)| w * b * l)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssociationSolution {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `beta_i L_e_i`, bits/s.
    pub offloaded: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Groups of indices with equal URLLC load, in increasing load order.
fn tie_classes(loads: &[f64], members: &[usize]) -> Vec<Vec<usize>> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| loads[a].total_cmp(&loads[b]).then(a.cmp(&b)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut anchor = f64::NAN;
    for i in order {
        let l = loads[i];
        match classes.last_mut() {
            Some(c) if l <= anchor + TIE_TOLERANCE * anchor.abs().max(1e-300) => c.push(i),
            _ => {
                anchor = l;
                classes.push(vec![i]);
            }
        }
    }
    classes
}

/// Variables: one alpha per URLLC tie class, then one beta per tie class of
/// cells with eMBB load. Rates are in units of C_Sat.
struct Program {
    /// cells per alpha class
    alpha_sizes: Vec<f64>,
    /// per beta class: alpha class, largest member load, summed load, summed weighted load
    beta_alpha: Vec<usize>,
    beta_max_load: Vec<f64>,
    beta_sum_load: Vec<f64>,
    beta_gain: Vec<f64>,
    w: f64,
    cn: f64,
}

impl Program {
    fn ka(&self) -> usize {
        self.alpha_sizes.len()
    }

    fn rate(&self, a: f64) -> (f64, f64, f64) {
        (
            self.w * shannon(a, self.cn),
            self.w * shannon_d1(a, self.cn),
            self.w * shannon_d2(a, self.cn),
        )
    }
}

impl ConvexProgram for Program {
    fn dim(&self) -> usize {
        self.ka() + self.beta_alpha.len()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x[..self.ka()].iter().all(|&a| a > 0.0)
    }

    fn objective(&self, x: &[f64]) -> Term {
        let ka = self.ka();
        let mut t = Term::zeros(x.len());
        for (m, g) in self.beta_gain.iter().enumerate() {
            t.value -= g * x[ka + m];
            t.grad[ka + m] = -g;
        }
        t
    }

    fn constraints(&self, x: &[f64]) -> Vec<Term> {
        let n = x.len();
        let ka = self.ka();
        let kb = self.beta_alpha.len();
        let mut out = Vec::new();
        for m in 0..kb {
            let k = self.beta_alpha[m];
            let (r, d1, d2) = self.rate(x[k]);
            let mut t = Term::zeros(n);
            t.value = x[ka + m] * self.beta_max_load[m] - r;
            t.grad[ka + m] = self.beta_max_load[m];
            t.grad[k] = -d1;
            t.hess_diag[k] = -d2;
            out.push(t);
        }
        let mut cap = Term::zeros(n);
        cap.value = -1.0;
        for m in 0..kb {
            cap.value += x[ka + m] * self.beta_sum_load[m];
            cap.grad[ka + m] = self.beta_sum_load[m];
        }
        out.push(cap);
        let mut linear = |pairs: &[(usize, f64)], constant: f64| {
            let mut t = Term::zeros(n);
            t.value = constant;
            for &(i, c) in pairs {
                t.value += c * x[i];
                t.grad[i] = c;
            }
            out.push(t);
        };
        for k in 1..ka {
            linear(&[(k - 1, 1.0), (k, -1.0)], 0.0);
        }
        for m in 1..kb {
            linear(&[(ka + m - 1, 1.0), (ka + m, -1.0)], 0.0);
        }
        linear(&[(0, -1.0)], 0.0);
        if kb > 0 {
            linear(&[(ka, -1.0)], 0.0);
            linear(&[(ka + kb - 1, 1.0)], -1.0);
        }
        out
    }

    fn equalities(&self) -> Vec<(Vec<f64>, f64)> {
        let mut a = vec![0.0; self.dim()];
        a[..self.ka()].copy_from_slice(&self.alpha_sizes);
        vec![(a, 1.0)]
    }
}

/// Solves the weighted-sum association program.
pub fn solve_association(p: &AssociationProblem) -> Result<AssociationSolution> {
    p.validate()?;
    let n = p.num_sbs();
    let cap = p.sat_capacity_bps;
    let all: Vec<usize> = (0..n).collect();
    let alpha_classes = tie_classes(&p.l_u_star, &all);
    let mut alpha_of = vec![0; n];
    for (k, c) in alpha_classes.iter().enumerate() {
        for &i in c {
            alpha_of[i] = k;
        }
    }
    // zero-load cells gain nothing from offloading; their beta is pinned to 0
    let loaded: Vec<usize> = all.iter().copied().filter(|&i| p.l_e_star[i] > 0.0).collect();
    let beta_classes = tie_classes(&p.l_u_star, &loaded);

    let ka = alpha_classes.len();
    let kb = beta_classes.len();
    let prog = Program {
        alpha_sizes: alpha_classes.iter().map(|c| c.len() as f64).collect(),
        beta_alpha: beta_classes.iter().map(|c| alpha_of[c[0]]).collect(),
        beta_max_load: beta_classes
            .iter()
            .map(|c| c.iter().map(|&i| p.l_e_star[i]).fold(0.0, f64::max) / cap)
            .collect(),
        beta_sum_load: beta_classes
            .iter()
            .map(|c| c.iter().map(|&i| p.l_e_star[i]).sum::<f64>() / cap)
            .collect(),
        beta_gain: beta_classes
            .iter()
            .map(|c| c.iter().map(|&i| p.weights[i] * p.l_e_star[i]).sum::<f64>() / cap)
            .collect(),
        w: p.beam_bandwidth_hz / cap,
        cn: p.cn,
    };

    // strictly increasing alpha chain on the simplex, then a small beta chain
    let ranks: f64 = alpha_classes
        .iter()
        .enumerate()
        .map(|(k, c)| (k + 1) as f64 * c.len() as f64)
        .sum();
    let mut x0: Vec<f64> = (0..ka).map(|k| (k + 1) as f64 / ranks).collect();
    let shape: Vec<f64> = (0..kb).map(|m| (m + 1) as f64 / (kb + 1) as f64).collect();
    let mut theta: f64 = 1.0;
    for m in 0..kb {
        let (r, _, _) = prog.rate(x0[prog.beta_alpha[m]]);
        theta = theta.min(r / (shape[m] * prog.beta_max_load[m]));
    }
    let used: f64 = shape.iter().zip(&prog.beta_sum_load).map(|(s, l)| s * l).sum();
    if used > 0.0 {
        theta = theta.min(1.0 / used);
    }
    x0.extend(shape.iter().map(|s| 0.5 * theta * s));

    let (x, kkt_residual) = if kb == 0 {
        (x0, 0.0)
    } else {
        let names = ["satellite rate constraint"];
        let start = barrier::find_strictly_feasible(&prog, &x0, &names)?;
        let sol = barrier::solve(&prog, &start, &BarrierOptions::default())?;
        (sol.x, sol.kkt_residual)
    };

    let mut alpha: Vec<f64> = (0..n).map(|i| x[alpha_of[i]].max(0.0)).collect();
    let total: f64 = alpha.iter().sum();
    for a in &mut alpha {
        *a /= total;
    }
    let mut beta = vec![0.0; n];
    for (m, c) in beta_classes.iter().enumerate() {
        for &i in c {
            beta[i] = x[ka + m].clamp(0.0, 1.0);
        }
    }
    let offloaded: Vec<f64> = beta.iter().zip(&p.l_e_star).map(|(b, l)| b * l).collect();
    Ok(AssociationSolution {
        objective: p.objective(&beta),
        alpha,
        beta,
        offloaded,
        kkt_residual,
    })
}

/// Writes `sbs,alpha,beta,offloaded_bps,residual_bps`.
pub fn write_association_csv<W: Write>(out: W, p: &AssociationProblem, sol: &AssociationSolution) -> Result<()> {
    let residual = terrestrial_residual_load(&sol.beta, &p.l_e_star)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sbs", "alpha", "beta", "offloaded_bps", "residual_bps"])?;
    for i in 0..p.num_sbs() {
        w.write_record([
            i.to_string(),
            num(sol.alpha[i]),
            num(sol.beta[i]),
            num(sol.offloaded[i]),
            num(residual[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io("association csv", e))?;
    Ok(())
}
