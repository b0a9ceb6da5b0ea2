//! Per-cell eMBB/URLLC puncturing allocation.
//!
//! URLLC user `v` (v < U_2) is served on `f_v` Hz punctured from eMBB user
//! `v`'s grant `b_v`. The allocation maximizes the eMBB sum rate subject to
//! the URLLC chance constraint (inverted through the Pareto quantile), the
//! backhaul capacity, and the SBS bandwidth. The capacity constraint is
//! non-convex; it is written as a difference of convex functions `F - G` and
//! solved by successive convex approximation with `G` linearized.

mod sca;

pub use sca::{sca_solve, solve_surrogate, write_sca_trace, ScaIterate, ScaOptions, SurrogateSolution};

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::CellChannel;
use crate::traffic::pareto_quantile;

/// `x log2(1 + gamma / x)`, continuous at x = 0.
pub fn shannon(x: f64, gamma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (gamma / x).ln_1p() / LN_2
    }
}

/// d/dx of [`shannon`].
pub fn shannon_d1(x: f64, gamma: f64) -> f64 {
    ((gamma / x).ln_1p() - gamma / (x + gamma)) / LN_2
}

/// d2/dx2 of [`shannon`] (negative: the rate is concave).
pub fn shannon_d2(x: f64, gamma: f64) -> f64 {
    -gamma * gamma / (x * (x + gamma) * (x + gamma) * LN_2)
}

/// `x log2 x`, extended by its limit 0 at x = 0.
pub(crate) fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Rate of a URLLC user on `f` Hz of punctured bandwidth.
pub fn urllc_rate(f: f64, gamma: f64) -> Result<f64> {
    if f < 0.0 || !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "urllc_rate needs f >= 0 and gamma > 0 (f = {f}, gamma = {gamma})"
        )));
    }
    Ok(shannon(f, gamma))
}

/// Rate of an eMBB user left with `b - f` Hz after puncturing.
pub fn embb_rate(b: f64, f: f64, gamma: f64) -> Result<f64> {
    if f < 0.0 || f > b || !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "embb_rate needs 0 <= f <= b and gamma > 0 (b = {b}, f = {f})"
        )));
    }
    Ok(shannon(b - f, gamma))
}

/// One cell's puncturing problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PuncturingProblem {
    /// eMBB grants b_v, one per eMBB user (U_1).
    pub b: Vec<f64>,
    pub gamma_embb: Vec<f64>,
    /// One per URLLC user (U_2 <= U_1).
    pub gamma_urllc: Vec<f64>,
    pub epsilon: f64,
    pub pareto_shape: f64,
    /// x_m in bits/s.
    pub pareto_scale_bps: f64,
    pub capacity_bps: f64,
    pub bandwidth_hz: f64,
}

impl PuncturingProblem {
    pub fn new(
        b: Vec<f64>,
        channel: &CellChannel,
        epsilon: f64,
        pareto_shape: f64,
        pareto_scale_bps: f64,
        capacity_bps: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        let p = PuncturingProblem {
            b,
            gamma_embb: channel.gamma_embb.clone(),
            gamma_urllc: channel.gamma_urllc.clone(),
            epsilon,
            pareto_shape,
            pareto_scale_bps,
            capacity_bps,
            bandwidth_hz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_embb(&self) -> usize {
        self.b.len()
    }

    pub fn num_urllc(&self) -> usize {
        self.gamma_urllc.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_embb.len() != self.b.len() {
            return Err(Error::InvalidInput("gamma_embb and b lengths differ".into()));
        }
        if self.num_urllc() > self.num_embb() {
            return Err(Error::InvalidInput("U_2 <= U_1 violated".into()));
        }
        if self.b.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidInput("b_v > 0 violated".into()));
        }
        if self.gamma_embb.iter().chain(&self.gamma_urllc).any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidInput("gamma > 0 violated".into()));
        }
        if !(self.capacity_bps > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidInput("capacity and bandwidth must be > 0".into()));
        }
        self.urllc_threshold()?;
        Ok(())
    }

    /// Rate the URLLC load must reach so that Pr(load < demand) <= epsilon.
    pub fn urllc_threshold(&self) -> Result<f64> {
        pareto_quantile(self.epsilon, self.pareto_shape, self.pareto_scale_bps)
    }

    /// Largest URLLC load reachable at all (every URLLC user takes its full grant).
    pub fn max_urllc_load(&self) -> f64 {
        self.gamma_urllc.iter().zip(&self.b).map(|(&g, &b)| shannon(b, g)).sum()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.num_embb() {
            return Err(Error::InvalidInput(format!(
                "allocation has {} entries, expected U_1 = {}",
                f.len(),
                self.num_embb()
            )));
        }
        Ok(())
    }
}

/// URLLC and eMBB loads `(L_u, L_e)` of a puncturing vector over all U_1 users.
pub fn cell_loads(f: &[f64], p: &PuncturingProblem) -> Result<(f64, f64)> {
    p.check_len(f)?;
    let mut lu = 0.0;
    for (v, &g) in p.gamma_urllc.iter().enumerate() {
        lu += urllc_rate(f[v], g)?;
    }
    let mut le = 0.0;
    for v in 0..p.num_embb() {
        le += embb_rate(p.b[v], f[v], p.gamma_embb[v])?;
    }
    Ok((lu, le))
}

/// eMBB sum rate, the allocation objective.
pub fn embb_sum_rate(f: &[f64], p: &PuncturingProblem) -> f64 {
    (0..p.num_embb()).map(|v| shannon(p.b[v] - f[v], p.gamma_embb[v])).sum()
}

/// Convex parts `(F, G)` of the capacity constraint; `F - G = L_u + L_e`.
pub fn dc_components(f: &[f64], p: &PuncturingProblem) -> Result<(f64, f64)> {
    p.check_len(f)?;
    let mut big_f = 0.0;
    let mut big_g = 0.0;
    for (v, &gu) in p.gamma_urllc.iter().enumerate() {
        let x = f[v];
        if x > 0.0 {
            big_f += x * (x + gu).log2();
        }
        big_g += xlog2x(x);
    }
    for v in 0..p.num_embb() {
        let r = p.b[v] - f[v];
        if r > 0.0 {
            big_f += r * (r + p.gamma_embb[v]).log2();
        }
        big_g += xlog2x(r);
    }
    Ok((big_f, big_g))
}

/// First-order expansion of `G` at a linearization point; a global lower
/// bound on `G` since `G` is convex.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedG {
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LinearizedG {
    pub fn eval(&self, f: &[f64]) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(f.iter().zip(&self.point))
                .map(|(g, (x, x0))| g * (x - x0))
                .sum::<f64>()
    }
}

/// Tangent of `G` at `f_prev`. Requires `0 < f_prev_v < b_v` on URLLC
/// coordinates and `0 <= f_prev_v < b_v` on the rest.
pub fn linearize_g(f_prev: &[f64], p: &PuncturingProblem) -> Result<LinearizedG> {
    p.check_len(f_prev)?;
    let u2 = p.num_urllc();
    let mut gradient = vec![0.0; p.num_embb()];
    for v in 0..p.num_embb() {
        let x = f_prev[v];
        let r = p.b[v] - x;
        let lower_ok = if v < u2 { x > 0.0 } else { x >= 0.0 };
        if !lower_ok || !(r > 0.0) {
            return Err(Error::InvalidInput(format!(
                "linearization point on the boundary at user {v} (f = {x}, b = {})",
                p.b[v]
            )));
        }
        // d/dx [x log2 x] = log2 x + 1/ln 2
        let mut d = -(r.log2() + 1.0 / LN_2);
        if v < u2 {
            d += x.log2() + 1.0 / LN_2;
        }
        gradient[v] = d;
    }
    let (_, value) = dc_components(f_prev, p)?;
    Ok(LinearizedG {
        point: f_prev.to_vec(),
        value,
        gradient,
    })
}

/// Result of the SCA loop for one cell.
#[derive(Debug, Clone, Serialize)]
pub struct PuncturingSolution {
    pub f_star: Vec<f64>,
    pub l_e_star: f64,
    pub l_u_star: f64,
    /// eMBB sum rate after each surrogate solve.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<ScaIterate>,
}

/// Equal eMBB grant `b` such that the unpunctured eMBB sum rate equals
/// `target_bps`. Used to provision a cell for a requested link load.
pub fn provision_equal_grant(gamma_embb: &[f64], target_bps: f64) -> Result<f64> {
    if !(target_bps > 0.0) || gamma_embb.is_empty() {
        return Err(Error::InvalidInput(
            "grant provisioning needs a positive target and users".into(),
        ));
    }
    let total = |b: f64| gamma_embb.iter().map(|&g| shannon(b, g)).sum::<f64>();
    // supremum of the sum rate as b grows is sum(gamma) / ln 2
    let sup: f64 = gamma_embb.iter().sum::<f64>() / LN_2;
    if target_bps >= sup {
        return Err(Error::Infeasible(format!(
            "target load {target_bps:.4e} bit/s exceeds the cell's rate ceiling {sup:.4e} bit/s"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while total(hi) < target_bps {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target_bps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
