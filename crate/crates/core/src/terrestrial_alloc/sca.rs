use std::f64::consts::LN_2;
use std::io::Write;

use serde::Serialize;

use super::{
    cell_loads, embb_sum_rate, shannon, shannon_d1, shannon_d2, xlog2x, PuncturingProblem, PuncturingSolution,
};
use crate::barrier::{self, BarrierOptions, ConvexProgram, Term};
use crate::csvfmt::num;
use crate::error::{Error, Result};

const CONSTRAINT_NAMES: [&str; 3] = [
    "URLLC outage constraint",
    "backhaul capacity constraint",
    "SBS bandwidth constraint",
];

/// Convex surrogate over the U_2 punctured widths, in units of `scale` Hz.
/// Rates are homogeneous of degree one in (bandwidth, gamma), so every rate
/// is expressed in units of `scale` bit/s as well.
struct Surrogate {
    b: Vec<f64>,
    ge: Vec<f64>,
    gu: Vec<f64>,
    xi: Vec<f64>,
    /// eMBB rate of the users that carry no URLLC traffic.
    fixed_rate: f64,
    threshold: f64,
    capacity: f64,
    bandwidth: f64,
    g_point: Vec<f64>,
    g_value: f64,
    g_grad: Vec<f64>,
}

impl Surrogate {
    fn new(p: &PuncturingProblem, scale: f64, point: &[f64]) -> Result<Self> {
        let u2 = p.num_urllc();
        let b: Vec<f64> = p.b[..u2].iter().map(|v| v / scale).collect();
        let ge: Vec<f64> = p.gamma_embb[..u2].iter().map(|v| v / scale).collect();
        let gu: Vec<f64> = p.gamma_urllc.iter().map(|v| v / scale).collect();
        let fixed_rate = (u2..p.num_embb())
            .map(|v| shannon(p.b[v], p.gamma_embb[v]))
            .sum::<f64>()
            / scale;
        let mut s = Surrogate {
            xi: b.iter().map(|v| 1e-9 * v).collect(),
            b,
            ge,
            gu,
            fixed_rate,
            threshold: p.urllc_threshold()? / scale,
            capacity: p.capacity_bps / scale,
            bandwidth: p.bandwidth_hz / scale,
            g_point: Vec::new(),
            g_value: 0.0,
            g_grad: Vec::new(),
        };
        s.relinearize(point);
        Ok(s)
    }

    fn g(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.b).map(|(&x, &b)| xlog2x(x) + xlog2x(b - x)).sum()
    }

    fn relinearize(&mut self, point: &[f64]) {
        self.g_value = self.g(point);
        self.g_grad = point
            .iter()
            .zip(&self.b)
            .map(|(&x, &b)| x.log2() - (b - x).log2())
            .collect();
        self.g_point = point.to_vec();
    }

    fn big_f(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..x.len() {
            let r = self.b[i] - x[i];
            v += x[i] * (x[i] + self.gu[i]).log2() + r * (r + self.ge[i]).log2();
        }
        v
    }

    /// `F - G_hat + fixed - C`: the convexified backhaul constraint.
    fn capacity_value(&self, x: &[f64]) -> f64 {
        self.big_f(x) - self.g_hat(x) + self.fixed_rate - self.capacity
    }

    fn capacity_term(&self, x: &[f64]) -> Term {
        let n = x.len();
        let mut cap = Term::zeros(n);
        cap.value = self.capacity_value(x);
        for i in 0..n {
            let (gu, ge) = (self.gu[i], self.ge[i]);
            let u = x[i] + gu;
            let r = self.b[i] - x[i];
            let e = r + ge;
            cap.grad[i] = (u.ln() + x[i] / u - e.ln() - r / e) / LN_2 - self.g_grad[i];
            cap.hess_diag[i] = ((x[i] + 2.0 * gu) / (u * u) + (r + 2.0 * ge) / (e * e)) / LN_2;
        }
        cap
    }

    fn g_hat(&self, x: &[f64]) -> f64 {
        self.g_value
            + x.iter()
                .zip(&self.g_point)
                .zip(&self.g_grad)
                .map(|((x, x0), g)| g * (x - x0))
                .sum::<f64>()
    }
}

impl ConvexProgram for Surrogate {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.b).all(|(&x, &b)| x > 0.0 && x < b)
    }

    fn objective(&self, x: &[f64]) -> Term {
        let n = x.len();
        let mut t = Term::zeros(n);
        for i in 0..n {
            let r = self.b[i] - x[i];
            t.value -= shannon(r, self.ge[i]);
            t.grad[i] = shannon_d1(r, self.ge[i]);
            t.hess_diag[i] = -shannon_d2(r, self.ge[i]);
        }
        t.value -= self.fixed_rate;
        t
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        -x.iter()
            .zip(&self.b)
            .zip(&self.ge)
            .map(|((x, b), g)| shannon(b - x, *g))
            .sum::<f64>()
            - self.fixed_rate
    }

    fn constraints(&self, x: &[f64]) -> Vec<Term> {
        let n = x.len();
        let mut outage = Term::zeros(n);
        outage.value = self.threshold;
        let mut bw = Term::zeros(n);
        bw.value = x.iter().sum::<f64>() - self.bandwidth;
        for i in 0..n {
            outage.value -= shannon(x[i], self.gu[i]);
            outage.grad[i] = -shannon_d1(x[i], self.gu[i]);
            outage.hess_diag[i] = -shannon_d2(x[i], self.gu[i]);
            bw.grad[i] = 1.0;
        }
        let mut out = vec![outage, self.capacity_term(x), bw];
        for i in 0..n {
            let mut lo = Term::zeros(n);
            lo.value = self.xi[i] - x[i];
            lo.grad[i] = -1.0;
            let mut hi = Term::zeros(n);
            hi.value = x[i] - (self.b[i] - self.xi[i]);
            hi.grad[i] = 1.0;
            out.push(lo);
            out.push(hi);
        }
        out
    }

    fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + 2 * x.len());
        out.push(self.threshold - x.iter().zip(&self.gu).map(|(x, g)| shannon(*x, *g)).sum::<f64>());
        out.push(self.capacity_value(x));
        out.push(x.iter().sum::<f64>() - self.bandwidth);
        for i in 0..x.len() {
            out.push(self.xi[i] - x[i]);
            out.push(x[i] - (self.b[i] - self.xi[i]));
        }
        out
    }
}

/// Solution of one convexified subproblem.
#[derive(Debug, Clone, Serialize)]
pub struct SurrogateSolution {
    /// Full U_1 allocation (zero for users without a URLLC partner).
    pub f: Vec<f64>,
    pub embb_sum_rate: f64,
    pub kkt_residual: f64,
}

fn scale_of(p: &PuncturingProblem) -> f64 {
    p.b.iter().cloned().fold(0.0, f64::max)
}

/// Without URLLC users the outage constraint is absent and any puncturing
/// only lowers the objective, so `f = 0` is optimal if the cell fits.
fn no_urllc_solution(p: &PuncturingProblem) -> Result<Vec<f64>> {
    let f = vec![0.0; p.num_embb()];
    let (lu, le) = cell_loads(&f, p)?;
    if lu + le > p.capacity_bps {
        return Err(Error::Infeasible(format!(
            "backhaul capacity constraint cannot be satisfied (load {:.4e} > {:.4e} bit/s)",
            lu + le,
            p.capacity_bps
        )));
    }
    Ok(f)
}

fn interior_start(p: &PuncturingProblem, f: &[f64], scale: f64) -> Vec<f64> {
    (0..p.num_urllc())
        .map(|v| {
            let b = p.b[v];
            f[v].clamp(2e-9 * b, b * (1.0 - 2e-9)) / scale
        })
        .collect()
}

fn expand(p: &PuncturingProblem, x: &[f64], scale: f64) -> Vec<f64> {
    let mut f = vec![0.0; p.num_embb()];
    for (v, xv) in x.iter().enumerate() {
        f[v] = xv * scale;
    }
    f
}

fn options() -> BarrierOptions {
    BarrierOptions::default()
}

/// The surrogate without its backhaul constraint, minimizing that
/// constraint's value instead.
struct LoadMin<'a> {
    s: &'a Surrogate,
}

const CAPACITY_ROW: usize = 1;

impl ConvexProgram for LoadMin<'_> {
    fn dim(&self) -> usize {
        self.s.dim()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        self.s.in_domain(x)
    }

    fn objective(&self, x: &[f64]) -> Term {
        self.s.capacity_term(x)
    }

    fn objective_value(&self, x: &[f64]) -> f64 {
        self.s.capacity_value(x)
    }

    fn constraints(&self, x: &[f64]) -> Vec<Term> {
        let mut c = self.s.constraints(x);
        c.remove(CAPACITY_ROW);
        c
    }

    fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut c = self.s.constraint_values(x);
        c.remove(CAPACITY_ROW);
        c
    }
}

/// Two-phase start. The outage, bandwidth and box constraints are convex, so
/// a Phase I on them alone either succeeds or proves them inconsistent. The
/// backhaul load is then driven down by the same successive scheme as the
/// main loop (each surrogate over-estimates the load and is tight at its
/// tangent point, so the true load never increases) until it fits or stalls.
fn feasible_start(prog: &mut Surrogate, x: Vec<f64>, max_iter: usize) -> Result<Vec<f64>> {
    let convex_names = [CONSTRAINT_NAMES[0], CONSTRAINT_NAMES[2]];
    let mut x = barrier::find_strictly_feasible(&LoadMin { s: prog }, &x, &convex_names)?;
    prog.relinearize(&x);
    let mut best = prog.capacity_value(&x);
    for _ in 0..max_iter.max(1) {
        if best < 0.0 {
            return Ok(x);
        }
        let sol = {
            let lm = LoadMin { s: prog };
            barrier::solve_until(&lm, &x, &options(), |z| lm.s.capacity_value(z) < 0.0)?
        };
        prog.relinearize(&sol.x);
        let value = prog.capacity_value(&sol.x);
        x = sol.x;
        if value < 0.0 {
            return Ok(x);
        }
        if value > best - 1e-12 * (1.0 + best.abs()) {
            break;
        }
        best = value;
    }
    Err(barrier::infeasibility_error(
        &prog.constraint_values(&x),
        &CONSTRAINT_NAMES,
    ))
}

/// Solves the convex surrogate built around `f_prev`, the tangent point of `G`.
pub fn solve_surrogate(p: &PuncturingProblem, f_prev: &[f64]) -> Result<SurrogateSolution> {
    p.validate()?;
    if f_prev.len() != p.num_embb() {
        return Err(Error::InvalidInput("f_prev must have U_1 entries".into()));
    }
    if p.num_urllc() == 0 {
        let f = no_urllc_solution(p)?;
        return Ok(SurrogateSolution {
            embb_sum_rate: embb_sum_rate(&f, p),
            f,
            kkt_residual: 0.0,
        });
    }
    let scale = scale_of(p);
    let x0 = interior_start(p, f_prev, scale);
    let prog = Surrogate::new(p, scale, &x0)?;
    let start = barrier::find_strictly_feasible(&prog, &x0, &CONSTRAINT_NAMES)?;
    let sol = barrier::solve(&prog, &start, &options())?;
    let f = expand(p, &sol.x, scale);
    Ok(SurrogateSolution {
        embb_sum_rate: embb_sum_rate(&f, p),
        f,
        kkt_residual: sol.kkt_residual,
    })
}

#[derive(Debug, Clone)]
pub struct ScaOptions {
    /// Starting allocation over all U_1 users; default 10% of each URLLC
    /// user's partner grant.
    pub f_init: Option<Vec<f64>>,
    /// Stop once no width moves by more than this (Hz); default 1e-3 min b.
    pub eps_error: Option<f64>,
    pub max_iter: usize,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            f_init: None,
            eps_error: None,
            max_iter: 500,
        }
    }
}

/// One SCA iteration.
#[derive(Debug, Clone, Serialize)]
pub struct ScaIterate {
    pub iteration: usize,
    pub embb_sum_rate: f64,
    pub urllc_load: f64,
    pub max_step_hz: f64,
    pub kkt_residual: f64,
    /// Punctured widths after this iteration, Hz.
    pub widths: Vec<f64>,
}

/// Successive convex approximation: repeatedly relinearizes `G` at the last
/// solution and solves the surrogate. Each iterate is feasible for the next
/// surrogate, so the eMBB sum rate never decreases.
pub fn sca_solve(p: &PuncturingProblem, opts: &ScaOptions) -> Result<PuncturingSolution> {
    p.validate()?;
    if p.num_urllc() == 0 {
        let f_star = no_urllc_solution(p)?;
        let (l_u_star, l_e_star) = cell_loads(&f_star, p)?;
        return Ok(PuncturingSolution {
            f_star: f_star.clone(),
            l_e_star,
            l_u_star,
            objective_trace: vec![l_e_star],
            iterations: 1,
            converged: true,
            trace: vec![ScaIterate {
                iteration: 1,
                embb_sum_rate: l_e_star,
                urllc_load: l_u_star,
                max_step_hz: 0.0,
                kkt_residual: 0.0,
                widths: f_star,
            }],
        });
    }
    let scale = scale_of(p);
    let min_b = p.b.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps = opts.eps_error.unwrap_or(1e-3 * min_b);
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps_error must be > 0".into()));
    }
    let f_init = match &opts.f_init {
        Some(f) if f.len() != p.num_embb() => {
            return Err(Error::InvalidInput("f_init must have U_1 entries".into()));
        }
        Some(f) => f.clone(),
        None => p.b.iter().map(|b| 0.1 * b).collect(),
    };

    let mut x = interior_start(p, &f_init, scale);
    let mut prog = Surrogate::new(p, scale, &x)?;
    x = feasible_start(&mut prog, x, opts.max_iter)
        .map_err(|e| Error::Infeasible(format!("no feasible start for the allocation: {e}")))?;
    prog.relinearize(&x);

    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=opts.max_iter.max(1) {
        let sol = barrier::solve(&prog, &x, &options())?;
        let step = sol
            .x
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs() * scale)
            .fold(0.0, f64::max);
        x = sol.x;
        let f = expand(p, &x, scale);
        let (lu, le) = cell_loads(&f, p)?;
        trace.push(ScaIterate {
            iteration,
            embb_sum_rate: le,
            urllc_load: lu,
            max_step_hz: step,
            kkt_residual: sol.kkt_residual,
            widths: f,
        });
        if step < eps {
            converged = true;
            break;
        }
        prog.relinearize(&x);
    }

    let f_star = expand(p, &x, scale);
    let (l_u_star, l_e_star) = cell_loads(&f_star, p)?;
    Ok(PuncturingSolution {
        f_star,
        l_e_star,
        l_u_star,
        objective_trace: trace.iter().map(|t| t.embb_sum_rate).collect(),
        iterations: trace.len(),
        converged,
        trace,
    })
}

/// Writes `iteration,embb_sum_rate_bps,urllc_load_bps,max_step_hz,kkt_residual`.
pub fn write_sca_trace<W: Write>(out: W, sol: &PuncturingSolution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "embb_sum_rate_bps",
        "urllc_load_bps",
        "max_step_hz",
        "kkt_residual",
    ])?;
    for t in &sol.trace {
        w.write_record([
            t.iteration.to_string(),
            num(t.embb_sum_rate),
            num(t.urllc_load),
            num(t.max_step_hz),
            num(t.kkt_residual),
        ])?;
    }
    w.flush().map_err(|e| Error::io("sca trace", e))?;
    Ok(())
}
