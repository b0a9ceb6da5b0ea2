//! End-to-end solve of one scenario: provision eMBB grants, run the SCA
//! allocation in every cell, associate cells with the satellite (ISTN mode
//! only), and evaluate the backhaul queues analytically.
//!
//! Grants are provisioned per network: every eMBB user gets the same grant
//! `b`, sized so that the unpunctured eMBB load equals `target_load` times the
//! backhaul capacity that network owns (C_Ter for the ISTN, C'_Ter for the
//! terrestrial benchmark).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::queueing::{compose_load, AnalyticDelay, QueueParams};
use crate::satellite_assoc::{
    sat_rate_uncapped, solve_association, terrestrial_residual_load, AssociationProblem, AssociationSolution,
    TIE_TOLERANCE,
};
use crate::scenario::{NetworkMode, Scenario};
use crate::simulator::benchmark_capacity;
use crate::terrestrial_alloc::{provision_equal_grant, sca_solve, PuncturingProblem, PuncturingSolution, ScaOptions};

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub sbs: usize,
    pub problem: PuncturingProblem,
    pub solution: PuncturingSolution,
    /// `(1 - beta) L_e*`, the eMBB load left on the terrestrial link.
    pub residual_embb_bps: f64,
    pub rho: f64,
    pub queue: QueueParams,
    /// `None` when the backhaul queue is unstable.
    pub analytic: Option<AnalyticDelay>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult {
    pub mode: NetworkMode,
    /// Link capacity of every backhaul queue in this mode.
    pub link_capacity_bps: f64,
    pub cells: Vec<CellResult>,
    pub association: Option<AssociationSolution>,
}

impl PipelineResult {
    pub fn allocations(&self) -> Vec<PuncturingSolution> {
        self.cells.iter().map(|c| c.solution.clone()).collect()
    }

    pub fn l_e_star(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.solution.l_e_star).collect()
    }

    pub fn l_u_star(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.solution.l_u_star).collect()
    }
}

/// Backhaul capacity owned by the network in `mode`.
pub fn link_capacity(s: &Scenario, mode: NetworkMode) -> Result<f64> {
    let c_ter = s.terrestrial.backhaul_capacity_bps;
    match mode {
        NetworkMode::Istn => Ok(c_ter),
        NetworkMode::TerrestrialBenchmark => {
            benchmark_capacity(c_ter, s.constellation.sat_capacity_bps, s.terrestrial.num_sbs)
        }
    }
}

/// Puncturing problems of every cell in `mode`.
pub fn cell_problems(s: &Scenario, mode: NetworkMode) -> Result<Vec<PuncturingProblem>> {
    s.validate()?;
    let capacity = link_capacity(s, mode)?;
    let channels = s.cell_channels();
    channels
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let b = match &s.embb_bandwidths {
                Some(bw) => bw[i].clone(),
                None => {
                    let grant = provision_equal_grant(&ch.gamma_embb, s.target_load * capacity)
                        .map_err(|e| Error::Infeasible(format!("cell {i}: {e}")))?;
                    vec![grant; ch.gamma_embb.len()]
                }
            };
            PuncturingProblem::new(
                b,
                ch,
                s.outage_epsilon,
                s.pareto_shape,
                s.pareto_scale_bps(),
                capacity,
                s.terrestrial.sbs_bandwidth_hz,
            )
        })
        .collect()
}

/// Solves the scenario in its configured mode.
pub fn solve_scenario(s: &Scenario) -> Result<PipelineResult> {
    solve_mode(s, s.mode)
}

pub fn solve_mode(s: &Scenario, mode: NetworkMode) -> Result<PipelineResult> {
    let problems = cell_problems(s, mode)?;
    let opts = ScaOptions::default();
    let solutions: Vec<PuncturingSolution> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| sca_solve(p, &opts).map_err(|e| prefix_cell(i, e)))
        .collect::<Result<_>>()?;
    for (i, sol) in solutions.iter().enumerate() {
        if !sol.converged {
            return Err(Error::Numerical(format!(
                "cell {i}: allocation did not converge within {} iterations",
                opts.max_iter
            )));
        }
    }

    let l_e: Vec<f64> = solutions.iter().map(|x| x.l_e_star).collect();
    let l_u: Vec<f64> = solutions.iter().map(|x| x.l_u_star).collect();
    let association = match mode {
        NetworkMode::Istn => Some(solve_association(&AssociationProblem::new(
            l_e.clone(),
            l_u.clone(),
            s.weights.clone(),
            &s.constellation,
        )?)?),
        NetworkMode::TerrestrialBenchmark => None,
    };
    let beta = association
        .as_ref()
        .map_or_else(|| vec![0.0; l_e.len()], |a| a.beta.clone());
    let residual = terrestrial_residual_load(&beta, &l_e)?;
    let capacity = link_capacity(s, mode)?;

    let cells = problems
        .into_iter()
        .zip(solutions)
        .enumerate()
        .map(|(i, (problem, solution))| {
            let rho = compose_load(l_e[i], l_u[i], beta[i], capacity, mode)?;
            let queue = QueueParams::from_loads(
                residual[i],
                l_u[i],
                capacity,
                s.terrestrial.embb_packet_bits,
                s.terrestrial.urllc_packet_bits,
                s.service_rate_basis,
                mode,
            )?;
            Ok(CellResult {
                sbs: i,
                problem,
                solution,
                residual_embb_bps: residual[i],
                rho,
                analytic: queue.analytic().ok(),
                queue,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PipelineResult {
        mode,
        link_capacity_bps: capacity,
        cells,
        association,
    })
}

/// One named feasibility check of a solved scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Relative slack allowed on every inequality.
const CHECK_TOL: f64 = 1e-6;

fn check(name: &'static str, failures: Vec<String>) -> Check {
    Check {
        name,
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "ok".into()
        } else {
            failures.join("; ")
        },
    }
}

/// Re-evaluates every constraint of both stages at the returned solution.
pub fn feasibility_checks(s: &Scenario, r: &PipelineResult) -> Vec<Check> {
    let mut out = Vec::new();
    let per_cell = |f: &dyn Fn(&CellResult) -> Option<String>| r.cells.iter().filter_map(f).collect::<Vec<_>>();

    out.push(check(
        "allocation_converged",
        per_cell(&|c| (!c.solution.converged).then(|| format!("cell {}", c.sbs))),
    ));
    out.push(check(
        "urllc_outage",
        per_cell(&|c| {
            let q = c.problem.urllc_threshold().ok()?;
            (c.solution.l_u_star < q * (1.0 - CHECK_TOL))
                .then(|| format!("cell {}: {:.6e} < {:.6e}", c.sbs, c.solution.l_u_star, q))
        }),
    ));
    out.push(check(
        "backhaul_capacity",
        per_cell(&|c| {
            let load = c.solution.l_u_star + c.solution.l_e_star;
            (load > c.problem.capacity_bps * (1.0 + CHECK_TOL))
                .then(|| format!("cell {}: {:.6e} > {:.6e}", c.sbs, load, c.problem.capacity_bps))
        }),
    ));
    out.push(check(
        "sbs_bandwidth",
        per_cell(&|c| {
            let used: f64 = c.solution.f_star.iter().sum();
            (used > c.problem.bandwidth_hz * (1.0 + CHECK_TOL)).then(|| format!("cell {}: {used:.6e} Hz", c.sbs))
        }),
    ));
    out.push(check(
        "puncturing_bounds",
        per_cell(&|c| {
            let bad = c
                .solution
                .f_star
                .iter()
                .zip(&c.problem.b)
                .any(|(&f, &b)| f < 0.0 || f > b * (1.0 + CHECK_TOL));
            bad.then(|| format!("cell {}", c.sbs))
        }),
    ));
    out.push(check(
        "queue_stability",
        per_cell(&|c| (c.rho >= 1.0).then(|| format!("cell {}: rho = {:.6}", c.sbs, c.rho))),
    ));

    match (&r.association, r.mode) {
        (Some(a), NetworkMode::Istn) => {
            let sum: f64 = a.alpha.iter().sum();
            out.push(check(
                "alpha_sum",
                if (sum - 1.0).abs() <= 1e-9 {
                    vec![]
                } else {
                    vec![format!("sum = {sum:.12}")]
                },
            ));
            let c_sat = s.constellation.sat_capacity_bps;
            let (w, cn) = (s.constellation.beam_bandwidth_hz, s.constellation.cn_linear());
            let mut rate_fail = Vec::new();
            for (i, c) in r.cells.iter().enumerate() {
                let carried = a.beta[i] * c.solution.l_e_star;
                match sat_rate_uncapped(a.alpha[i], w, cn) {
                    Ok(rate) if carried <= rate * (1.0 + CHECK_TOL) + CHECK_TOL * c_sat => {}
                    Ok(rate) => rate_fail.push(format!("cell {i}: {carried:.6e} > {rate:.6e}")),
                    Err(e) => rate_fail.push(format!("cell {i}: {e}")),
                }
            }
            out.push(check("satellite_rate", rate_fail));
            let total: f64 = a.beta.iter().zip(&r.cells).map(|(b, c)| b * c.solution.l_e_star).sum();
            out.push(check(
                "satellite_capacity",
                if total <= c_sat * (1.0 + CHECK_TOL) {
                    vec![]
                } else {
                    vec![format!("{total:.6e} > {c_sat:.6e}")]
                },
            ));
            out.push(check(
                "beta_bounds",
                a.beta
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| !(-CHECK_TOL..=1.0 + CHECK_TOL).contains(&b))
                    .map(|(i, b)| format!("cell {i}: {b}"))
                    .collect(),
            ));
            let l_u = r.l_u_star();
            let mut order_fail = Vec::new();
            for i in 0..l_u.len() {
                for j in 0..l_u.len() {
                    let strictly_less = l_u[i] < l_u[j] - TIE_TOLERANCE * l_u[j].abs();
                    if strictly_less && a.alpha[i] > a.alpha[j] * (1.0 + CHECK_TOL) {
                        order_fail.push(format!("alpha {i} > alpha {j}"));
                    }
                }
            }
            out.push(check("priority_order", order_fail));
        }
        _ => {
            let beta = r.association.as_ref().map(|a| a.beta.clone()).unwrap_or_default();
            out.push(check(
                "beta_zero",
                beta.iter()
                    .enumerate()
                    .filter(|(_, &b)| b != 0.0)
                    .map(|(i, _)| format!("cell {i}"))
                    .collect(),
            ));
        }
    }
    out
}

fn prefix_cell(i: usize, e: Error) -> Error {
    match e {
        Error::Infeasible(m) => Error::Infeasible(format!("cell {i}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("cell {i}: {m}")),
        other => other,
    }
}
