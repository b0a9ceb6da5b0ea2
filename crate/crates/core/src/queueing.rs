//! M/G/1 backhaul delay analytics under the exponential-service
//! approximation.
//!
//! Each SBS backhaul link is one FCFS queue fed by the eMBB load left on the
//! terrestrial link plus the admitted URLLC load.

use std::io::Write;

use serde::Serialize;

use crate::csvfmt::num;
use crate::error::{Error, Result};
use crate::scenario::{NetworkMode, ServiceRateBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueParams {
    /// Total packet arrival rate, packets/s.
    pub lambda: f64,
    /// Service rate, packets/s.
    pub mu: f64,
    pub rho: f64,
    pub mode: NetworkMode,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, mode: NetworkMode) -> Result<Self> {
        if !(lambda >= 0.0) || !(mu > 0.0) {
            return Err(Error::InvalidInput(format!(
                "queue needs lambda >= 0 and mu > 0 (lambda = {lambda}, mu = {mu})"
            )));
        }
        Ok(QueueParams {
            lambda,
            mu,
            rho: lambda / mu,
            mode,
        })
    }

    /// Queue of one SBS backhaul from its bit loads. The service rate is the
    /// link rate over the arrival-mix mean packet size, or over the eMBB
    /// packet size alone.
    pub fn from_loads(
        embb_bps: f64,
        urllc_bps: f64,
        capacity_bps: f64,
        embb_bits: f64,
        urllc_bits: f64,
        basis: ServiceRateBasis,
        mode: NetworkMode,
    ) -> Result<Self> {
        if !(capacity_bps > 0.0 && embb_bits > 0.0 && urllc_bits > 0.0) {
            return Err(Error::InvalidInput("capacity and packet sizes must be > 0".into()));
        }
        let lambda_e = embb_bps.max(0.0) / embb_bits;
        let lambda_u = urllc_bps.max(0.0) / urllc_bits;
        let lambda = lambda_e + lambda_u;
        let mean_bits = match basis {
            ServiceRateBasis::EmbbOnly => embb_bits,
            ServiceRateBasis::Mixed if lambda > 0.0 => (lambda_e * embb_bits + lambda_u * urllc_bits) / lambda,
            ServiceRateBasis::Mixed => embb_bits,
        };
        QueueParams::new(lambda, capacity_bps / mean_bits, mode)
    }

    pub fn stable(&self) -> Result<()> {
        if self.rho >= 1.0 {
            return Err(Error::Unstable { rho: self.rho });
        }
        Ok(())
    }

    pub fn analytic(&self) -> Result<AnalyticDelay> {
        AnalyticDelay::new(self.lambda, self.mu)
    }
}

/// Closed-form delay of a stable queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticDelay {
    pub mean_wait: f64,
    pub mean_sojourn: f64,
    /// Decay rate `mu - lambda` of the sojourn-time law.
    pub decay: f64,
}

impl AnalyticDelay {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let q = QueueParams::new(lambda, mu, NetworkMode::Istn)?;
        q.stable()?;
        let mean_wait = mean_waiting_time(q.rho, mu)?;
        Ok(AnalyticDelay {
            mean_wait,
            mean_sojourn: mean_wait + 1.0 / mu,
            decay: mu - lambda,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.decay * x).exp_m1()
        }
    }
}

/// Backhaul load of one cell: only the eMBB share kept on the terrestrial
/// link counts in ISTN mode.
pub fn compose_load(l_e_star: f64, l_u_star: f64, beta: f64, c_ter: f64, mode: NetworkMode) -> Result<f64> {
    if !(c_ter > 0.0) {
        return Err(Error::InvalidInput("C_Ter must be > 0".into()));
    }
    let embb = match mode {
        NetworkMode::Istn => (1.0 - beta) * l_e_star,
        NetworkMode::TerrestrialBenchmark => l_e_star,
    };
    Ok((embb + l_u_star) / c_ter)
}

/// Mean queueing delay `R/(1 - rho)` with residual service `R = rho/mu`.
pub fn mean_waiting_time(rho: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || rho < 0.0 {
        return Err(Error::InvalidInput(format!(
            "mean wait needs rho >= 0 and mu > 0 (rho = {rho}, mu = {mu})"
        )));
    }
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    Ok(rho / (mu * (1.0 - rho)))
}

/// Waiting-time law: an atom at zero plus a continuous density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaitingDensity {
    pub atom: f64,
    pub density: f64,
}

/// `(1 - rho) delta(t) + (1 - rho) lambda exp(-(mu - lambda) t)`.
pub fn waiting_pdf(t: f64, rho: f64, lambda: f64, mu: f64) -> Result<WaitingDensity> {
    if rho >= 1.0 || mu <= lambda {
        return Err(Error::Unstable { rho });
    }
    if t < 0.0 {
        return Ok(WaitingDensity {
            atom: 1.0 - rho,
            density: 0.0,
        });
    }
    Ok(WaitingDensity {
        atom: 1.0 - rho,
        density: (1.0 - rho) * lambda * (-(mu - lambda) * t).exp(),
    })
}

/// Sojourn-time CDF `1 - exp(-(mu - lambda) x)`.
pub fn sojourn_cdf(x: f64, lambda: f64, mu: f64) -> Result<f64> {
    if mu <= lambda {
        return Err(Error::Unstable { rho: lambda / mu });
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(-(-(mu - lambda) * x).exp_m1())
}

pub fn sojourn_pdf(x: f64, lambda: f64, mu: f64) -> Result<f64> {
    if mu <= lambda {
        return Err(Error::Unstable { rho: lambda / mu });
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    Ok((mu - lambda) * (-(mu - lambda) * x).exp())
}

/// CDF of a delay drawn from cell `k` with probability `weights[k]`.
pub fn mixture_sojourn_cdf(x: f64, weights: &[f64], delays: &[AnalyticDelay]) -> f64 {
    let total: f64 = weights.iter().sum();
    weights.iter().zip(delays).map(|(w, d)| w * d.cdf(x)).sum::<f64>() / total
}

/// Writes `t_seconds,F_T,f_T` on `grid`.
pub fn write_cdf_csv<W: Write>(out: W, grid: &[f64], lambda: f64, mu: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_seconds", "F_T", "f_T"])?;
    for &t in grid {
        w.write_record([
            num(t),
            num(sojourn_cdf(t, lambda, mu)?),
            num(sojourn_pdf(t, lambda, mu)?),
        ])?;
    }
    w.flush().map_err(|e| Error::io("cdf csv", e))?;
    Ok(())
}
