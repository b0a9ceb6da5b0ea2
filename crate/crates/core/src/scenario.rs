//! Experiment configuration: terrestrial cell parameters, constellation
//! presets, channel coefficients and simulation settings.
//!
//! Scenarios are read from TOML. Every physical field accepts either a bare
//! SI number or a string with a unit suffix (see [`crate::units`]).

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, Dimension, Quantity};

/// Reference distance of the log-distance path-loss model, meters.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;
/// Users are never placed closer than this to the SBS.
pub const MIN_USER_DISTANCE_M: f64 = 10.0;

/// Small-cell (terrestrial) parameters shared by every SBS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerrestrialConfig {
    pub num_sbs: usize,
    pub cell_radius_m: f64,
    pub sbs_bandwidth_hz: f64,
    pub rb_bandwidth_hz: f64,
    pub sbs_tx_power_w: f64,
    pub noise_density_w_per_hz: f64,
    pub backhaul_capacity_bps: f64,
    pub embb_packet_bits: f64,
    pub urllc_packet_bits: f64,
    pub num_embb: usize,
    pub num_urllc: usize,
    pub path_loss_exponent: f64,
}

impl Default for TerrestrialConfig {
    fn default() -> Self {
        TerrestrialConfig {
            num_sbs: 10,
            cell_radius_m: 500.0,
            sbs_bandwidth_hz: 100e6,
            rb_bandwidth_hz: 0.18e6,
            sbs_tx_power_w: 20.0,
            noise_density_w_per_hz: db_to_linear(-174.0) * 1e-3,
            backhaul_capacity_bps: 20e6,
            embb_packet_bits: 800.0,
            urllc_packet_bits: 240.0,
            num_embb: 10,
            num_urllc: 5,
            path_loss_exponent: 3.5,
        }
    }
}

impl TerrestrialConfig {
    /// Whole resource blocks in the SBS band.
    pub fn num_resource_blocks(&self) -> usize {
        (self.sbs_bandwidth_hz / self.rb_bandwidth_hz).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius", self.cell_radius_m),
            ("sbs_bandwidth", self.sbs_bandwidth_hz),
            ("rb_bandwidth", self.rb_bandwidth_hz),
            ("sbs_tx_power", self.sbs_tx_power_w),
            ("noise_density", self.noise_density_w_per_hz),
            ("backhaul_capacity", self.backhaul_capacity_bps),
            ("embb_packet_size", self.embb_packet_bits),
            ("urllc_packet_size", self.urllc_packet_bits),
            ("path_loss_exponent", self.path_loss_exponent),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if self.num_sbs < 1 {
            return Err(Error::Validation("N >= 1 violated".into()));
        }
        if self.num_urllc < 1 {
            return Err(Error::Validation("U_2 >= 1 violated".into()));
        }
        if self.num_embb < self.num_urllc {
            return Err(Error::Validation(format!(
                "U_1 >= U_2 violated (U_1 = {}, U_2 = {})",
                self.num_embb, self.num_urllc
            )));
        }
        if self.num_resource_blocks() < 1 {
            return Err(Error::Validation("rb_bandwidth exceeds sbs_bandwidth".into()));
        }
        if self.cell_radius_m <= MIN_USER_DISTANCE_M {
            return Err(Error::Validation(format!(
                "cell_radius must exceed the {MIN_USER_DISTANCE_M} m minimum user distance"
            )));
        }
        Ok(())
    }
}

/// How the constellation's carrier-to-noise figure is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CnInterpretation {
    /// C/N in dB over the whole beam bandwidth.
    #[default]
    CarrierToNoise,
    /// C/N0 in dB-Hz.
    CarrierToNoiseDensity,
}

/// One satellite downlink beam.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstellationConfig {
    pub name: String,
    pub beam_bandwidth_hz: f64,
    pub sat_capacity_bps: f64,
    pub carrier_to_noise_db: f64,
    pub cn_interpretation: CnInterpretation,
}

impl ConstellationConfig {
    /// Full-beam signal-to-noise ratio (linear) used by the satellite rate model.
    pub fn cn_linear(&self) -> f64 {
        let lin = db_to_linear(self.carrier_to_noise_db);
        match self.cn_interpretation {
            CnInterpretation::CarrierToNoise => lin,
            CnInterpretation::CarrierToNoiseDensity => lin / self.beam_bandwidth_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sat_capacity_bps > 0.0) {
            return Err(Error::Validation("sat_capacity > 0 violated".into()));
        }
        if !(self.beam_bandwidth_hz > 0.0) {
            return Err(Error::Validation("beam_bandwidth > 0 violated".into()));
        }
        if !self.carrier_to_noise_db.is_finite() {
            return Err(Error::Validation("carrier_to_noise must be finite".into()));
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 3] = ["Telsat", "OneWeb", "SpaceX"];

/// Per-beam features of the three LEO systems.
pub fn constellation_preset(name: &str) -> Result<ConstellationConfig> {
    let (canonical, capacity_mbps, cn_db) = match name.to_ascii_lowercase().as_str() {
        "telsat" => ("Telsat", 558.7, 9.6),
        "oneweb" => ("OneWeb", 599.4, 10.5),
        "spacex" => ("SpaceX", 674.3, 12.0),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(ConstellationConfig {
        name: canonical.to_string(),
        beam_bandwidth_hz: 0.25e9,
        sat_capacity_bps: capacity_mbps * 1e6,
        carrier_to_noise_db: cn_db,
        cn_interpretation: CnInterpretation::CarrierToNoise,
    })
}

/// Which backhaul architecture a run models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    /// Terrestrial backhaul plus satellite offloading.
    Istn,
    /// Terrestrial backhaul only, at the equivalent capacity C_Ter + C_Sat/N.
    #[serde(alias = "terrestrial", alias = "benchmark")]
    TerrestrialBenchmark,
}

impl NetworkMode {
    pub fn label(self) -> &'static str {
        match self {
            NetworkMode::Istn => "istn",
            NetworkMode::TerrestrialBenchmark => "terrestrial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "istn" => Ok(NetworkMode::Istn),
            "terrestrial" | "benchmark" | "terrestrial_benchmark" => Ok(NetworkMode::TerrestrialBenchmark),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-packet service-time law of the backhaul server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ServiceLaw {
    /// size / C.
    #[default]
    Deterministic,
    /// Exponential with mean size / C.
    Exponential,
}

/// Which packet mix defines the analytic service rate mu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ServiceRateBasis {
    /// mu = C / (arrival-weighted mean packet size).
    #[default]
    Mixed,
    /// mu = C / eMBB packet size.
    EmbbOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    pub horizon_s: f64,
    pub warmup_fraction: f64,
    /// eMBB drop threshold, in seconds of backlog at the link rate.
    pub drop_depth_s: f64,
    pub service: ServiceLaw,
    pub slot_length_s: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            horizon_s: 200.0,
            warmup_fraction: 0.1,
            drop_depth_s: 1.0,
            service: ServiceLaw::Deterministic,
            slot_length_s: 1.0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_s > 0.0) {
            return Err(Error::Validation("simulation horizon must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Validation("warmup_fraction must lie in [0, 1)".into()));
        }
        if !(self.drop_depth_s > 0.0) {
            return Err(Error::Validation("drop_depth must be > 0".into()));
        }
        if !(self.slot_length_s > 0.0) {
            return Err(Error::Validation("slot_length must be > 0".into()));
        }
        Ok(())
    }
}

/// Channel coefficients of one cell, gamma = P g / N0 in Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellChannel {
    /// One entry per eMBB user (U_1).
    pub gamma_embb: Vec<f64>,
    /// One entry per URLLC user (U_2); URLLC user v is served on bandwidth
    /// punctured from eMBB user v.
    pub gamma_urllc: Vec<f64>,
}

impl CellChannel {
    /// Splits a placement vector laid out as U_1 eMBB users followed by U_2
    /// URLLC users. A vector of exactly U_1 entries reuses gamma_v for the
    /// URLLC user on the same index.
    pub fn from_user_gammas(gammas: &[f64], num_embb: usize, num_urllc: usize) -> Result<Self> {
        if gammas.len() == num_embb + num_urllc {
            Ok(CellChannel {
                gamma_embb: gammas[..num_embb].to_vec(),
                gamma_urllc: gammas[num_embb..].to_vec(),
            })
        } else if gammas.len() == num_embb {
            Ok(CellChannel {
                gamma_embb: gammas.to_vec(),
                gamma_urllc: gammas[..num_urllc].to_vec(),
            })
        } else {
            Err(Error::Validation(format!(
                "gamma vector has {} entries, expected U_1 + U_2 = {} or U_1 = {}",
                gammas.len(),
                num_embb + num_urllc,
                num_embb
            )))
        }
    }

    fn user_gammas(&self) -> Vec<f64> {
        self.gamma_embb.iter().chain(&self.gamma_urllc).copied().collect()
    }
}

/// A complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub terrestrial: TerrestrialConfig,
    pub constellation: ConstellationConfig,
    pub target_load: f64,
    pub outage_epsilon: f64,
    pub pareto_shape: f64,
    pub pareto_scale: f64,
    /// bits/s represented by one unit of the Pareto demand law.
    pub demand_unit_bps: f64,
    pub weights: Vec<f64>,
    /// Explicit per-cell channels; `None` means derive them from placement.
    pub channels: Option<Vec<CellChannel>>,
    /// Explicit per-cell eMBB grants b_v; `None` means size them from the target load.
    pub embb_bandwidths: Option<Vec<Vec<f64>>>,
    pub mode: NetworkMode,
    pub rng_seed: u64,
    pub sim: SimSettings,
    pub service_rate_basis: ServiceRateBasis,
}

impl Scenario {
    /// Default terrestrial cell with the named constellation and default
    /// experiment knobs.
    pub fn with_preset(name: &str) -> Result<Self> {
        let terrestrial = TerrestrialConfig::default();
        let n = terrestrial.num_sbs;
        let scenario = Scenario {
            terrestrial,
            constellation: constellation_preset(name)?,
            target_load: 0.8,
            outage_epsilon: 0.01,
            pareto_shape: 1.0,
            pareto_scale: 1.0,
            demand_unit_bps: 1e4,
            weights: vec![1.0 / n as f64; n],
            channels: None,
            embb_bandwidths: None,
            mode: NetworkMode::Istn,
            rng_seed: 1,
            sim: SimSettings::default(),
            service_rate_basis: ServiceRateBasis::Mixed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Changes N and resets the weights to uniform.
    pub fn set_num_sbs(&mut self, n: usize) {
        self.terrestrial.num_sbs = n;
        self.weights = vec![1.0 / n.max(1) as f64; n];
        self.channels = None;
        self.embb_bandwidths = None;
    }

    /// Pareto scale x_m in bits/s.
    pub fn pareto_scale_bps(&self) -> f64 {
        self.pareto_scale * self.demand_unit_bps
    }

    pub fn validate(&self) -> Result<()> {
        self.terrestrial.validate()?;
        self.constellation.validate()?;
        self.sim.validate()?;
        let t = &self.terrestrial;
        if !(self.target_load > 0.0 && self.target_load < 1.0) {
            return Err(Error::Validation(format!(
                "target_load must lie in (0, 1), got {}",
                self.target_load
            )));
        }
        if !(self.outage_epsilon > 0.0 && self.outage_epsilon < 1.0) {
            return Err(Error::Validation(format!(
                "outage_epsilon must lie in (0, 1), got {}",
                self.outage_epsilon
            )));
        }
        if !(self.pareto_shape > 0.0 && self.pareto_scale > 0.0 && self.demand_unit_bps > 0.0) {
            return Err(Error::Validation(
                "Pareto shape, scale and demand unit must be > 0".into(),
            ));
        }
        if self.weights.len() != t.num_sbs {
            return Err(Error::Validation(format!(
                "weights has {} entries, expected N = {}",
                self.weights.len(),
                t.num_sbs
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("weights must be non-negative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("weights must sum to 1, got {sum}")));
        }
        if let Some(channels) = &self.channels {
            if channels.len() != t.num_sbs {
                return Err(Error::Validation(format!(
                    "gammas given for {} cells, expected {}",
                    channels.len(),
                    t.num_sbs
                )));
            }
            for ch in channels {
                if ch.gamma_embb.len() != t.num_embb || ch.gamma_urllc.len() != t.num_urllc {
                    return Err(Error::Validation("gamma vector length does not match U_1/U_2".into()));
                }
                if ch.gamma_embb.iter().chain(&ch.gamma_urllc).any(|g| !(*g > 0.0)) {
                    return Err(Error::Validation("gamma values must be > 0".into()));
                }
            }
        }
        if let Some(bw) = &self.embb_bandwidths {
            if bw.len() != t.num_sbs || bw.iter().any(|b| b.len() != t.num_embb) {
                return Err(Error::Validation(
                    "embb_bandwidths must hold N vectors of U_1 entries".into(),
                ));
            }
            if bw.iter().flatten().any(|b| !(*b > 0.0)) {
                return Err(Error::Validation("embb_bandwidths must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Channel coefficients of every cell: the configured ones, or a seeded
    /// placement draw.
    pub fn cell_channels(&self) -> Vec<CellChannel> {
        if let Some(ch) = &self.channels {
            return ch.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let t = &self.terrestrial;
        (0..t.num_sbs)
            .map(|_| {
                let g = place_users(t, &mut rng);
                CellChannel::from_user_gammas(&g, t.num_embb, t.num_urllc).expect("placement length")
            })
            .collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_scenario()
    }

    /// Serializes with every quantity as a bare SI number.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawScenario::from_scenario(self)).expect("scenario serializes")
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_toml_str(&text)
}

/// gamma = P g / N0, in Hz.
pub fn compute_gamma(tx_power_w: f64, gain: f64, noise_density_w_per_hz: f64) -> Result<f64> {
    if !(tx_power_w > 0.0) || !(gain > 0.0) || !(noise_density_w_per_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gamma needs positive power, gain and noise density (P = {tx_power_w}, g = {gain}, N0 = {noise_density_w_per_hz})"
        )));
    }
    Ok(tx_power_w * gain / noise_density_w_per_hz)
}

/// Log-distance path gain (d / d0)^(-eta).
pub fn path_gain(distance_m: f64, exponent: f64) -> f64 {
    (distance_m / REFERENCE_DISTANCE_M).powf(-exponent)
}

/// gamma of a user at `distance_m` from its SBS.
pub fn gamma_at_distance(cfg: &TerrestrialConfig, distance_m: f64) -> f64 {
    cfg.sbs_tx_power_w * path_gain(distance_m, cfg.path_loss_exponent) / cfg.noise_density_w_per_hz
}

/// Distances of U_1 + U_2 users drawn uniformly over the annulus
/// [MIN_USER_DISTANCE_M, cell_radius].
pub fn sample_user_distances<R: Rng + ?Sized>(cfg: &TerrestrialConfig, rng: &mut R) -> Vec<f64> {
    let r0 = MIN_USER_DISTANCE_M * MIN_USER_DISTANCE_M;
    let r1 = cfg.cell_radius_m * cfg.cell_radius_m;
    (0..cfg.num_embb + cfg.num_urllc)
        .map(|_| {
            let u: f64 = rng.random();
            (r0 + u * (r1 - r0)).sqrt()
        })
        .collect()
}

/// Places one cell's users and returns their gamma values (eMBB users first).
pub fn place_users<R: Rng + ?Sized>(cfg: &TerrestrialConfig, rng: &mut R) -> Vec<f64> {
    sample_user_distances(cfg, rng)
        .into_iter()
        .map(|d| gamma_at_distance(cfg, d))
        .collect()
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    mode: Option<NetworkMode>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    target_load: Option<f64>,
    #[serde(default)]
    outage_epsilon: Option<f64>,
    #[serde(default)]
    pareto_shape: Option<f64>,
    #[serde(default)]
    pareto_scale: Option<f64>,
    #[serde(default)]
    demand_unit: Option<Quantity>,
    #[serde(default)]
    weights: Option<RawWeights>,
    #[serde(default)]
    sbs_beam_distances: Option<Vec<Quantity>>,
    #[serde(default)]
    service_rate_basis: Option<ServiceRateBasis>,
    terrestrial: RawTerrestrial,
    constellation: RawConstellation,
    #[serde(default)]
    channel: Option<RawChannel>,
    #[serde(default)]
    simulation: Option<RawSimulation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawWeights {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerrestrial {
    num_sbs: Option<usize>,
    cell_radius: Option<Quantity>,
    sbs_bandwidth: Option<Quantity>,
    rb_bandwidth: Option<Quantity>,
    sbs_tx_power: Option<Quantity>,
    noise_density: Option<Quantity>,
    backhaul_capacity: Option<Quantity>,
    embb_packet_size: Option<Quantity>,
    urllc_packet_size: Option<Quantity>,
    num_embb: Option<usize>,
    num_urllc: Option<usize>,
    path_loss_exponent: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstellation {
    preset: Option<String>,
    name: Option<String>,
    beam_bandwidth: Option<Quantity>,
    sat_capacity: Option<Quantity>,
    carrier_to_noise: Option<Quantity>,
    cn_interpretation: Option<CnInterpretation>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    gammas: Option<Vec<Vec<f64>>>,
    embb_bandwidths: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    horizon: Option<Quantity>,
    warmup_fraction: Option<f64>,
    drop_depth: Option<Quantity>,
    service: Option<ServiceLaw>,
    slot_length: Option<Quantity>,
}

fn resolve(q: &Option<Quantity>, dim: Dimension, field: &str, default: f64) -> Result<f64> {
    match q {
        Some(q) => q.resolve(dim, field),
        None => Ok(default),
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        let d = TerrestrialConfig::default();
        let rt = &self.terrestrial;
        let terrestrial = TerrestrialConfig {
            num_sbs: rt.num_sbs.unwrap_or(d.num_sbs),
            cell_radius_m: resolve(&rt.cell_radius, Dimension::Distance, "cell_radius", d.cell_radius_m)?,
            sbs_bandwidth_hz: resolve(
                &rt.sbs_bandwidth,
                Dimension::Frequency,
                "sbs_bandwidth",
                d.sbs_bandwidth_hz,
            )?,
            rb_bandwidth_hz: resolve(
                &rt.rb_bandwidth,
                Dimension::Frequency,
                "rb_bandwidth",
                d.rb_bandwidth_hz,
            )?,
            sbs_tx_power_w: resolve(&rt.sbs_tx_power, Dimension::Power, "sbs_tx_power", d.sbs_tx_power_w)?,
            noise_density_w_per_hz: resolve(
                &rt.noise_density,
                Dimension::NoiseDensity,
                "noise_density",
                d.noise_density_w_per_hz,
            )?,
            backhaul_capacity_bps: resolve(
                &rt.backhaul_capacity,
                Dimension::Rate,
                "backhaul_capacity",
                d.backhaul_capacity_bps,
            )?,
            embb_packet_bits: resolve(
                &rt.embb_packet_size,
                Dimension::Size,
                "embb_packet_size",
                d.embb_packet_bits,
            )?,
            urllc_packet_bits: resolve(
                &rt.urllc_packet_size,
                Dimension::Size,
                "urllc_packet_size",
                d.urllc_packet_bits,
            )?,
            num_embb: rt.num_embb.unwrap_or(d.num_embb),
            num_urllc: rt.num_urllc.unwrap_or(d.num_urllc),
            path_loss_exponent: rt.path_loss_exponent.unwrap_or(d.path_loss_exponent),
        };
        terrestrial.validate()?;
        let n = terrestrial.num_sbs;

        let rc = &self.constellation;
        let mut constellation = match (&rc.preset, &rc.name) {
            (Some(p), _) => constellation_preset(p)?,
            (None, Some(name)) => {
                let known = constellation_preset(name).ok();
                let field = |q: &Option<Quantity>, dim, label: &str, fallback: Option<f64>| -> Result<f64> {
                    match (q, fallback) {
                        (Some(q), _) => q.resolve(dim, label),
                        (None, Some(v)) => Ok(v),
                        (None, None) => Err(Error::Validation(format!(
                            "custom constellation {name:?} must set `{label}`"
                        ))),
                    }
                };
                ConstellationConfig {
                    name: name.clone(),
                    beam_bandwidth_hz: field(
                        &rc.beam_bandwidth,
                        Dimension::Frequency,
                        "beam_bandwidth",
                        known.as_ref().map(|k| k.beam_bandwidth_hz),
                    )?,
                    sat_capacity_bps: field(
                        &rc.sat_capacity,
                        Dimension::Rate,
                        "sat_capacity",
                        known.as_ref().map(|k| k.sat_capacity_bps),
                    )?,
                    carrier_to_noise_db: field(
                        &rc.carrier_to_noise,
                        Dimension::Decibel,
                        "carrier_to_noise",
                        known.as_ref().map(|k| k.carrier_to_noise_db),
                    )?,
                    cn_interpretation: CnInterpretation::CarrierToNoise,
                }
            }
            (None, None) => {
                return Err(Error::Validation("constellation needs `preset` or `name`".into()));
            }
        };
        if let Some(cn) = rc.cn_interpretation {
            constellation.cn_interpretation = cn;
        }

        let weights = match &self.weights {
            None => vec![1.0 / n as f64; n],
            Some(RawWeights::Values(v)) => v.clone(),
            Some(RawWeights::Named(s)) => match s.as_str() {
                "uniform" => vec![1.0 / n as f64; n],
                "edge" => {
                    let dists = self
                        .sbs_beam_distances
                        .as_ref()
                        .ok_or_else(|| Error::Validation("weights = \"edge\" needs sbs_beam_distances".into()))?
                        .iter()
                        .map(|q| q.resolve(Dimension::Distance, "sbs_beam_distances"))
                        .collect::<Result<Vec<_>>>()?;
                    edge_weights(&dists, n)?
                }
                other => return Err(Error::Parse(format!("unknown weights mode {other:?}"))),
            },
        };

        let channel = self.channel.unwrap_or_default();
        let channels = match channel.gammas {
            None => None,
            Some(rows) => {
                let rows = if rows.len() == 1 && n > 1 {
                    vec![rows[0].clone(); n]
                } else {
                    rows
                };
                Some(
                    rows.iter()
                        .map(|g| CellChannel::from_user_gammas(g, terrestrial.num_embb, terrestrial.num_urllc))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let embb_bandwidths = channel.embb_bandwidths.map(|rows| {
            if rows.len() == 1 && n > 1 {
                vec![rows[0].clone(); n]
            } else {
                rows
            }
        });

        let ds = SimSettings::default();
        let rs = self.simulation.unwrap_or_default();
        let sim = SimSettings {
            horizon_s: resolve(&rs.horizon, Dimension::Time, "horizon", ds.horizon_s)?,
            warmup_fraction: rs.warmup_fraction.unwrap_or(ds.warmup_fraction),
            drop_depth_s: resolve(&rs.drop_depth, Dimension::Time, "drop_depth", ds.drop_depth_s)?,
            service: rs.service.unwrap_or(ds.service),
            slot_length_s: resolve(&rs.slot_length, Dimension::Time, "slot_length", ds.slot_length_s)?,
        };

        let scenario = Scenario {
            terrestrial,
            constellation,
            target_load: self.target_load.unwrap_or(0.8),
            outage_epsilon: self.outage_epsilon.unwrap_or(0.01),
            pareto_shape: self.pareto_shape.unwrap_or(1.0),
            pareto_scale: self.pareto_scale.unwrap_or(1.0),
            demand_unit_bps: resolve(&self.demand_unit, Dimension::Rate, "demand_unit", 1e4)?,
            weights,
            channels,
            embb_bandwidths,
            mode: self.mode.unwrap_or(NetworkMode::Istn),
            rng_seed: self.seed.unwrap_or(1),
            sim,
            service_rate_basis: self.service_rate_basis.unwrap_or_default(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn from_scenario(s: &Scenario) -> Self {
        let t = &s.terrestrial;
        let c = &s.constellation;
        let q = |v: f64| Some(Quantity::Number(v));
        RawScenario {
            mode: Some(s.mode),
            seed: Some(s.rng_seed),
            target_load: Some(s.target_load),
            outage_epsilon: Some(s.outage_epsilon),
            pareto_shape: Some(s.pareto_shape),
            pareto_scale: Some(s.pareto_scale),
            demand_unit: q(s.demand_unit_bps),
            weights: Some(RawWeights::Values(s.weights.clone())),
            sbs_beam_distances: None,
            service_rate_basis: Some(s.service_rate_basis),
            terrestrial: RawTerrestrial {
                num_sbs: Some(t.num_sbs),
                cell_radius: q(t.cell_radius_m),
                sbs_bandwidth: q(t.sbs_bandwidth_hz),
                rb_bandwidth: q(t.rb_bandwidth_hz),
                sbs_tx_power: q(t.sbs_tx_power_w),
                noise_density: q(t.noise_density_w_per_hz),
                backhaul_capacity: q(t.backhaul_capacity_bps),
                embb_packet_size: q(t.embb_packet_bits),
                urllc_packet_size: q(t.urllc_packet_bits),
                num_embb: Some(t.num_embb),
                num_urllc: Some(t.num_urllc),
                path_loss_exponent: Some(t.path_loss_exponent),
            },
            constellation: RawConstellation {
                preset: None,
                name: Some(c.name.clone()),
                beam_bandwidth: q(c.beam_bandwidth_hz),
                sat_capacity: q(c.sat_capacity_bps),
                carrier_to_noise: q(c.carrier_to_noise_db),
                cn_interpretation: Some(c.cn_interpretation),
            },
            channel: if s.channels.is_some() || s.embb_bandwidths.is_some() {
                Some(RawChannel {
                    gammas: s
                        .channels
                        .as_ref()
                        .map(|chs| chs.iter().map(CellChannel::user_gammas).collect()),
                    embb_bandwidths: s.embb_bandwidths.clone(),
                })
            } else {
                None
            },
            simulation: Some(RawSimulation {
                horizon: q(s.sim.horizon_s),
                warmup_fraction: Some(s.sim.warmup_fraction),
                drop_depth: q(s.sim.drop_depth_s),
                service: Some(s.sim.service),
                slot_length: q(s.sim.slot_length_s),
            }),
        }
    }
}

/// omega_i proportional to distance from the beam center, normalized.
pub fn edge_weights(distances_m: &[f64], n: usize) -> Result<Vec<f64>> {
    if distances_m.len() != n {
        return Err(Error::Validation(format!(
            "sbs_beam_distances has {} entries, expected N = {n}",
            distances_m.len()
        )));
    }
    if distances_m.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::Validation("sbs_beam_distances must be >= 0".into()));
    }
    let total: f64 = distances_m.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let mut w: Vec<f64> = distances_m.iter().map(|d| d / total).collect();
    // push the rounding residue onto the largest weight so the sum is exact
    let residue = 1.0 - w.iter().sum::<f64>();
    let imax = (0..n).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
    w[imax] += residue;
    Ok(w)
}
