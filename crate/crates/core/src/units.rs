//! Physical quantities in config files.
//!
//! A quantity is either a bare number, already in the SI base unit of its
//! field, or a string carrying an explicit unit suffix such as `"100 MHz"`,
//! `"-174 dBm/Hz"` or `"30 B"`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a config field measures. Decides which unit suffixes are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Hz.
    Frequency,
    /// bits/s.
    Rate,
    /// watts.
    Power,
    /// watts per Hz.
    NoiseDensity,
    /// bits.
    Size,
    /// meters.
    Distance,
    /// seconds.
    Time,
    /// decibels, kept in dB.
    Decibel,
}

/// Raw config value before unit resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl Quantity {
    /// Resolves the quantity to its SI base value for `dim`.
    pub fn resolve(&self, dim: Dimension, field: &str) -> Result<f64> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse_with_unit(s, dim)
                .ok_or_else(|| Error::Parse(format!("field `{field}`: cannot read {s:?} as {dim:?}"))),
        }
    }
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '-'
                || c == '+'
                || ((c == 'e' || c == 'E')
                    && i > 0
                    && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let value: f64 = s[..end].trim().parse().ok()?;
    Some((value, s[end..].trim()))
}

fn parse_with_unit(s: &str, dim: Dimension) -> Option<f64> {
    let (v, unit) = split_number(s)?;
    let db_to_lin = |db: f64| 10f64.powf(db / 10.0);
    let out = match dim {
        Dimension::Frequency => match unit {
            "" | "Hz" => v,
            "kHz" => v * 1e3,
            "MHz" | "Mhz" => v * 1e6,
            "GHz" | "Ghz" => v * 1e9,
            _ => return None,
        },
        Dimension::Rate => match unit {
            "" | "bps" | "bit/s" | "b/s" => v,
            "kbps" | "kbit/s" => v * 1e3,
            "Mbps" | "Mbit/s" => v * 1e6,
            "Gbps" | "Gbit/s" => v * 1e9,
            _ => return None,
        },
        Dimension::Power => match unit {
            "" | "W" => v,
            "mW" => v * 1e-3,
            "dBW" => db_to_lin(v),
            "dBm" => db_to_lin(v) * 1e-3,
            _ => return None,
        },
        Dimension::NoiseDensity => match unit {
            "" | "W/Hz" => v,
            "dBW/Hz" => db_to_lin(v),
            "dBm/Hz" => db_to_lin(v) * 1e-3,
            _ => return None,
        },
        Dimension::Size => match unit {
            "" | "bit" | "bits" | "b" => v,
            "B" | "byte" | "bytes" => v * 8.0,
            "kB" => v * 8e3,
            _ => return None,
        },
        Dimension::Distance => match unit {
            "" | "m" => v,
            "km" => v * 1e3,
            _ => return None,
        },
        Dimension::Time => match unit {
            "" | "s" => v,
            "ms" => v * 1e-3,
            "us" | "µs" => v * 1e-6,
            _ => return None,
        },
        Dimension::Decibel => match unit {
            "" | "dB" | "db" => v,
            _ => return None,
        },
    };
    Some(out)
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
