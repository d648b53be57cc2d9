//! Conversion between physical parameter units and the per-sample units the
//! model operates in.
//!
//! Values are converted in display space (`Q`, `sigma`, `B`, `gamma`,
//! `omega`, i.e. standard deviations and slopes, not their squares). Each
//! formula first rescales the printed time unit to seconds (factor `u`),
//! then applies the sampling-rate power appropriate to the process:
//!
//! - white noise: `sigma_s = sigma * u * sqrt(fs)`
//! - random walk: `gamma_s = gamma * u / sqrt(fs)`
//! - drift ramp: `omega_s = omega * u / fs`
//! - quantization: `Q_s = Q * u * fs`
//! - bias instability: `B_s = B * u`
//!
//! The sampling-rate powers are pinned by a simulation oracle in the tests:
//! simulating with converted per-sample parameters must reproduce the
//! textbook Allan-variance magnitudes at matching physical averaging times.

use crate::error::{Error, Result};
use crate::model::ProcessKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    GyroRate,
    Accel,
}

impl Quantity {
    pub fn tag(&self) -> &'static str {
        match self {
            Quantity::GyroRate => "gyro_rate",
            Quantity::Accel => "accel",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Quantity> {
        match tag.to_ascii_lowercase().as_str() {
            "gyro_rate" | "gyro" => Some(Quantity::GyroRate),
            "accel" | "accelerometer" => Some(Quantity::Accel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Physical value to per-sample value.
    ToPerSample,
    /// Per-sample value back to the physical unit.
    ToPhysical,
}

#[derive(Debug, Clone)]
pub struct UnitSpec {
    pub quantity: Quantity,
    /// Unit token of the physical value, e.g. `deg/sqrt(hr)`.
    pub unit: String,
    pub sample_rate_hz: f64,
}

const HR: f64 = 3600.0;

/// Supported unit tokens and their to-seconds factors, per process and
/// sensor quantity. The first entry is the Table-style convention.
fn unit_table(kind: ProcessKind, quantity: Quantity) -> &'static [(&'static str, f64)] {
    use ProcessKind::*;
    use Quantity::*;
    match (kind, quantity) {
        (Qn, GyroRate) => &[("deg", 1.0), ("arcsec", 1.0 / 3600.0)],
        (Qn, Accel) => &[("m/s", 1.0)],
        (Wn, GyroRate) => &[("deg/sqrt(hr)", 1.0 / 60.0), ("deg/sqrt(s)", 1.0)],
        (Wn, Accel) => &[("m/s/sqrt(hr)", 1.0 / 60.0), ("m/s/sqrt(s)", 1.0)],
        (Bi, GyroRate) => &[("deg/hr", 1.0 / HR), ("deg/s", 1.0)],
        (Bi, Accel) => &[("m/s/hr", 1.0 / HR), ("m/s/s", 1.0)],
        (Rw, GyroRate) => &[("deg/hr/sqrt(hr)", 1.0 / (HR * 60.0)), ("deg/s/sqrt(s)", 1.0)],
        (Rw, Accel) => &[("m/s/hr/sqrt(hr)", 1.0 / (HR * 60.0)), ("m/s/s/sqrt(s)", 1.0)],
        (Dr, GyroRate) => &[("deg/hr/hr", 1.0 / (HR * HR)), ("deg/s/s", 1.0)],
        (Dr, Accel) => &[("m/s/hr/hr", 1.0 / (HR * HR)), ("m/s/s/s", 1.0)],
    }
}

pub fn supported_units(kind: ProcessKind, quantity: Quantity) -> Vec<&'static str> {
    unit_table(kind, quantity).iter().map(|&(t, _)| t).collect()
}

fn seconds_factor(kind: ProcessKind, spec: &UnitSpec) -> Result<f64> {
    unit_table(kind, spec.quantity)
        .iter()
        .find(|&&(t, _)| t.eq_ignore_ascii_case(&spec.unit))
        .map(|&(_, u)| u)
        .ok_or_else(|| Error::UnknownUnit {
            token: spec.unit.clone(),
            supported: supported_units(kind, spec.quantity)
                .iter()
                .map(|s| s.to_string())
                .collect(),
        })
}

/// Convert a display-space parameter value between a physical unit and
/// per-sample units.
pub fn convert_units(
    value: f64,
    kind: ProcessKind,
    direction: Direction,
    spec: &UnitSpec,
) -> Result<f64> {
    let fs = spec.sample_rate_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Domain(format!(
            "sample rate must be positive and finite, got {fs}"
        )));
    }
    let u = seconds_factor(kind, spec)?;
    let factor = match kind {
        ProcessKind::Qn => u * fs,
        ProcessKind::Wn => u * fs.sqrt(),
        ProcessKind::Bi => u,
        ProcessKind::Rw => u / fs.sqrt(),
        ProcessKind::Dr => u / fs,
    };
    Ok(match direction {
        Direction::ToPerSample => value * factor,
        Direction::ToPhysical => value / factor,
    })
}
