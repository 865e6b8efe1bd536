//! JSON configuration files.
//!
//! ```json
//! {
//!   "constants": { "hbar": 1.054571817e-34, "k_b": 1.380649e-23 },
//!   "cavity_a": { "omega_laser_over_2pi": 3.7e14, "length": 1e-3, "kappa": 8.8e7,
//!                 "power": 0.05, "detuning_over_omega_m": 1.0 },
//!   "cavity_b": { ... },
//!   "mirror": { "omega_m_over_2pi": 1e7, "gamma_m_over_2pi": 100, "mass": 5e-12,
//!               "temperature": 0.4 }
//! }
//! ```
//!
//! Every frequency accepts either the angular value (rad/s) under its plain
//! name or the cyclic value (Hz) under `<name>_over_2pi`. Detunings may also
//! be given as `detuning_over_omega_m`. `constants` and `omega_cavity`
//! (defaults to the laser frequency) are optional.

use std::f64::consts::TAU;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CavityLabel, CavityParams, MirrorParams, PhysicalConstants, SystemParams};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    constants: Option<PhysicalConstants>,
    cavity_a: RawCavity,
    cavity_b: RawCavity,
    mirror: RawMirror,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCavity {
    omega_laser: Option<f64>,
    omega_laser_over_2pi: Option<f64>,
    omega_cavity: Option<f64>,
    omega_cavity_over_2pi: Option<f64>,
    length: f64,
    kappa: Option<f64>,
    kappa_over_2pi: Option<f64>,
    power: f64,
    detuning: Option<f64>,
    detuning_over_2pi: Option<f64>,
    detuning_over_omega_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMirror {
    omega_m: Option<f64>,
    omega_m_over_2pi: Option<f64>,
    gamma_m: Option<f64>,
    gamma_m_over_2pi: Option<f64>,
    mass: f64,
    temperature: f64,
}

fn angular(
    path: &str,
    name: &str,
    rad: Option<f64>,
    hz: Option<f64>,
) -> Result<Option<f64>> {
    match (rad, hz) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "{path}: give only one of `{name}` and `{name}_over_2pi`"
        ))),
        (Some(w), None) => Ok(Some(w)),
        (None, Some(f)) => Ok(Some(TAU * f)),
        (None, None) => Ok(None),
    }
}

fn required(path: &str, name: &str, value: Option<f64>) -> Result<f64> {
    value.ok_or_else(|| {
        Error::Config(format!(
            "{path}: missing `{name}` (or `{name}_over_2pi`)"
        ))
    })
}

impl RawCavity {
    fn resolve(self, label: CavityLabel, path: &str, omega_m: f64) -> Result<CavityParams> {
        let omega_laser = required(
            path,
            "omega_laser",
            angular(path, "omega_laser", self.omega_laser, self.omega_laser_over_2pi)?,
        )?;
        let omega_cavity = angular(
            path,
            "omega_cavity",
            self.omega_cavity,
            self.omega_cavity_over_2pi,
        )?
        .unwrap_or(omega_laser);
        let kappa = required(path, "kappa", angular(path, "kappa", self.kappa, self.kappa_over_2pi)?)?;
        let detuning = match (
            angular(path, "detuning", self.detuning, self.detuning_over_2pi)?,
            self.detuning_over_omega_m,
        ) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(format!(
                    "{path}: give only one detuning form"
                )))
            }
            (Some(d), None) => d,
            (None, Some(r)) => r * omega_m,
            (None, None) => 0.0,
        };
        Ok(CavityParams {
            label,
            omega_laser,
            omega_cavity,
            length: self.length,
            kappa,
            power: self.power,
            detuning,
        })
    }
}

pub fn parse_config(text: &str) -> Result<SystemParams> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let m = raw.mirror;
    let omega_m = required(
        "mirror",
        "omega_m",
        angular("mirror", "omega_m", m.omega_m, m.omega_m_over_2pi)?,
    )?;
    let gamma_m = required(
        "mirror",
        "gamma_m",
        angular("mirror", "gamma_m", m.gamma_m, m.gamma_m_over_2pi)?,
    )?;
    let mirror = MirrorParams {
        omega_m,
        gamma_m,
        mass: m.mass,
        temperature: m.temperature,
    };
    let params = SystemParams::new(
        raw.cavity_a.resolve(CavityLabel::A, "cavity_a", omega_m)?,
        raw.cavity_b.resolve(CavityLabel::B, "cavity_b", omega_m)?,
        mirror,
        raw.constants.unwrap_or_default(),
    )?;
    for w in params.warnings() {
        log::warn!("{w}");
    }
    Ok(params)
}

pub fn load_config(path: &Path) -> Result<SystemParams> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
