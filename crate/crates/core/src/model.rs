//! Plain data shared by every stage of the pipeline.
//!
//! All dynamical quantities are dimensionless: positions in units of `1/k_f`,
//! momenta in units of `hbar k_f`, time in units of `1/Omega`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Centre-of-mass position and momentum plus the Bloch vector of the internal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub x: f64,
    pub p: f64,
    /// In-phase (synphase) component of the dipole moment.
    pub u: f64,
    /// Quadrature component of the dipole moment.
    pub v: f64,
    /// Population inversion.
    pub z: f64,
    pub tau: f64,
}

impl AtomState {
    /// Ground internal state at rest in `(x, p)`.
    pub fn ground(x: f64, p: f64) -> Self {
        Self {
            x,
            p,
            u: 0.0,
            v: 0.0,
            z: -1.0,
            tau: 0.0,
        }
    }

    pub fn bloch_norm_sq(&self) -> f64 {
        self.u * self.u + self.v * self.v + self.z * self.z
    }

    pub fn is_finite(&self) -> bool {
        (self.x + self.p + self.u + self.v + self.z + self.tau).is_finite()
    }
}

/// Time derivative of the five dynamical variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtomStateDerivative {
    pub dx: f64,
    pub dp: f64,
    pub du: f64,
    pub dv: f64,
    pub dz: f64,
}

/// Caesium D2 line defaults used for SI conversions.
pub const CAESIUM_WAVELENGTH_M: f64 = 852.1e-9;
pub const CAESIUM_MASS_KG: f64 = 2.206_946_95e-25;
pub const DEFAULT_RABI_HZ: f64 = 1.0e10;

fn default_rabi() -> Option<f64> {
    Some(DEFAULT_RABI_HZ)
}
fn default_wavelength() -> Option<f64> {
    Some(CAESIUM_WAVELENGTH_M)
}
fn default_mass() -> Option<f64> {
    Some(CAESIUM_MASS_KG)
}
fn default_divisor() -> f64 {
    16.0
}

/// Normalized lattice parameters plus optional SI constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeParams {
    /// Detuning `(omega_f - omega_a) / Omega`.
    pub delta: f64,
    /// Decay rate `Gamma / Omega`.
    pub gamma: f64,
    /// Recoil frequency `hbar k_f^2 / (m_a Omega)`.
    pub omega_r: f64,
    #[serde(default = "default_rabi")]
    pub rabi_hz: Option<f64>,
    #[serde(default = "default_wavelength")]
    pub wavelength_m: Option<f64>,
    #[serde(default = "default_mass")]
    pub atom_mass_kg: Option<f64>,
    /// Denominator of the detuning term `delta^2 / divisor` in the analytic diffusion coefficient.
    #[serde(default = "default_divisor")]
    pub diffusion_delta_divisor: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            delta: -0.001,
            gamma: 3.3e-3,
            omega_r: 1.0e-5,
            rabi_hz: default_rabi(),
            wavelength_m: default_wavelength(),
            atom_mass_kg: default_mass(),
            diffusion_delta_divisor: default_divisor(),
        }
    }
}

impl LatticeParams {
    pub fn with_delta(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::config("params.delta", "must be finite"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("params.gamma", "must be finite and >= 0"));
        }
        if !(self.omega_r > 0.0 && self.omega_r < 1.0) {
            return Err(Error::config("params.omega_r", "must lie in (0, 1)"));
        }
        if !(self.diffusion_delta_divisor > 0.0) {
            return Err(Error::config(
                "params.diffusion_delta_divisor",
                "must be positive",
            ));
        }
        for (key, value) in [
            ("params.rabi_hz", self.rabi_hz),
            ("params.wavelength_m", self.wavelength_m),
            ("params.atom_mass_kg", self.atom_mass_kg),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(key, "must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// One spontaneous-emission event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpontaneousEvent {
    pub tau_event: f64,
    /// State immediately before the jump.
    pub pre_state: AtomState,
    pub recoil: f64,
    /// Time since the previous event, or since the trajectory start for the first one.
    pub interval: f64,
    /// Energy just after the jump.
    pub post_energy: f64,
}

/// A state snapshot with its energy, used for sign changes and decimated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub state: AtomState,
    pub energy: f64,
}
