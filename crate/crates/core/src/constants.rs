//! Physical constants (SI, CODATA 2018 exact definitions where available).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Planck constant, J·s (exact).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s. Derived from `PLANCK_H` so that `h = 2π·ħ` holds to machine precision.
pub const HBAR: f64 = PLANCK_H / (2.0 * PI);
/// Elementary charge, C (exact).
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Constant table handed to code that wants them as a value rather than as globals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub planck_h: f64,
    pub electron_charge: f64,
    pub bohr_magneton: f64,
    pub speed_of_light: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        hbar: HBAR,
        planck_h: PLANCK_H,
        electron_charge: ELECTRON_CHARGE,
        bohr_magneton: BOHR_MAGNETON,
        speed_of_light: SPEED_OF_LIGHT,
    };

    /// Photon energy hν at the given vacuum wavelength.
    pub fn photon_energy(&self, wavelength: f64) -> f64 {
        self.planck_h * self.speed_of_light / wavelength
    }
}

/// Photon energy hν (J) at a vacuum wavelength (m).
pub fn photon_energy(wavelength: f64) -> f64 {
    PhysicalConstants::SI.photon_energy(wavelength)
}
