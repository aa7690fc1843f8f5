//! Physical constants (CODATA 2018) and default experimental parameters.

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of a ¹⁷¹Yb⁺ ion in kg.
pub const YB171_MASS: f64 = 170.936_325_8 * ATOMIC_MASS_UNIT;

/// Raman laser wavelength in meters.
pub const RAMAN_WAVELENGTH: f64 = 355e-9;

/// Wavevector difference of two Raman beams crossing at right angles.
pub fn default_delta_k() -> f64 {
    std::f64::consts::SQRT_2 * 2.0 * PI / RAMAN_WAVELENGTH
}

/// Coulomb constant `e² / (4π ε₀)` in J·m.
pub fn coulomb_strength() -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * VACUUM_PERMITTIVITY)
}

/// Converts an ordinary frequency in Hz to angular frequency in rad/s.
///
/// This is the only place where the factor `2π` between the two enters.
#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}
