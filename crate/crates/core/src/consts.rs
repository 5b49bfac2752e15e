//! Physical constants (SI) and the 87Rb / probe values used as defaults.

use core::f64::consts::PI;

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Mass of a 87Rb atom in kg.
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;

/// D2 natural linewidth, 2π × 6.07 MHz, in rad/s.
pub const RB87_D2_GAMMA: f64 = 2.0 * PI * 6.07e6;
/// D2 wavelength in m.
pub const RB87_D2_WAVELENGTH: f64 = 780e-9;
/// F'=1 ↔ F'=3 excited-state splitting, 2π × 423.60 MHz.
pub const RB87_SPLIT_13: f64 = 2.0 * PI * 423.60e6;
/// F'=2 ↔ F'=3 excited-state splitting, 2π × 266.65 MHz.
pub const RB87_SPLIT_23: f64 = 2.0 * PI * 266.65e6;

/// Radius (mm) of the circle with the same area as a 3 mm × 3 mm square.
pub const EQUAL_AREA_RADIUS_3MM: f64 = 1.692_568_750_643_269_9;

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + 273.15
}
