#![allow(dead_code)]

use transit_core::consts::{celsius_to_kelvin, EQUAL_AREA_RADIUS_3MM};
use transit_core::dynamics::{default_dt, DecoherenceParams, MeasurementConfig};
use transit_core::kinematics::CellGeometry;
use transit_core::optics::{BeamProfile, BeamShape};

pub fn cell(p_reset: f64) -> CellGeometry {
    CellGeometry::new(EQUAL_AREA_RADIUS_3MM, celsius_to_kelvin(58.0), p_reset).unwrap()
}

pub fn config(shape: BeamShape, diameter: f64, kappa: f64, larmor_khz: f64, duty: f64, duration: f64) -> MeasurementConfig {
    MeasurementConfig {
        geometry: cell(0.0),
        beam: BeamProfile::from_diameter(shape, diameter).unwrap(),
        kappa,
        larmor_khz,
        duty_cycle: duty,
        dt: default_dt(larmor_khz),
        atom_step: 2.5e-4,
        duration,
        n_sim: 1,
        decoherence: DecoherenceParams::none(),
        stationary_atoms: false,
        relax_interval: 2e-3,
    }
}

/// Uniform coupling: a tophat wider than the cell over frozen atoms.
pub fn homogeneous(kappa: f64, gamma: f64, larmor_khz: f64, duty: f64, duration: f64) -> MeasurementConfig {
    let mut cfg = config(BeamShape::Tophat, 4.0, kappa, larmor_khz, duty, duration);
    cfg.stationary_atoms = true;
    cfg.decoherence.gamma_background = gamma;
    cfg
}

pub fn var(xs: &[f64]) -> f64 {
    transit_core::stats::variance(xs)
}

pub fn cov(a: &[f64], b: &[f64]) -> f64 {
    transit_core::stats::covariance(a, b)
}

/// |a − b| in units of the combined standard error.
pub fn z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    (a - b).abs() / (se_a * se_a + se_b * se_b).sqrt()
}

pub fn var_se(v: f64, n: usize) -> f64 {
    v * (2.0 / (n as f64 - 1.0)).sqrt()
}
