//! Probe beam profiles and atom-light coupling.

use core::f64::consts::{PI, SQRT_2};

use crate::consts::{HBAR, RB87_D2_GAMMA, RB87_D2_WAVELENGTH, RB87_SPLIT_13, RB87_SPLIT_23, SPEED_OF_LIGHT};
use crate::kinematics::{CellGeometry, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamShape {
    Gaussian,
    Tophat,
}

impl BeamShape {
    pub fn name(self) -> &'static str {
        match self {
            BeamShape::Gaussian => "gaussian",
            BeamShape::Tophat => "tophat",
        }
    }
}

/// Transverse probe profile. For a Gaussian beam `radius` is the 1/e²
/// intensity radius w; for a tophat it is the hard edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamProfile {
    pub shape: BeamShape,
    pub radius: f64,
    pub center: Vec2,
}

impl BeamProfile {
    /// Centered beam from its (1/e² or hard-edge) diameter in mm.
    pub fn from_diameter(shape: BeamShape, diameter: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "radius_beam",
                reason: "must be positive",
            });
        }
        Ok(Self {
            shape,
            radius: 0.5 * diameter,
            center: Vec2::ZERO,
        })
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Relative intensity (peak 1) at `point`.
#[inline]
pub fn beam_intensity(profile: &BeamProfile, point: Vec2) -> f64 {
    let r2 = (point - profile.center).norm_sq();
    let w2 = profile.radius * profile.radius;
    match profile.shape {
        BeamShape::Gaussian => {
            let arg = 2.0 * r2 / w2;
            // below 1e-17 of the peak; skipping exp matters for narrow beams
            if arg > 40.0 {
                0.0
            } else {
                libm::exp(-arg)
            }
        }
        BeamShape::Tophat => {
            if r2 <= w2 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Mean of u over the uniform disk of the cell.
pub fn disk_mean_intensity(profile: &BeamProfile, geom: &CellGeometry) -> f64 {
    disk_mean_power(profile, geom, 1)
}

/// Mean of u² over the uniform disk of the cell.
pub fn disk_mean_intensity_sq(profile: &BeamProfile, geom: &CellGeometry) -> f64 {
    disk_mean_power(profile, geom, 2)
}

fn disk_mean_power(profile: &BeamProfile, geom: &CellGeometry, power: i32) -> f64 {
    let big_r2 = geom.radius * geom.radius;
    let w2 = profile.radius * profile.radius;
    if profile.center == Vec2::ZERO {
        match profile.shape {
            BeamShape::Gaussian => {
                let k = 2.0 * power as f64 / w2;
                (1.0 - libm::exp(-k * big_r2)) / (k * big_r2)
            }
            BeamShape::Tophat => (w2 / big_r2).min(1.0),
        }
    } else {
        disk_mean_power_quadrature(profile, geom, power, 400, 400)
    }
}

/// Midpoint rule in (r², θ), i.e. equal-area cells over the disk.
pub fn disk_mean_power_quadrature(profile: &BeamProfile, geom: &CellGeometry, power: i32, rings: usize, sectors: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..rings {
        let r = geom.radius * libm::sqrt((i as f64 + 0.5) / rings as f64);
        for j in 0..sectors {
            let theta = 2.0 * PI * (j as f64 + 0.5) / sectors as f64;
            sum += libm::pow(beam_intensity(profile, Vec2::from_polar(r, theta)), power as f64);
        }
    }
    sum / (rings * sectors) as f64
}

/// Optical and atomic inputs of the effective coupling formula (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    /// Excited-state natural width, rad/s.
    pub gamma_natural: f64,
    /// m
    pub wavelength: f64,
    /// Atom-light interaction area, m².
    pub area_interaction: f64,
    /// Probe detuning, rad/s (signed).
    pub detuning: f64,
    pub split_13: f64,
    pub split_23: f64,
    /// Peak probe power, W.
    pub power_peak: f64,
    pub duty_cycle: f64,
    pub atom_number: f64,
    pub photon_angular_frequency: f64,
    pub hbar: f64,
    pub c_light: f64,
}

/// Whether κ is evaluated at the peak or at the duty-cycle averaged power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerAveraging {
    Peak,
    TimeAveraged,
}

/// Atom number that, with the reference optics, gives κ = 1.61 ms^-1/2.
pub const REFERENCE_ATOM_NUMBER: f64 = 5.6606e10;

impl CouplingParams {
    /// 87Rb D2 probe at 2.5 GHz blue detuning, 5 mW peak, duty 0.1, 3 × 3 mm
    /// interaction area.
    pub fn reference() -> Self {
        Self {
            gamma_natural: RB87_D2_GAMMA,
            wavelength: RB87_D2_WAVELENGTH,
            area_interaction: 9e-6,
            detuning: -2.0 * PI * 2.5e9,
            split_13: RB87_SPLIT_13,
            split_23: RB87_SPLIT_23,
            power_peak: 5e-3,
            duty_cycle: 0.1,
            atom_number: REFERENCE_ATOM_NUMBER,
            photon_angular_frequency: 2.0 * PI * SPEED_OF_LIGHT / RB87_D2_WAVELENGTH,
            hbar: HBAR,
            c_light: SPEED_OF_LIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detuning == 0.0 || !self.detuning.is_finite() {
            return Err(Error::InvalidParameter {
                name: "detuning",
                reason: "must be nonzero",
            });
        }
        if !(self.area_interaction > 0.0) {
            return Err(Error::InvalidParameter {
                name: "area_interaction",
                reason: "must be positive",
            });
        }
        if self.power_peak < 0.0 {
            return Err(Error::InvalidParameter {
                name: "power_peak",
                reason: "must be nonnegative",
            });
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "duty_cycle",
                reason: "must lie in (0, 1]",
            });
        }
        for (name, v) in [
            ("gamma_natural", self.gamma_natural),
            ("wavelength", self.wavelength),
            ("atom_number", self.atom_number),
            ("photon_angular_frequency", self.photon_angular_frequency),
            ("hbar", self.hbar),
            ("c_light", self.c_light),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive",
                });
            }
        }
        Ok(())
    }
}

/// Vector polarizability coefficient a₁ of the F=2 → 5P3/2 probe transition.
pub fn vector_coefficient_a1(params: &CouplingParams) -> Result<f64> {
    let d = params.detuning;
    if d == 0.0 {
        return Err(Error::SingularDetuning { detuning: d });
    }
    let t13 = 1.0 - params.split_13 / d;
    let t23 = 1.0 - params.split_23 / d;
    if libm::fabs(t13) < 1e-12 || libm::fabs(t23) < 1e-12 {
        return Err(Error::SingularDetuning { detuning: d });
    }
    Ok(SQRT_2 / 100.0 * (-15.0 / t13 - 25.0 / t23 + 140.0))
}

/// Effective atom-light coupling κ in ms^-1/2 (positive for blue detuning,
/// Δ < 0, with a₁ > 0).
pub fn effective_kappa(params: &CouplingParams, averaging: PowerAveraging) -> Result<f64> {
    params.validate()?;
    if params.power_peak == 0.0 {
        return Ok(0.0);
    }
    let a1 = vector_coefficient_a1(params)?;
    let power = match averaging {
        PowerAveraging::Peak => params.power_peak,
        PowerAveraging::TimeAveraged => params.power_peak * params.duty_cycle,
    };
    let photon_energy = params.hbar * params.photon_angular_frequency;
    let prefactor =
        -params.gamma_natural * params.wavelength * params.wavelength / (16.0 * PI * params.area_interaction * params.detuning);
    let kappa_si = prefactor * a1 * libm::sqrt(power * params.atom_number / photon_energy);
    // s^-1/2 -> ms^-1/2
    Ok(kappa_si / libm::sqrt(1e3))
}

/// Atom number for which [`effective_kappa`] returns `target` (other
/// parameters fixed).
pub fn atom_number_for_kappa(params: &CouplingParams, target: f64, averaging: PowerAveraging) -> Result<f64> {
    let mut unit = *params;
    unit.atom_number = 1.0;
    let k1 = effective_kappa(&unit, averaging)?;
    if k1 == 0.0 {
        return Err(Error::InvalidParameter {
            name: "power_peak",
            reason: "zero power cannot reach a nonzero coupling",
        });
    }
    Ok((target / k1) * (target / k1))
}

/// Spatially resolved coupling. `normalization` is the cell-averaged relative
/// intensity, so that an atom's time-averaged coupling equals
/// `kappa_effective / sqrt(n_sim)` at fixed total probe power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingField {
    pub kappa_effective: f64,
    pub normalization: f64,
}

impl CouplingField {
    pub fn new(kappa_effective: f64, profile: &BeamProfile, geom: &CellGeometry) -> Self {
        Self {
            kappa_effective,
            normalization: disk_mean_intensity(profile, geom),
        }
    }

    /// Per-atom coupling per unit relative intensity.
    pub fn scale(&self, n_sim: usize) -> f64 {
        self.kappa_effective / (self.normalization * libm::sqrt(n_sim as f64))
    }
}

pub fn instantaneous_coupling(field: &CouplingField, profile: &BeamProfile, point: Vec2, n_sim: usize) -> f64 {
    field.scale(n_sim) * beam_intensity(profile, point)
}

/// Square pulse train at twice the Larmor frequency, one pulse of width
/// `duty·π/Ω` centered on each extremum of cos(Ωt). With `duty >= 1` or no
/// precession the probe is continuous.
pub fn strobe_envelope(t: f64, larmor: f64, duty: f64) -> f64 {
    if duty >= 1.0 || larmor <= 0.0 {
        return 1.0;
    }
    let period = PI / larmor;
    let phase = t - libm::floor(t / period) * period;
    let dist = phase.min(period - phase);
    if dist <= 0.5 * duty * period {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::EQUAL_AREA_RADIUS_3MM;

    fn cell() -> CellGeometry {
        CellGeometry::new(EQUAL_AREA_RADIUS_3MM, 331.15, 0.0).unwrap()
    }

    #[test]
    fn gaussian_profile_values() {
        let b = BeamProfile::from_diameter(BeamShape::Gaussian, 2.0).unwrap();
        assert_eq!(beam_intensity(&b, Vec2::ZERO), 1.0);
        let at_w = beam_intensity(&b, Vec2::new(1.0, 0.0));
        assert!((at_w - 0.135_335_283_236_612_7).abs() < 1e-12);
    }

    #[test]
    fn tophat_edge() {
        let b = BeamProfile::from_diameter(BeamShape::Tophat, 2.0).unwrap();
        assert_eq!(beam_intensity(&b, Vec2::new(0.99, 0.0)), 1.0);
        assert_eq!(beam_intensity(&b, Vec2::new(1.01, 0.0)), 0.0);
    }

    #[test]
    fn a1_far_detuned_limit_is_sqrt2() {
        let mut p = CouplingParams::reference();
        p.detuning = -1e30;
        assert!((vector_coefficient_a1(&p).unwrap() - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn a1_reference_value() {
        // hand evaluation: √2/100·(−15/1.169440 − 25/1.106660 + 140) = 1.47904
        let a1 = vector_coefficient_a1(&CouplingParams::reference()).unwrap();
        assert!((a1 - 1.4790).abs() < 5e-5, "a1 = {a1}");
    }

    #[test]
    fn a1_pole_is_reported() {
        let mut p = CouplingParams::reference();
        p.detuning = p.split_23;
        assert!(matches!(vector_coefficient_a1(&p), Err(Error::SingularDetuning { .. })));
    }

    #[test]
    fn a1_monotone_in_inverse_detuning_on_blue_branch() {
        let mut p = CouplingParams::reference();
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=90 {
            let ghz = 1.0 + 0.1 * k as f64;
            p.detuning = -2.0 * PI * ghz * 1e9;
            let a1 = vector_coefficient_a1(&p).unwrap();
            let inv = 1.0 / p.detuning;
            if let Some((inv0, a0)) = prev {
                // 1/Δ increases toward 0 as |Δ| grows; a₁ falls toward √2
                assert!(inv > inv0 && a1 < a0 && a1 > SQRT_2);
            }
            prev = Some((inv, a1));
        }
    }

    #[test]
    fn kappa_zero_power_and_sqrt_scaling() {
        let mut p = CouplingParams::reference();
        let k1 = effective_kappa(&p, PowerAveraging::TimeAveraged).unwrap();
        p.power_peak *= 4.0;
        let k4 = effective_kappa(&p, PowerAveraging::TimeAveraged).unwrap();
        assert!((k4 / k1 - 2.0).abs() < 1e-12);
        p.power_peak = 0.0;
        assert_eq!(effective_kappa(&p, PowerAveraging::TimeAveraged).unwrap(), 0.0);
    }

    #[test]
    fn kappa_is_positive_for_blue_detuning() {
        let k = effective_kappa(&CouplingParams::reference(), PowerAveraging::TimeAveraged).unwrap();
        assert!(k > 0.0);
    }

    #[test]
    fn reference_parameters_reproduce_calibrated_kappa() {
        let k = effective_kappa(&CouplingParams::reference(), PowerAveraging::TimeAveraged).unwrap();
        assert!((k - 1.61).abs() < 1e-3, "kappa = {k}");
        let n = atom_number_for_kappa(&CouplingParams::reference(), 1.61, PowerAveraging::TimeAveraged).unwrap();
        assert!((n / REFERENCE_ATOM_NUMBER - 1.0).abs() < 2e-3);
    }

    #[test]
    fn zero_area_is_a_domain_error() {
        let mut p = CouplingParams::reference();
        p.area_interaction = 0.0;
        assert!(effective_kappa(&p, PowerAveraging::Peak).is_err());
    }

    #[test]
    fn frozen_atoms_under_covering_tophat_get_uniform_weight() {
        let geom = cell();
        let b = BeamProfile::from_diameter(BeamShape::Tophat, 3.4).unwrap();
        let field = CouplingField::new(1.61, &b, &geom);
        let w = instantaneous_coupling(&field, &b, Vec2::ZERO, 400);
        assert!((w - 1.61 / 20.0).abs() < 1e-12);
        let small = BeamProfile::from_diameter(BeamShape::Tophat, 1.0).unwrap();
        let f2 = CouplingField::new(1.61, &small, &geom);
        assert_eq!(instantaneous_coupling(&f2, &small, Vec2::new(0.9, 0.0), 400), 0.0);
    }

    #[test]
    fn analytic_disk_means_match_quadrature() {
        // Power equivalence: the normalization that fixes the cell-integrated
        // coupling must agree with direct integration for every beam size.
        let geom = cell();
        for d in [0.6, 0.8, 1.0, 1.4, 2.0, 3.4] {
            for shape in [BeamShape::Gaussian, BeamShape::Tophat] {
                let b = BeamProfile::from_diameter(shape, d).unwrap();
                for power in [1, 2] {
                    let exact = disk_mean_power(&b, &geom, power);
                    let quad = disk_mean_power_quadrature(&b, &geom, power, 4000, 48);
                    assert!((quad / exact - 1.0).abs() < 5e-3, "{shape:?} d={d} p={power}: {quad} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn strobe_reference_timing() {
        // 500 kHz Larmor: Ω = 2π·500 rad/ms, pulse period 1 µs, width 0.1 µs
        let omega = 2.0 * PI * 500.0;
        let period = PI / omega;
        assert!((period - 1e-3).abs() < 1e-15);
        assert_eq!(strobe_envelope(0.0, omega, 0.1), 1.0);
        assert_eq!(strobe_envelope(0.049e-3, omega, 0.1), 1.0);
        assert_eq!(strobe_envelope(0.051e-3, omega, 0.1), 0.0);
        assert_eq!(strobe_envelope(0.5e-3, omega, 0.1), 0.0);
        assert_eq!(strobe_envelope(0.951e-3, omega, 0.1), 1.0);
        assert_eq!(strobe_envelope(0.3e-3, omega, 1.0), 1.0);
    }

    #[test]
    fn strobe_mean_is_duty_and_one_pulse_per_half_period() {
        let omega = 2.0 * PI * 100.0;
        let period = PI / omega;
        let n = 200_000;
        let mut on = 0usize;
        let mut rising = 0usize;
        let mut prev = strobe_envelope(-0.5 * period / n as f64, omega, 0.25);
        for i in 0..n {
            let t = (i as f64 + 0.5) * 10.0 * period / n as f64;
            let s = strobe_envelope(t, omega, 0.25);
            on += s as usize;
            if s > prev {
                rising += 1;
            }
            prev = s;
        }
        assert!((on as f64 / n as f64 - 0.25).abs() < 1e-3);
        // ten half periods, the pulse at t=0 started before the window
        assert_eq!(rising, 10);
    }
}
