//! Ensemble transverse coherence and T₂.
//!
//! An atom's spin coherence after a lag τ is exp(−∫γ_i dt) if no wall hit in
//! that interval reset it, and zero otherwise. Averaging over equilibrium
//! trajectories gives the ensemble coherence C(τ), whose exponential decay
//! time is T₂. Because wall-hit counts do not depend on the reset probability,
//! one set of trajectories serves every (p_reset, γ) combination, which makes
//! calibration searches smooth and deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::kinematics::{sample_initial_state, CellGeometry, Flight};
use crate::optics::{beam_intensity, BeamProfile};
use crate::rng::{self, Stream};
use crate::stats::linear_fit;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSamples {
    pub lags: Vec<f64>,
    n_atoms: usize,
    /// ∫ u(r(t)) dt up to each lag, atom-major.
    exposure: Vec<f64>,
    /// Wall hits up to each lag, atom-major.
    hits: Vec<u32>,
}

/// Follows `n_atoms` equilibrium atoms for `lags.len()` uniformly spaced lags
/// up to `max_lag`, integrating the beam intensity with step `step`.
pub fn sample_coherence(
    geom: &CellGeometry,
    beam: &BeamProfile,
    max_lag: f64,
    n_lags: usize,
    n_atoms: usize,
    step: f64,
    seed: u64,
) -> Result<CoherenceSamples> {
    geom.validate()?;
    if !(max_lag > 0.0) || n_lags < 2 || n_atoms == 0 || !(step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "coherence",
            reason: "need positive lag range, step, at least two lags and one atom",
        });
    }
    let lag_step = max_lag / (n_lags - 1) as f64;
    let sub = libm::ceil(lag_step / step).max(1.0) as usize;
    let h = lag_step / sub as f64;
    let lags: Vec<f64> = (0..n_lags).map(|k| k as f64 * lag_step).collect();
    let mut exposure = vec![0.0; n_atoms * n_lags];
    let mut hits = vec![0u32; n_atoms * n_lags];
    for a in 0..n_atoms {
        let mut rng = rng::child(seed, Stream::Calibration, a as u64);
        let state = sample_initial_state(geom, &mut rng);
        let mut flight = Flight::from_state(&state, geom);
        let mut acc = 0.0;
        let mut count = 0u32;
        for k in 1..n_lags {
            for s in 0..sub {
                let t = lags[k - 1] + (s as f64 + 0.5) * h;
                count += flight.advance_to(t, geom, &mut rng).0;
                acc += beam_intensity(beam, flight.position_at(t)) * h;
            }
            exposure[a * n_lags + k] = acc;
            hits[a * n_lags + k] = count;
        }
    }
    Ok(CoherenceSamples {
        lags,
        n_atoms,
        exposure,
        hits,
    })
}

impl CoherenceSamples {
    /// C(τ) for wall-reset probability `p_reset`, uniform rate `gamma_background`
    /// and time-averaged probe rate `gamma_probe_mean_peak` at unit intensity.
    pub fn curve(&self, p_reset: f64, gamma_background: f64, gamma_probe_mean_peak: f64) -> Vec<f64> {
        let n_lags = self.lags.len();
        let keep = 1.0 - p_reset;
        let mut out = vec![0.0; n_lags];
        for a in 0..self.n_atoms {
            for k in 0..n_lags {
                let idx = a * n_lags + k;
                let hits = self.hits[idx] as i32;
                out[k] += libm::exp(-gamma_probe_mean_peak * self.exposure[idx]) * libm::pow(keep, hits as f64);
            }
        }
        for (k, c) in out.iter_mut().enumerate() {
            *c = *c / self.n_atoms as f64 * libm::exp(-gamma_background * self.lags[k]);
        }
        out
    }

    /// Mean wall-hit rate (per ms) over the sampled window.
    pub fn wall_hit_rate(&self) -> f64 {
        let n_lags = self.lags.len();
        let total: u64 = (0..self.n_atoms).map(|a| u64::from(self.hits[a * n_lags + n_lags - 1])).sum();
        total as f64 / (self.n_atoms as f64 * self.lags[n_lags - 1])
    }
}

/// T₂ from a log-linear fit of C(τ), using points with C above `floor`.
pub fn fit_t2(lags: &[f64], curve: &[f64], floor: f64) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = lags
        .iter()
        .zip(curve)
        .filter(|(_, c)| **c > floor)
        .map(|(t, c)| (*t, libm::log(*c)))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::TooFewRecords {
            needed: 2,
            got: xs.len(),
        });
    }
    let (_, slope) = linear_fit(&xs, &ys);
    if !(slope < 0.0) {
        return Err(Error::InvalidParameter {
            name: "coherence",
            reason: "no decay within the lag window",
        });
    }
    Ok(-1.0 / slope)
}
