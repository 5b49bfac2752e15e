//! Semiclassical spin/light dynamics of the probed ensemble.
//!
//! Every simulated atom carries a pair of Holstein-Primakoff quadratures
//! (x_i, p_i) in the frame rotating at the Larmor frequency, drawn with
//! per-atom variance 1/2; collective quadratures are Σ/√n_sim, so their CSS
//! variance is 1/2 for any n_sim. The light record is
//!
//!   x_out(t) = x_in(t) + Σ_i g_i(t) (p_i cos Ωt − x_i sin Ωt)
//!
//! and each atom is kicked by the shared input noise p_in weighted by its own
//! coupling, decays at its local rate γ_i and is refilled by Langevin noise.
//!
//! Record samples are interval averages: shot noise has variance 1/(2 dt) per
//! sample, i.e. a two-sided density of 1/2. While the probe is off (between
//! stroboscopic pulses) the detector sees no light and the sample is zero.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kinematics::{sample_initial_state, CellGeometry, Flight};
use crate::optics::{beam_intensity, strobe_envelope, BeamProfile, CouplingField};
use crate::rng::{self, SimRng, Stream};
use crate::{Error, Result};

/// Per-atom quadrature variance of the coherent spin state.
pub const CSS_VARIANCE: f64 = 0.5;

/// Minimum number of record samples per Larmor period.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceParams {
    /// ms^-1, applies everywhere in the cell.
    pub gamma_background: f64,
    /// ms^-1 at peak intensity while the probe is on.
    pub gamma_probe_peak: f64,
    /// Variance of the Langevin noise operators (stationary quadrature variance).
    pub langevin_variance: f64,
}

impl DecoherenceParams {
    pub fn none() -> Self {
        Self {
            gamma_background: 0.0,
            gamma_probe_peak: 0.0,
            langevin_variance: CSS_VARIANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_background >= 0.0) || !(self.gamma_probe_peak >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "decay rates must be nonnegative",
            });
        }
        if !(self.langevin_variance >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "langevin_variance",
                reason: "must be nonnegative",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinEnsemble {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Atoms whose spin must be redrawn before the next step.
    pub reset_pending: Vec<bool>,
    /// ms
    pub time: f64,
}

impl SpinEnsemble {
    pub fn n_sim(&self) -> usize {
        self.x.len()
    }

    pub fn collective_x(&self) -> f64 {
        self.x.iter().sum::<f64>() / libm::sqrt(self.n_sim() as f64)
    }

    pub fn collective_p(&self) -> f64 {
        self.p.iter().sum::<f64>() / libm::sqrt(self.n_sim() as f64)
    }
}

/// One sample of the input light quadratures, already scaled to the sample
/// interval (variance 1/(2 dt) each).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSample {
    pub x_in: f64,
    pub p_in: f64,
}

impl LightSample {
    pub fn draw<R: Rng + ?Sized>(dt: f64, rng: &mut R) -> Self {
        let sd = libm::sqrt(0.5 / dt);
        Self {
            x_in: sd * rng.sample::<f64, _>(StandardNormal),
            p_in: sd * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn init_css_ensemble<R: Rng + ?Sized>(n_sim: usize, rng: &mut R) -> Result<SpinEnsemble> {
    if n_sim == 0 {
        return Err(Error::InvalidParameter {
            name: "n_sim",
            reason: "must be at least 1",
        });
    }
    let sd = libm::sqrt(CSS_VARIANCE);
    let mut x = Vec::with_capacity(n_sim);
    let mut p = Vec::with_capacity(n_sim);
    for _ in 0..n_sim {
        x.push(sd * normal(rng));
        p.push(sd * normal(rng));
    }
    Ok(SpinEnsemble {
        x,
        p,
        reset_pending: vec![false; n_sim],
        time: 0.0,
    })
}

/// One Euler-Maruyama step of the Langevin equations in the rotating frame.
///
/// `couplings[i]` is g_i(t) and `exposure[i]` the probe exposure u(r_i)·strobe
/// that drives the probe-induced part of γ_i.
#[allow(clippy::too_many_arguments)]
pub fn step_spin<R: Rng + ?Sized>(
    ens: &mut SpinEnsemble,
    couplings: &[f64],
    exposure: &[f64],
    light: LightSample,
    dec: &DecoherenceParams,
    larmor: f64,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let n = ens.n_sim();
    if couplings.len() != n || exposure.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: couplings.len().min(exposure.len()),
        });
    }
    if larmor > 0.0 && dt * larmor > 2.0 * PI / MIN_SAMPLES_PER_PERIOD {
        return Err(Error::StepSize {
            what: "fewer than 20 steps per Larmor period",
            dt,
        });
    }
    let gamma_max = dec.gamma_background + dec.gamma_probe_peak * exposure.iter().fold(0.0_f64, |a, &b| a.max(b));
    if gamma_max * dt > 0.05 {
        return Err(Error::StepSize {
            what: "decay rate times dt exceeds 0.05",
            dt,
        });
    }
    let t = ens.time;
    let (s, c) = libm::sincos(larmor * t);
    let lsd = libm::sqrt(dec.langevin_variance);
    let css = libm::sqrt(CSS_VARIANCE);
    for i in 0..n {
        if ens.reset_pending[i] {
            ens.x[i] = css * normal(rng);
            ens.p[i] = css * normal(rng);
            ens.reset_pending[i] = false;
        }
        let gamma = dec.gamma_background + dec.gamma_probe_peak * exposure[i];
        let kick = couplings[i] * light.p_in * dt;
        let diff = libm::sqrt(2.0 * gamma * dt) * lsd;
        let x = ens.x[i];
        let p = ens.p[i];
        ens.x[i] = x + kick * c - gamma * x * dt + diff * normal(rng);
        ens.p[i] = p - kick * s - gamma * p * dt + diff * normal(rng);
    }
    ens.time = t + dt;
    Ok(())
}

/// Output quadrature for one sample; `p_out = p_in` is not recorded.
pub fn readout_sample(ens: &SpinEnsemble, couplings: &[f64], light: LightSample, larmor: f64, t: f64) -> f64 {
    let (s, c) = libm::sincos(larmor * t);
    let atomic: f64 = couplings
        .iter()
        .zip(ens.x.iter().zip(&ens.p))
        .map(|(g, (x, p))| g * (p * c - x * s))
        .sum();
    light.x_in + atomic
}

/// Fully resolved description of one simulated measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    pub geometry: CellGeometry,
    pub beam: BeamProfile,
    /// Time-averaged effective coupling, ms^-1/2.
    pub kappa: f64,
    /// Ω/2π in kHz.
    pub larmor_khz: f64,
    pub duty_cycle: f64,
    /// Record sample interval, ms.
    pub dt: f64,
    /// Longest interval between atom-state updates while the probe is on, ms.
    pub atom_step: f64,
    /// ms
    pub duration: f64,
    pub n_sim: usize,
    pub decoherence: DecoherenceParams,
    /// Freeze atoms at their initial positions.
    pub stationary_atoms: bool,
    /// Interval between exact Ornstein-Uhlenbeck decay updates, ms.
    pub relax_interval: f64,
}

/// Default record interval: 40 samples per Larmor period, never coarser than
/// 0.25 µs so transit through the smallest beams stays resolved.
pub fn default_dt(larmor_khz: f64) -> f64 {
    let cap = 2.5e-4;
    if larmor_khz > 0.0 {
        (1.0 / (40.0 * larmor_khz)).min(cap)
    } else {
        cap
    }
}

impl MeasurementConfig {
    /// Ω in rad/ms.
    pub fn larmor(&self) -> f64 {
        2.0 * PI * self.larmor_khz
    }

    pub fn n_samples(&self) -> usize {
        libm::round(self.duration / self.dt) as usize
    }

    pub fn coupling_field(&self) -> CouplingField {
        CouplingField::new(self.kappa, &self.beam, &self.geometry)
    }

    /// γ_probe_peak such that the ensemble-averaged probe-induced rate is
    /// `mean_rate` for this beam and duty cycle.
    pub fn probe_peak_rate_for_mean(&self, mean_rate: f64) -> f64 {
        let ubar = self.coupling_field().normalization;
        mean_rate / (ubar * self.duty_cycle)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.decoherence.validate()?;
        if !(self.beam.radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "radius_beam",
                reason: "must be positive",
            });
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: "must be nonnegative",
            });
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "duty_cycle",
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.larmor_khz >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "larmor",
                reason: "must be nonnegative",
            });
        }
        if self.larmor_khz == 0.0 && self.duty_cycle < 1.0 {
            return Err(Error::InvalidParameter {
                name: "duty_cycle",
                reason: "stroboscopic probing needs a nonzero Larmor frequency",
            });
        }
        if !(self.dt > 0.0) || !(self.duration > self.dt) || !(self.atom_step > 0.0) || !(self.relax_interval > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt/duration",
                reason: "need 0 < dt < duration and positive update intervals",
            });
        }
        if self.n_sim == 0 {
            return Err(Error::InvalidParameter {
                name: "n_sim",
                reason: "must be at least 1",
            });
        }
        if self.larmor_khz > 0.0 && self.dt * self.larmor_khz * MIN_SAMPLES_PER_PERIOD > 1.0 + 1e-9 {
            return Err(Error::StepSize {
                what: "fewer than 20 samples per Larmor period",
                dt: self.dt,
            });
        }
        Ok(())
    }
}

/// Collective quadratures at the start, midpoint and end of a repeat.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundTruth {
    pub x_start: f64,
    pub p_start: f64,
    pub x_mid: f64,
    pub p_mid: f64,
    pub x_end: f64,
    pub p_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatRecord {
    pub x_out: Vec<f64>,
    pub truth: GroundTruth,
    pub wall_hits: u64,
    pub resets: u64,
}

/// N repeats × n samples of x_out, row-major, with ground truth per repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub samples: Vec<f64>,
    pub n_repeats: usize,
    pub n_samples: usize,
    pub dt: f64,
    pub larmor_khz: f64,
    pub truth: Vec<GroundTruth>,
    pub seed: u64,
}

impl MeasurementRecord {
    pub fn row(&self, repeat: usize) -> &[f64] {
        &self.samples[repeat * self.n_samples..(repeat + 1) * self.n_samples]
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    end: usize,
    center: f64,
    // Cholesky factor of the covariance of (∫p_in cos, ∫p_in sin) over the block
    l11: f64,
    l21: f64,
    l22: f64,
}

/// Time grids and per-sample waveforms shared by every repeat of one config.
#[derive(Debug, Clone)]
pub struct PreparedMeasurement {
    pub config: MeasurementConfig,
    cos: Vec<f64>,
    sin: Vec<f64>,
    active: Vec<bool>,
    blocks: Vec<Block>,
    coupling_scale: f64,
}

impl PreparedMeasurement {
    pub fn new(config: &MeasurementConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_samples();
        let omega = config.larmor();
        let dt = config.dt;
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        let mut active = Vec::with_capacity(n);
        for m in 0..n {
            let t = (m as f64 + 0.5) * dt;
            let (s, c) = libm::sincos(omega * t);
            cos.push(c);
            sin.push(s);
            active.push(strobe_envelope(t, omega, config.duty_cycle) > 0.0);
        }
        let per_block = libm::floor(config.atom_step / dt + 1e-9).max(1.0) as usize;
        let mut blocks = Vec::new();
        let mut m = 0;
        while m < n {
            if !active[m] {
                m += 1;
                continue;
            }
            let start = m;
            while m < n && active[m] && m - start < per_block {
                m += 1;
            }
            let (mut icc, mut iss, mut ics) = (0.0, 0.0, 0.0);
            for k in start..m {
                icc += 0.5 * cos[k] * cos[k] * dt;
                iss += 0.5 * sin[k] * sin[k] * dt;
                ics += 0.5 * cos[k] * sin[k] * dt;
            }
            let (l11, l21, l22) = chol2(icc, ics, iss);
            blocks.push(Block {
                start,
                end: m,
                center: 0.5 * (start + m) as f64 * dt,
                l11,
                l21,
                l22,
            });
        }
        let coupling_scale = config.coupling_field().scale(config.n_sim) / libm::sqrt(config.duty_cycle);
        Ok(Self {
            config: *config,
            cos,
            sin,
            active,
            blocks,
            coupling_scale,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.cos.len()
    }

    /// Whether the probe is on during sample `m`.
    pub fn is_active(&self, m: usize) -> bool {
        self.active[m]
    }

    pub fn cos_at(&self, m: usize) -> f64 {
        self.cos[m]
    }

    pub fn sin_at(&self, m: usize) -> f64 {
        self.sin[m]
    }
}

fn chol2(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    if a <= 0.0 {
        return (0.0, 0.0, libm::sqrt(c.max(0.0)));
    }
    let l11 = libm::sqrt(a);
    let l21 = b / l11;
    let l22 = libm::sqrt((c - l21 * l21).max(0.0));
    (l11, l21, l22)
}

struct Atoms {
    flights: Vec<Flight>,
    x: Vec<f64>,
    p: Vec<f64>,
    decay: Vec<f64>,
    coupling: Vec<f64>,
}

impl Atoms {
    fn collective(&self) -> (f64, f64) {
        let norm = libm::sqrt(self.x.len() as f64);
        (self.x.iter().sum::<f64>() / norm, self.p.iter().sum::<f64>() / norm)
    }

    /// Exact Ornstein-Uhlenbeck update with each atom's accumulated decay.
    fn relax<R: Rng + ?Sized>(&mut self, background: f64, langevin_variance: f64, rng: &mut R) {
        for i in 0..self.x.len() {
            self.relax_one(i, background, langevin_variance, rng);
        }
    }

    #[inline]
    fn relax_one<R: Rng + ?Sized>(&mut self, i: usize, background: f64, langevin_variance: f64, rng: &mut R) {
        let total = self.decay[i] + background;
        if total <= 0.0 {
            return;
        }
        let a = libm::exp(-total);
        let sd = libm::sqrt(langevin_variance * (1.0 - a * a));
        self.x[i] = a * self.x[i] + sd * normal(rng);
        self.p[i] = a * self.p[i] + sd * normal(rng);
        self.decay[i] = 0.0;
    }

    /// Applies the previous block's back-action through the couplings it was
    /// drawn with.
    fn kick_all(&mut self, kick: (f64, f64)) {
        for i in 0..self.x.len() {
            let g = self.coupling[i];
            self.x[i] += g * kick.0;
            self.p[i] -= g * kick.1;
        }
    }
}

/// Simulates one repeat: fresh trajectories, fresh CSS, co-integrated spin and
/// light over the configured duration.
///
/// Atom states are updated once per block (one stroboscopic pulse, or at most
/// `atom_step` of continuous probing); the record is synthesized at every
/// sample with the exact Larmor phase, and the block's back-action is drawn
/// from the exact covariance of the integrated input noise.
pub fn run_repeat(prep: &PreparedMeasurement, seed: u64, index: u64) -> RepeatRecord {
    let cfg = &prep.config;
    let mut rng = rng::child(seed, Stream::Repeat, index);
    let n_sim = cfg.n_sim;
    let geom = &cfg.geometry;
    let dec = &cfg.decoherence;
    let dt = cfg.dt;

    let mut flights = Vec::with_capacity(n_sim);
    for _ in 0..n_sim {
        let state = sample_initial_state(geom, &mut rng);
        flights.push(if cfg.stationary_atoms {
            Flight::stationary(state.position)
        } else {
            Flight::from_state(&state, geom)
        });
    }
    let ens = init_css_ensemble(n_sim, &mut rng).expect("n_sim validated");
    let mut atoms = Atoms {
        flights,
        x: ens.x,
        p: ens.p,
        decay: vec![0.0; n_sim],
        coupling: vec![0.0; n_sim],
    };

    let n = prep.n_samples();
    let mut x_out = vec![0.0; n];
    let shot_sd = libm::sqrt(0.5 / dt);
    let css_sd = libm::sqrt(CSS_VARIANCE);
    let mut truth = GroundTruth::default();
    (truth.x_start, truth.p_start) = atoms.collective();
    let t_mid = 0.5 * n as f64 * dt;
    let mut mid_done = false;
    let mut last_relax = 0.0;
    let mut wall_hits = 0u64;
    let mut resets = 0u64;

    // The back-action of each block is applied lazily at the top of the next
    // block's atom pass, so every block touches each atom once.
    let mut kick = (0.0, 0.0);
    for block in &prep.blocks {
        let t_start = block.start as f64 * dt;
        if !mid_done && t_start >= t_mid {
            atoms.kick_all(kick);
            kick = (0.0, 0.0);
            atoms.relax(dec.gamma_background * (t_mid - last_relax), dec.langevin_variance, &mut rng);
            last_relax = t_mid;
            (truth.x_mid, truth.p_mid) = atoms.collective();
            mid_done = true;
        }
        let relax_due = t_start - last_relax >= cfg.relax_interval;
        let background = dec.gamma_background * (t_start - last_relax);
        if relax_due {
            last_relax = t_start;
        }

        let duration = (block.end - block.start) as f64 * dt;
        let probe_decay = dec.gamma_probe_peak * duration;
        let mut sum_p = 0.0;
        let mut sum_x = 0.0;
        for i in 0..n_sim {
            let g_old = atoms.coupling[i];
            atoms.x[i] += g_old * kick.0;
            atoms.p[i] -= g_old * kick.1;
            if relax_due {
                atoms.relax_one(i, background, dec.langevin_variance, &mut rng);
            }
            let flight = &mut atoms.flights[i];
            if flight.t_hit <= block.center {
                let (hits, reset) = flight.advance_to(block.center, geom, &mut rng);
                wall_hits += u64::from(hits);
                if reset {
                    resets += 1;
                    atoms.x[i] = css_sd * normal(&mut rng);
                    atoms.p[i] = css_sd * normal(&mut rng);
                    atoms.decay[i] = 0.0;
                }
            }
            let u = beam_intensity(&cfg.beam, flight.position_at(block.center));
            let g = prep.coupling_scale * u;
            atoms.coupling[i] = g;
            atoms.decay[i] += probe_decay * u;
            sum_p += g * atoms.p[i];
            sum_x += g * atoms.x[i];
        }

        for m in block.start..block.end {
            x_out[m] = shot_sd * normal(&mut rng) + sum_p * prep.cos[m] - sum_x * prep.sin[m];
        }

        let z1 = normal(&mut rng);
        let z2 = normal(&mut rng);
        kick = (block.l11 * z1, block.l21 * z1 + block.l22 * z2);
    }
    atoms.kick_all(kick);

    let t_end = n as f64 * dt;
    if !mid_done {
        atoms.relax(dec.gamma_background * (t_mid - last_relax), dec.langevin_variance, &mut rng);
        last_relax = t_mid;
        (truth.x_mid, truth.p_mid) = atoms.collective();
    }
    atoms.relax(dec.gamma_background * (t_end - last_relax), dec.langevin_variance, &mut rng);
    (truth.x_end, truth.p_end) = atoms.collective();

    RepeatRecord {
        x_out,
        truth,
        wall_hits,
        resets,
    }
}

/// Reference integrator: advances kinematics, couplings, [`step_spin`] and
/// [`readout_sample`] at every record sample. Much slower than [`run_repeat`]
/// and used to cross-check it.
pub fn run_repeat_stepwise(config: &MeasurementConfig, seed: u64, index: u64) -> Result<RepeatRecord> {
    config.validate()?;
    let mut rng: SimRng = rng::child(seed, Stream::Repeat, index);
    let geom = &config.geometry;
    let n_sim = config.n_sim;
    let mut flights = Vec::with_capacity(n_sim);
    for _ in 0..n_sim {
        let state = sample_initial_state(geom, &mut rng);
        flights.push(if config.stationary_atoms {
            Flight::stationary(state.position)
        } else {
            Flight::from_state(&state, geom)
        });
    }
    let mut ens = init_css_ensemble(n_sim, &mut rng)?;
    let scale = config.coupling_field().scale(n_sim) / libm::sqrt(config.duty_cycle);
    let omega = config.larmor();
    let dt = config.dt;
    let n = config.n_samples();
    let mut couplings = vec![0.0; n_sim];
    let mut exposure = vec![0.0; n_sim];
    let mut x_out = vec![0.0; n];
    let mut truth = GroundTruth {
        x_start: ens.collective_x(),
        p_start: ens.collective_p(),
        ..GroundTruth::default()
    };
    let mut wall_hits = 0u64;
    let mut resets = 0u64;
    for m in 0..n {
        if m == n / 2 {
            truth.x_mid = ens.collective_x();
            truth.p_mid = ens.collective_p();
        }
        let t = (m as f64 + 0.5) * dt;
        let strobe = strobe_envelope(t, omega, config.duty_cycle);
        for i in 0..n_sim {
            let (hits, reset) = flights[i].advance_to(t, geom, &mut rng);
            wall_hits += u64::from(hits);
            if reset {
                resets += 1;
                ens.reset_pending[i] = true;
            }
            let u = beam_intensity(&config.beam, flights[i].position_at(t)) * strobe;
            couplings[i] = scale * u;
            exposure[i] = u;
        }
        // redraw before reading out, as the reset happened before t
        let css_sd = libm::sqrt(CSS_VARIANCE);
        for i in 0..n_sim {
            if ens.reset_pending[i] {
                ens.x[i] = css_sd * normal(&mut rng);
                ens.p[i] = css_sd * normal(&mut rng);
                ens.reset_pending[i] = false;
            }
        }
        let light = LightSample::draw(dt, &mut rng);
        ens.time = t;
        x_out[m] = strobe * readout_sample(&ens, &couplings, light, omega, t);
        step_spin(&mut ens, &couplings, &exposure, light, &config.decoherence, omega, dt, &mut rng)?;
    }
    truth.x_end = ens.collective_x();
    truth.p_end = ens.collective_p();
    Ok(RepeatRecord {
        x_out,
        truth,
        wall_hits,
        resets,
    })
}

/// Runs `n_repeats` independent repeats sequentially and stacks the records.
pub fn run_measurement(config: &MeasurementConfig, seed: u64, n_repeats: usize) -> Result<MeasurementRecord> {
    let prep = PreparedMeasurement::new(config)?;
    let n = prep.n_samples();
    let mut samples = Vec::with_capacity(n * n_repeats);
    let mut truth = Vec::with_capacity(n_repeats);
    for r in 0..n_repeats {
        let rec = run_repeat(&prep, seed, r as u64);
        samples.extend_from_slice(&rec.x_out);
        truth.push(rec.truth);
    }
    Ok(MeasurementRecord {
        samples,
        n_repeats,
        n_samples: n,
        dt: config.dt,
        larmor_khz: config.larmor_khz,
        truth,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::EQUAL_AREA_RADIUS_3MM;
    use crate::optics::BeamShape;
    use crate::stats::{covariance, mean, variance};

    fn base_config() -> MeasurementConfig {
        MeasurementConfig {
            geometry: CellGeometry::new(EQUAL_AREA_RADIUS_3MM, 331.15, 0.0).unwrap(),
            beam: BeamProfile::from_diameter(BeamShape::Tophat, 3.4).unwrap(),
            kappa: 1.0,
            larmor_khz: 0.0,
            duty_cycle: 1.0,
            dt: 1e-3,
            atom_step: 1e-3,
            duration: 0.2,
            n_sim: 50,
            decoherence: DecoherenceParams::none(),
            stationary_atoms: true,
            relax_interval: 2e-3,
        }
    }

    #[test]
    fn css_collective_variance_is_half() {
        let mut rng = rng::child(11, Stream::Test, 0);
        let mut xs = Vec::new();
        for _ in 0..4000 {
            let e = init_css_ensemble(25, &mut rng).unwrap();
            xs.push(e.collective_x());
        }
        assert!((variance(&xs) - 0.5).abs() < 0.04);
        assert!(mean(&xs).abs() < 3.0 * libm::sqrt(0.5 / 4000.0));
    }

    #[test]
    fn ensembles_from_different_streams_are_uncorrelated() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in 0..4000 {
            a.push(init_css_ensemble(10, &mut rng::child(1, Stream::Test, k)).unwrap().collective_p());
            b.push(init_css_ensemble(10, &mut rng::child(2, Stream::Test, k)).unwrap().collective_p());
        }
        assert!(covariance(&a, &b).abs() < 3.0 * 0.5 / libm::sqrt(4000.0));
    }

    #[test]
    fn free_evolution_without_coupling_or_decay_is_frozen() {
        let mut rng = rng::child(3, Stream::Test, 0);
        let mut ens = init_css_ensemble(20, &mut rng).unwrap();
        let start = ens.clone();
        let zeros = vec![0.0; 20];
        for _ in 0..1000 {
            let light = LightSample::draw(1e-3, &mut rng);
            step_spin(&mut ens, &zeros, &zeros, light, &DecoherenceParams::none(), 0.0, 1e-3, &mut rng).unwrap();
        }
        assert_eq!(ens.x, start.x);
        assert_eq!(ens.p, start.p);
    }

    #[test]
    fn qnd_measurement_conserves_p_without_precession_or_decay() {
        let mut rng = rng::child(3, Stream::Test, 1);
        let mut ens = init_css_ensemble(20, &mut rng).unwrap();
        let p0 = ens.p.clone();
        let g = vec![0.3; 20];
        let e = vec![1.0; 20];
        for _ in 0..1000 {
            let light = LightSample::draw(1e-3, &mut rng);
            step_spin(&mut ens, &g, &e, light, &DecoherenceParams::none(), 0.0, 1e-3, &mut rng).unwrap();
        }
        assert_eq!(ens.p, p0);
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let mut rng = rng::child(3, Stream::Test, 2);
        let mut ens = init_css_ensemble(2, &mut rng).unwrap();
        let z = vec![0.0; 2];
        let light = LightSample::draw(1e-3, &mut rng);
        let fast = DecoherenceParams {
            gamma_background: 100.0,
            ..DecoherenceParams::none()
        };
        assert!(matches!(
            step_spin(&mut ens, &z, &z, light, &fast, 0.0, 1e-3, &mut rng),
            Err(Error::StepSize { .. })
        ));
        assert!(matches!(
            step_spin(&mut ens, &z, &z, light, &DecoherenceParams::none(), 2.0 * PI * 500.0, 1e-3, &mut rng),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn reset_redraws_state() {
        let mut rng = rng::child(3, Stream::Test, 3);
        let mut before = Vec::new();
        let mut after = Vec::new();
        for _ in 0..3000 {
            let mut ens = init_css_ensemble(4, &mut rng).unwrap();
            before.push(ens.collective_p());
            ens.reset_pending.iter_mut().for_each(|r| *r = true);
            let z = vec![0.0; 4];
            let light = LightSample::draw(1e-3, &mut rng);
            step_spin(&mut ens, &z, &z, light, &DecoherenceParams::none(), 0.0, 1e-3, &mut rng).unwrap();
            after.push(ens.collective_p());
            assert!(ens.reset_pending.iter().all(|r| !r));
        }
        assert!(covariance(&before, &after).abs() < 3.0 * 0.5 / libm::sqrt(3000.0));
    }

    #[test]
    fn zero_coupling_readout_is_shot_noise() {
        let mut rng = rng::child(3, Stream::Test, 4);
        let ens = init_css_ensemble(10, &mut rng).unwrap();
        let z = vec![0.0; 10];
        let dt = 1e-3;
        let xs: Vec<f64> = (0..20_000)
            .map(|_| readout_sample(&ens, &z, LightSample::draw(dt, &mut rng), 1.0, 0.3))
            .collect();
        // variance 1/(2 dt) per sample <=> density 1/2 per unit bandwidth
        assert!((variance(&xs) * dt - 0.5).abs() < 0.02);
    }

    #[test]
    fn readout_is_linear_in_p() {
        let mut rng = rng::child(3, Stream::Test, 5);
        let mut ens = init_css_ensemble(10, &mut rng).unwrap();
        let g = vec![0.2; 10];
        let light = LightSample { x_in: 0.0, p_in: 0.0 };
        let a = readout_sample(&ens, &g, light, 3.0, 0.0);
        ens.p.iter_mut().for_each(|p| *p = -*p);
        let b = readout_sample(&ens, &g, light, 3.0, 0.0);
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_underresolved_strobe() {
        let mut cfg = base_config();
        cfg.larmor_khz = 500.0;
        cfg.dt = 2e-4;
        assert!(matches!(cfg.validate(), Err(Error::StepSize { .. })));
        cfg.dt = default_dt(500.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn repeats_are_deterministic() {
        let cfg = MeasurementConfig {
            stationary_atoms: false,
            beam: BeamProfile::from_diameter(BeamShape::Gaussian, 1.0).unwrap(),
            ..base_config()
        };
        let prep = PreparedMeasurement::new(&cfg).unwrap();
        let a = run_repeat(&prep, 9, 4);
        let b = run_repeat(&prep, 9, 4);
        assert_eq!(a, b);
        assert_ne!(a.x_out, run_repeat(&prep, 9, 5).x_out);
    }

    #[test]
    fn strobed_record_is_zero_between_pulses() {
        let cfg = MeasurementConfig {
            larmor_khz: 500.0,
            duty_cycle: 0.1,
            dt: default_dt(500.0),
            atom_step: 2.5e-4,
            duration: 0.02,
            ..base_config()
        };
        let prep = PreparedMeasurement::new(&cfg).unwrap();
        let rec = run_repeat(&prep, 1, 0);
        let on = rec.x_out.iter().filter(|v| **v != 0.0).count();
        assert_eq!(on, rec.x_out.len() / 10);
    }
}
