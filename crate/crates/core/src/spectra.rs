//! Lock-in demodulation and averaged periodograms.
//!
//! Frequencies are in kHz and times in ms, so power spectral densities come
//! out per kHz. The shot-noise floor of a record sampled with the convention
//! of [`crate::dynamics`] is 1/2 (two-sided).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::fft_in_place;
use crate::{Error, Result};

/// Two-sided PSD of the shot-noise floor.
pub const SHOT_NOISE_DENSITY: f64 = 0.5;

/// Linear-phase low-pass FIR built from a Blackman-windowed sinc. The
/// Blackman window keeps stopband leakage below about −74 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    /// Cutoff (−6 dB point) in kHz.
    pub cutoff_khz: f64,
    pub sample_rate_khz: f64,
}

impl FirFilter {
    /// `transition_khz` is the full width from passband to stopband.
    pub fn lowpass(cutoff_khz: f64, transition_khz: f64, sample_rate_khz: f64) -> Result<Self> {
        if !(cutoff_khz > 0.0 && transition_khz > 0.0 && sample_rate_khz > 0.0) {
            return Err(Error::InvalidParameter {
                name: "filter",
                reason: "cutoff, transition width and sample rate must be positive",
            });
        }
        if cutoff_khz >= 0.5 * sample_rate_khz {
            return Err(Error::Aliasing {
                bandwidth_khz: cutoff_khz,
                nyquist_khz: 0.5 * sample_rate_khz,
            });
        }
        let mut len = libm::ceil(5.5 * sample_rate_khz / transition_khz) as usize;
        len |= 1;
        let fc = cutoff_khz / sample_rate_khz;
        let mid = (len / 2) as f64;
        let mut taps = Vec::with_capacity(len);
        for k in 0..len {
            let m = k as f64 - mid;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                libm::sin(2.0 * PI * fc * m) / (PI * m)
            };
            let phase = 2.0 * PI * k as f64 / (len - 1).max(1) as f64;
            let w = 0.42 - 0.5 * libm::cos(phase) + 0.08 * libm::cos(2.0 * phase);
            taps.push(sinc * w);
        }
        let gain: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= gain);
        Ok(Self {
            taps,
            cutoff_khz,
            sample_rate_khz,
        })
    }

    /// Equivalent noise bandwidth as a fraction of the input sample rate.
    pub fn noise_gain(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Magnitude response at `f_khz`.
    pub fn response(&self, f_khz: f64) -> f64 {
        let w = 2.0 * PI * f_khz / self.sample_rate_khz;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, t) in self.taps.iter().enumerate() {
            acc += Complex64::from_polar(*t, -w * k as f64);
        }
        acc.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemodulatedRecord {
    pub baseband: Vec<Complex64>,
    pub lo_khz: f64,
    pub filter_bandwidth_khz: f64,
    pub decimation: usize,
    /// Output sample interval, ms.
    pub dt: f64,
}

/// Mixes a real record down by `lo_khz`, low-passes it and keeps every
/// `decimation`-th output. Only outputs whose filter support lies inside the
/// record are produced.
pub fn demodulate(record: &[f64], dt: f64, lo_khz: f64, filter: &FirFilter, decimation: usize) -> Result<DemodulatedRecord> {
    let fs = 1.0 / dt;
    let nyquist = 0.5 * fs;
    if !(lo_khz >= 0.0 && lo_khz < nyquist) {
        return Err(Error::LoAboveNyquist {
            lo_khz,
            nyquist_khz: nyquist,
        });
    }
    if decimation == 0 {
        return Err(Error::InvalidParameter {
            name: "decimation",
            reason: "must be at least 1",
        });
    }
    if (filter.sample_rate_khz - fs).abs() > 1e-9 * fs {
        return Err(Error::GridMismatch);
    }
    let out_nyquist = 0.5 * fs / decimation as f64;
    if filter.cutoff_khz > out_nyquist {
        return Err(Error::Aliasing {
            bandwidth_khz: filter.cutoff_khz,
            nyquist_khz: out_nyquist,
        });
    }
    let len = filter.taps.len();
    let mut baseband = Vec::new();
    if record.len() >= len {
        let w = 2.0 * PI * lo_khz * dt;
        let mut re_mix = Vec::with_capacity(record.len());
        let mut im_mix = Vec::with_capacity(record.len());
        for (j, &v) in record.iter().enumerate() {
            if v == 0.0 {
                re_mix.push(0.0);
                im_mix.push(0.0);
            } else {
                let (s, c) = libm::sincos(w * (j as f64 + 0.5));
                re_mix.push(v * c);
                im_mix.push(-v * s);
            }
        }
        let mut end = len - 1;
        while end < record.len() {
            let start = end + 1 - len;
            let seg_re = &re_mix[start..=end];
            let seg_im = &im_mix[start..=end];
            let mut re = 0.0;
            let mut im = 0.0;
            // taps are symmetric, so forward order equals time-reversed order
            for ((h, a), b) in filter.taps.iter().zip(seg_re).zip(seg_im) {
                re += h * a;
                im += h * b;
            }
            baseband.push(Complex64::new(re, im));
            end += decimation;
        }
    }
    Ok(DemodulatedRecord {
        baseband,
        lo_khz,
        filter_bandwidth_khz: filter.cutoff_khz,
        decimation,
        dt: dt * decimation as f64,
    })
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * libm::cos(2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Running average of tapered periodograms.
#[derive(Debug, Clone)]
pub struct PsdAccumulator {
    window: Vec<f64>,
    window_power: f64,
    nfft: usize,
    dt: f64,
    center_khz: f64,
    one_sided: bool,
    sum: Vec<f64>,
    buf: Vec<Complex64>,
    count: usize,
}

impl PsdAccumulator {
    /// Complex (baseband) records of `len` samples at interval `dt`, zero
    /// padded to `nfft`. Frequencies are reported relative to `center_khz`.
    pub fn complex(len: usize, nfft: usize, dt: f64, center_khz: f64) -> Result<Self> {
        Self::build(len, nfft, dt, center_khz, false)
    }

    /// Real records; the estimate is one-sided (DC to Nyquist).
    pub fn real(len: usize, nfft: usize, dt: f64) -> Result<Self> {
        Self::build(len, nfft, dt, 0.0, true)
    }

    fn build(len: usize, nfft: usize, dt: f64, center_khz: f64, one_sided: bool) -> Result<Self> {
        if len < 2 || nfft < len || !nfft.is_power_of_two() || !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nfft",
                reason: "need 2 <= len <= nfft, nfft a power of two, dt > 0",
            });
        }
        let window = hann(len);
        let window_power = window.iter().map(|w| w * w).sum();
        Ok(Self {
            window,
            window_power,
            nfft,
            dt,
            center_khz,
            one_sided,
            sum: vec![0.0; nfft],
            buf: vec![Complex64::new(0.0, 0.0); nfft],
            count: 0,
        })
    }

    pub fn record_len(&self) -> usize {
        self.window.len()
    }

    pub fn add_complex(&mut self, samples: &[Complex64]) -> Result<()> {
        if samples.len() != self.window.len() || self.one_sided {
            return Err(Error::GridMismatch);
        }
        for (k, b) in self.buf.iter_mut().enumerate() {
            *b = if k < samples.len() {
                samples[k] * self.window[k]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.accumulate();
        Ok(())
    }

    pub fn add_real(&mut self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.window.len() || !self.one_sided {
            return Err(Error::GridMismatch);
        }
        for (k, b) in self.buf.iter_mut().enumerate() {
            *b = Complex64::new(if k < samples.len() { samples[k] * self.window[k] } else { 0.0 }, 0.0);
        }
        self.accumulate();
        Ok(())
    }

    pub fn add(&mut self, rec: &DemodulatedRecord) -> Result<()> {
        if (rec.dt - self.dt).abs() > 1e-12 * self.dt || (rec.lo_khz - self.center_khz).abs() > 1e-9 {
            return Err(Error::GridMismatch);
        }
        self.add_complex(&rec.baseband)
    }

    fn accumulate(&mut self) {
        fft_in_place(&mut self.buf);
        let scale = self.dt / self.window_power;
        for (s, b) in self.sum.iter_mut().zip(&self.buf) {
            *s += b.norm_sqr() * scale;
        }
        self.count += 1;
    }

    /// Combines another accumulator built with identical settings.
    pub fn merge(&mut self, other: &PsdAccumulator) -> Result<()> {
        if other.nfft != self.nfft || other.window.len() != self.window.len() || other.one_sided != self.one_sided {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn estimate(&self) -> Result<SpectrumEstimate> {
        if self.count < 2 {
            return Err(Error::TooFewRecords {
                needed: 2,
                got: self.count,
            });
        }
        let n = self.nfft;
        let df = 1.0 / (n as f64 * self.dt);
        let avg = self.count as f64;
        let (freq_khz, psd) = if self.one_sided {
            let half = n / 2;
            let mut f = Vec::with_capacity(half + 1);
            let mut p = Vec::with_capacity(half + 1);
            for k in 0..=half {
                f.push(k as f64 * df);
                let factor = if k == 0 || k == half { 1.0 } else { 2.0 };
                p.push(factor * self.sum[k] / avg);
            }
            (f, p)
        } else {
            let mut f = Vec::with_capacity(n);
            let mut p = Vec::with_capacity(n);
            for j in 0..n {
                let k = (j + n / 2) % n;
                let signed = if k >= n / 2 { k as f64 - n as f64 } else { k as f64 };
                f.push(self.center_khz + signed * df);
                p.push(self.sum[k] / avg);
            }
            (f, p)
        };
        Ok(SpectrumEstimate {
            freq_khz,
            psd,
            n_averages: self.count,
            resolution_khz: df,
            enbw_khz: 1.5 / (self.window.len() as f64 * self.dt),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub freq_khz: Vec<f64>,
    /// Linear power per kHz.
    pub psd: Vec<f64>,
    pub n_averages: usize,
    /// Bin spacing, kHz.
    pub resolution_khz: f64,
    /// Equivalent noise bandwidth of the taper, kHz.
    pub enbw_khz: f64,
}

/// Averages periodograms of demodulated records sharing one grid.
pub fn estimate_psd(records: &[DemodulatedRecord], nfft: usize) -> Result<SpectrumEstimate> {
    let first = records.first().ok_or(Error::TooFewRecords { needed: 2, got: 0 })?;
    let mut acc = PsdAccumulator::complex(first.baseband.len(), nfft, first.dt, first.lo_khz)?;
    for r in records {
        acc.add(r)?;
    }
    acc.estimate()
}

impl SpectrumEstimate {
    /// ∫ PSD df over the grid.
    pub fn integral(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution_khz
    }

    /// Index of the bin closest to `f_khz`.
    pub fn bin_of(&self, f_khz: f64) -> usize {
        let f0 = self.freq_khz[0];
        let k = libm::round((f_khz - f0) / self.resolution_khz);
        (k.max(0.0) as usize).min(self.psd.len() - 1)
    }

    /// Mean PSD over bins within `half_width_khz` of `center_khz`.
    pub fn band_mean(&self, center_khz: f64, half_width_khz: f64) -> f64 {
        let (sum, n) = self
            .freq_khz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| (**f - center_khz).abs() <= half_width_khz)
            .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
        if n == 0 {
            self.psd[self.bin_of(center_khz)]
        } else {
            sum / n as f64
        }
    }

    /// Integrated power above `background` within `half_width_khz` of
    /// `center_khz`.
    pub fn peak_area(&self, center_khz: f64, half_width_khz: f64, background: f64) -> f64 {
        self.freq_khz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| (**f - center_khz).abs() <= half_width_khz)
            .map(|(_, p)| p - background)
            .sum::<f64>()
            * self.resolution_khz
    }

    /// Restricts the grid to `|f − center| <= half_span`.
    pub fn crop(&self, center_khz: f64, half_span_khz: f64) -> SpectrumEstimate {
        let keep: Vec<usize> = (0..self.freq_khz.len())
            .filter(|&k| (self.freq_khz[k] - center_khz).abs() <= half_span_khz)
            .collect();
        SpectrumEstimate {
            freq_khz: keep.iter().map(|&k| self.freq_khz[k]).collect(),
            psd: keep.iter().map(|&k| self.psd[k]).collect(),
            ..self.clone()
        }
    }

    /// PSD in dB relative to `shot_reference`.
    pub fn to_db_rel_shot(&self, shot_reference: f64) -> Result<Vec<f64>> {
        if !(shot_reference > 0.0) {
            return Err(Error::NonPositiveReference(shot_reference));
        }
        Ok(self.psd.iter().map(|p| 10.0 * libm::log10(p / shot_reference)).collect())
    }
}

pub fn to_db_rel_shot(est: &SpectrumEstimate, shot_reference: f64) -> Result<Vec<f64>> {
    est.to_db_rel_shot(shot_reference)
}
