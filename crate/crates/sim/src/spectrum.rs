//! Averaged lock-in noise spectra around the Larmor frequency.

use rayon::ThreadPool;
use transit_core::dynamics::{run_repeat, DecoherenceParams, MeasurementConfig, PreparedMeasurement};
use transit_core::rng::{child_seed, Stream};
use transit_core::spectra::{demodulate, FirFilter, PsdAccumulator, SpectrumEstimate};

use crate::config::RunConfig;
use crate::error::Result;
use crate::runner::map_ordered;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRun {
    /// Cropped to the configured span around the Larmor frequency.
    pub estimate: SpectrumEstimate,
    pub psd_db: Vec<f64>,
    pub shot_reference: f64,
    pub lo_khz: f64,
    /// Broad background at the configured offset from the line.
    pub background_linear: f64,
    pub background_db: f64,
    pub background_offset_khz: f64,
    /// Background-subtracted power within the peak window.
    pub peak_area: f64,
    /// Line-center PSD over the local background.
    pub peak_contrast: f64,
    pub local_background: f64,
    pub segments_per_record: usize,
}

/// Filter, decimation and Welch segmentation shared by signal and shot runs.
#[derive(Debug, Clone)]
pub struct SpectrumPlan {
    pub filter: FirFilter,
    pub decimation: usize,
    pub segment: usize,
    pub nfft: usize,
    pub out_dt: f64,
    pub lo_khz: f64,
}

impl SpectrumPlan {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.measurement;
        let half = 0.5 * cfg.analysis.span_khz;
        let fs = 1.0 / m.dt;
        let decimation = ((fs / (4.0 * half)).floor() as usize).max(1);
        let filter = FirFilter::lowpass(1.5 * half, half, fs)?;
        let out_dt = m.dt * decimation as f64;
        let n_out = (m.n_samples().saturating_sub(filter.taps.len())) / decimation + 1;
        let segment = match cfg.analysis.rbw_khz {
            Some(rbw) => ((1.0 / (rbw * out_dt)).round() as usize).clamp(2, n_out),
            None => n_out,
        };
        Ok(Self {
            filter,
            decimation,
            segment,
            nfft: segment.next_power_of_two(),
            out_dt,
            lo_khz: m.larmor_khz,
        })
    }

    fn accumulate(&self, record: &[f64], dt: f64) -> Result<PsdAccumulator> {
        let demod = demodulate(record, dt, self.lo_khz, &self.filter, self.decimation)?;
        let mut acc = PsdAccumulator::complex(self.segment, self.nfft, self.out_dt, self.lo_khz)?;
        let step = (self.segment / 2).max(1);
        let mut start = 0;
        while start + self.segment <= demod.baseband.len() {
            acc.add_complex(&demod.baseband[start..start + self.segment])?;
            start += step;
        }
        Ok(acc)
    }

    /// Averages periodograms over `n_repeats` repeats of `m`.
    pub fn averaged(&self, m: &MeasurementConfig, seed: u64, n_repeats: usize, pool: &ThreadPool) -> Result<(SpectrumEstimate, usize)> {
        let prep = PreparedMeasurement::new(m)?;
        let parts = map_ordered(pool, 0..n_repeats as u64, |r| {
            let rec = run_repeat(&prep, seed, r);
            self.accumulate(&rec.x_out, m.dt)
        });
        let mut total: Option<PsdAccumulator> = None;
        let mut per_record = 0;
        for part in parts {
            let part = part?;
            per_record = part.count();
            match total.as_mut() {
                Some(t) => t.merge(&part)?,
                None => total = Some(part),
            }
        }
        let total = total.expect("at least one repeat");
        Ok((total.estimate()?, per_record))
    }
}

/// Same optics with the atoms switched off: pure shot noise.
pub fn shot_config(m: &MeasurementConfig) -> MeasurementConfig {
    MeasurementConfig {
        kappa: 0.0,
        n_sim: 1,
        stationary_atoms: true,
        decoherence: DecoherenceParams::none(),
        ..*m
    }
}

pub fn run_spectrum(cfg: &RunConfig, pool: &ThreadPool) -> Result<SpectrumRun> {
    let plan = SpectrumPlan::new(cfg)?;
    let half = 0.5 * cfg.analysis.span_khz;
    let lo = plan.lo_khz;
    let (full, segments) = plan.averaged(&cfg.measurement, cfg.seed, cfg.n_repeats, pool)?;
    let estimate = full.crop(lo, half);

    let shot_seed = child_seed(cfg.seed, Stream::Pnl, 0);
    let (shot_full, _) = plan.averaged(&shot_config(&cfg.measurement), shot_seed, cfg.analysis.shot_repeats, pool)?;
    let shot = shot_full.crop(lo, half);
    let shot_reference = shot.psd.iter().sum::<f64>() / shot.psd.len() as f64;
    let psd_db = estimate.to_db_rel_shot(shot_reference)?;

    let offset = cfg.analysis.background_offset_khz;
    let bg_half = cfg.analysis.background_halfwidth_khz.max(estimate.resolution_khz);
    let background_linear = estimate.band_mean(lo + offset, bg_half);
    let hw = cfg.analysis.peak_halfwidth_khz.max(estimate.resolution_khz);
    let ring: Vec<f64> = estimate
        .freq_khz
        .iter()
        .zip(&estimate.psd)
        .filter(|(f, _)| {
            let d = (**f - lo).abs();
            d > hw && d <= 2.0 * hw
        })
        .map(|(_, p)| *p)
        .collect();
    let local_background = if ring.is_empty() {
        background_linear
    } else {
        ring.iter().sum::<f64>() / ring.len() as f64
    };
    let peak_area = estimate.peak_area(lo, hw, local_background);
    let peak_contrast = estimate.psd[estimate.bin_of(lo)] / local_background;
    Ok(SpectrumRun {
        background_db: 10.0 * (background_linear / shot_reference).log10(),
        estimate,
        psd_db,
        shot_reference,
        lo_khz: lo,
        background_linear,
        background_offset_khz: offset,
        peak_area,
        peak_contrast,
        local_background,
        segments_per_record: segments,
    })
}
