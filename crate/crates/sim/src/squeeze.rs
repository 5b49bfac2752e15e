//! Conditional squeezing runs: simulation, binning, conditioning, PNL and
//! κ²T₂ bookkeeping.

use rayon::ThreadPool;
use transit_core::coherence::{fit_t2, sample_coherence};
use transit_core::dynamics::{run_repeat, MeasurementConfig, PreparedMeasurement};
use transit_core::rng::{child_seed, Stream};
use transit_core::squeezing::{
    bin_in_phase, condition_on, estimator_columns, expected_held_out_variance, held_out_residual, pnl_reference,
    squeezing_db, Estimator, PnlCalibration, SqueezingResult,
};
use transit_core::stats::{std_dev, variance};

use crate::config::RunConfig;
use crate::error::Result;
use crate::runner::map_ordered;

/// Binned in-phase record plus ground truth for every repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedRecords {
    pub bins: Vec<f64>,
    pub n_bins: usize,
    pub p_mid: Vec<f64>,
    pub p_end: Vec<f64>,
}

impl BinnedRecords {
    pub fn n_repeats(&self) -> usize {
        self.p_mid.len()
    }

    /// Repeats `range` as a new block.
    pub fn slice(&self, range: std::ops::Range<usize>) -> BinnedRecords {
        BinnedRecords {
            bins: self.bins[range.start * self.n_bins..range.end * self.n_bins].to_vec(),
            n_bins: self.n_bins,
            p_mid: self.p_mid[range.clone()].to_vec(),
            p_end: self.p_end[range].to_vec(),
        }
    }
}

pub fn simulate_binned(m: &MeasurementConfig, n_bins: usize, seed: u64, n_repeats: usize, pool: &ThreadPool) -> Result<BinnedRecords> {
    let prep = PreparedMeasurement::new(m)?;
    let rows = map_ordered(pool, 0..n_repeats as u64, |r| {
        let rec = run_repeat(&prep, seed, r);
        bin_in_phase(&rec.x_out, m.dt, m.larmor_khz, n_bins).map(|b| (b, rec.truth))
    });
    let mut out = BinnedRecords {
        bins: Vec::with_capacity(n_repeats * n_bins),
        n_bins,
        p_mid: Vec::with_capacity(n_repeats),
        p_end: Vec::with_capacity(n_repeats),
    };
    for row in rows {
        let (b, truth) = row?;
        out.bins.extend(b);
        out.p_mid.push(truth.p_mid);
        out.p_end.push(truth.p_end);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub var_prior: f64,
    /// In-sample Schur complement.
    pub var_schur: f64,
    /// Degrees-of-freedom corrected conditional variance.
    pub var_conditional: f64,
    pub ridge: f64,
}

pub fn summarize(rec: &BinnedRecords, estimator: Estimator, ridge: f64) -> Result<EstimatorSummary> {
    let cols = estimator_columns(estimator, rec.n_bins, rec.n_bins / 2);
    let c = condition_on(&rec.p_mid, &rec.bins, rec.n_bins, &cols, ridge)?;
    Ok(EstimatorSummary {
        var_prior: c.var_prior,
        var_schur: c.var_schur,
        var_conditional: c.var_conditional,
        ridge: c.ridge,
    })
}

/// Fit on one half of the repeats, evaluate on the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCheck {
    pub residual_variance: f64,
    pub standard_error: f64,
    pub expected: f64,
}

impl OracleCheck {
    pub fn z_score(&self) -> f64 {
        (self.residual_variance - self.expected) / self.standard_error
    }
}

pub fn oracle_check(rec: &BinnedRecords, estimator: Estimator, ridge: f64) -> Result<OracleCheck> {
    let n = rec.n_repeats();
    let train = rec.slice(0..n / 2);
    let test = rec.slice(n / 2..n);
    let cols = estimator_columns(estimator, rec.n_bins, rec.n_bins / 2);
    let fit = condition_on(&train.p_mid, &train.bins, rec.n_bins, &cols, ridge)?;
    let (residual_variance, standard_error) = held_out_residual(&fit, &test.p_mid, &test.bins, rec.n_bins, &cols);
    Ok(OracleCheck {
        residual_variance,
        standard_error,
        expected: expected_held_out_variance(fit.var_conditional, cols.len(), train.n_repeats()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFit {
    pub t2_ms: f64,
    pub kappa2_t2: f64,
    pub wall_hit_rate: f64,
}

/// Ensemble T₂ for the configured decoherence, wall-reset probability and
/// beam, evaluated on trajectories drawn from `seed`.
pub fn coherence_fit(cfg: &RunConfig, seed: u64) -> Result<CoherenceFit> {
    let m = &cfg.measurement;
    let samples = sample_coherence(
        &m.geometry,
        &m.beam,
        cfg.analysis.coherence_lag_ms,
        41,
        cfg.analysis.coherence_atoms,
        1e-3,
        seed,
    )?;
    Ok(fit_from_samples(cfg, &samples, m.geometry.wall_reset_probability)?)
}

pub(crate) fn fit_from_samples(
    cfg: &RunConfig,
    samples: &transit_core::coherence::CoherenceSamples,
    p_reset: f64,
) -> transit_core::Result<CoherenceFit> {
    let m = &cfg.measurement;
    let curve = samples.curve(
        p_reset,
        m.decoherence.gamma_background,
        m.decoherence.gamma_probe_peak * m.duty_cycle,
    );
    let t2_ms = fit_t2(&samples.lags, &curve, 1e-3)?;
    Ok(CoherenceFit {
        t2_ms,
        kappa2_t2: m.kappa * m.kappa * t2_ms,
        wall_hit_rate: samples.wall_hit_rate(),
    })
}

/// Prior p_A variance of a stationary-atom run at the same optical settings.
pub fn pnl_calibration(cfg: &RunConfig, pool: &ThreadPool) -> Result<PnlCalibration> {
    let m = MeasurementConfig {
        stationary_atoms: true,
        ..cfg.measurement
    };
    let prep = PreparedMeasurement::new(&m)?;
    let seed = child_seed(cfg.seed, Stream::Pnl, 1);
    let truths = map_ordered(pool, 0..cfg.analysis.pnl_repeats as u64, |r| run_repeat(&prep, seed, r).truth);
    let mid: Vec<f64> = truths.iter().map(|t| t.p_mid).collect();
    let start: Vec<f64> = truths.iter().map(|t| t.p_start).collect();
    Ok(PnlCalibration {
        stationary_prior: Some(variance(&mid)),
        // a coherent spin state stands in for the thermal calibration signal
        thermal_variance: Some(variance(&start)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezingRun {
    pub result: SqueezingResult,
    pub prediction: EstimatorSummary,
    pub retrodiction: EstimatorSummary,
    pub var_pnl_theory: f64,
    pub var_pnl_experiment: f64,
    pub batch_db: Vec<f64>,
    pub error_bar_db: f64,
    pub oracle: OracleCheck,
    pub coherence: CoherenceFit,
    pub n_repeats: usize,
}

impl SqueezingRun {
    pub fn retrodiction_not_worse(&self) -> bool {
        self.retrodiction.var_schur <= self.prediction.var_schur + 1e-9 * self.prediction.var_prior
    }
}

pub fn run_squeezing(cfg: &RunConfig, pool: &ThreadPool) -> Result<SqueezingRun> {
    let rec = simulate_binned(&cfg.measurement, cfg.analysis.bins, cfg.seed, cfg.n_repeats, pool)?;
    analyze(cfg, &rec, pool)
}

/// Squeezing analysis of already simulated records.
pub fn analyze(cfg: &RunConfig, rec: &BinnedRecords, pool: &ThreadPool) -> Result<SqueezingRun> {
    let ridge = cfg.analysis.ridge;
    let estimator = cfg.analysis.estimator;
    let prediction = summarize(rec, Estimator::Prediction, ridge)?;
    let retrodiction = summarize(rec, Estimator::Retrodiction, ridge)?;
    let chosen = match estimator {
        Estimator::Prediction => prediction,
        Estimator::Retrodiction => retrodiction,
    };

    let cal = pnl_calibration(cfg, pool)?;
    let var_pnl = pnl_reference(cfg.analysis.pnl_mode, &cal)?;
    let var_pnl_theory = cal.stationary_prior.unwrap_or(f64::NAN);
    let var_pnl_experiment = pnl_reference(transit_core::squeezing::PnlMode::Experiment45, &cal)?;

    let n = rec.n_repeats();
    let batches = cfg.analysis.batches.min(n / (rec.n_bins + 4)).max(1);
    let mut batch_db = Vec::with_capacity(batches);
    if batches > 1 {
        for b in 0..batches {
            let part = rec.slice(b * n / batches..(b + 1) * n / batches);
            let s = summarize(&part, estimator, ridge)?;
            batch_db.push(squeezing_db(s.var_conditional, var_pnl)?);
        }
    }
    let error_bar_db = if batch_db.len() > 1 { std_dev(&batch_db) } else { f64::NAN };

    let oracle = oracle_check(rec, estimator, ridge)?;
    let coherence = coherence_fit(cfg, child_seed(cfg.seed, Stream::Calibration, 0))?;
    let result = SqueezingResult::new(chosen.var_conditional, var_pnl, estimator, coherence.kappa2_t2)?;
    Ok(SqueezingRun {
        result,
        prediction,
        retrodiction,
        var_pnl_theory,
        var_pnl_experiment,
        batch_db,
        error_bar_db,
        oracle,
        coherence,
        n_repeats: n,
    })
}
