//! The three subcommands, each writing its artifacts under the output dir.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use transit_core::dynamics::{run_repeat, PreparedMeasurement};
use transit_core::kinematics::simulate_trajectory;
use transit_core::rng::{child, Stream};

use crate::calibrate::{calibrate, CalibrationReport};
use crate::config::RunConfig;
use crate::error::{Result, SimError};
use crate::io::{ensure_dir, write_json, write_record, write_spectrum, write_trajectory, SpectrumMeta};
use crate::spectrum::{run_spectrum, SpectrumRun};
use crate::squeeze::{run_squeezing, SqueezingRun};
use crate::sweep::{expand, SweepPoint, SweepSpec};

/// Trajectory dumps are sampled at 1 µs.
const TRAJECTORY_DT: f64 = 1e-3;

fn sweep_map(point: &SweepPoint) -> BTreeMap<String, String> {
    point.labels.iter().cloned().collect()
}

/// Optional raw-record and trajectory dumps for one sweep point.
fn dumps(cfg: &RunConfig, out: &Path, slug: &str) -> Result<()> {
    let m = &cfg.measurement;
    if cfg.output.dump_records > 0 {
        let prep = PreparedMeasurement::new(m)?;
        let dir = out.join("records").join(slug);
        for r in 0..cfg.output.dump_records.min(cfg.n_repeats) as u64 {
            let rec = run_repeat(&prep, cfg.seed, r);
            write_record(&dir, r, &rec, m.dt, m.larmor_khz, &cfg.hash, cfg.seed)?;
        }
    }
    if cfg.output.dump_trajectories > 0 {
        let dir = out.join("trajectories").join(slug);
        ensure_dir(&dir)?;
        for a in 0..cfg.output.dump_trajectories as u64 {
            let mut rng = child(cfg.seed, Stream::Trajectory, a);
            let traj = simulate_trajectory(&m.geometry, m.duration, TRAJECTORY_DT, &mut rng)?;
            write_trajectory(&dir.join(format!("atom_{a:05}.csv")), &traj)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummaryRow {
    pub file: String,
    pub config_hash: String,
    pub larmor_khz: f64,
    pub beam_shape: String,
    pub beam_diameter_mm: f64,
    pub kappa_ms_sqrt: f64,
    pub n_avg: usize,
    pub background_offset_khz: f64,
    pub background_db: f64,
    pub peak_area: f64,
    pub peak_contrast: f64,
    pub sweep: BTreeMap<String, String>,
}

pub fn spectrum_meta(cfg: &RunConfig, run: &SpectrumRun, sweep: BTreeMap<String, String>) -> SpectrumMeta {
    SpectrumMeta {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed,
        n_avg: cfg.n_repeats,
        segments_per_record: run.segments_per_record,
        rbw_khz: run.estimate.resolution_khz,
        enbw_khz: run.estimate.enbw_khz,
        shot_reference: run.shot_reference,
        lo_khz: run.lo_khz,
        background_offset_khz: run.background_offset_khz,
        background_linear: run.background_linear,
        background_db: run.background_db,
        peak_area: run.peak_area,
        peak_contrast: run.peak_contrast,
        beam_shape: cfg.measurement.beam.shape.name().to_string(),
        beam_diameter_mm: cfg.beam_diameter(),
        kappa_ms_sqrt: cfg.kappa(),
        sweep,
    }
}

pub fn cmd_spectrum(base: &RunConfig, sweeps: &[SweepSpec], pool: &ThreadPool, out: &Path) -> Result<Vec<(SpectrumSummaryRow, SpectrumRun)>> {
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for point in expand(base, sweeps)? {
        let cfg = &point.config;
        let slug = point.slug("spectrum");
        let run = run_spectrum(cfg, pool)?;
        let meta = spectrum_meta(cfg, &run, sweep_map(&point));
        let file = format!("{slug}.csv");
        write_spectrum(&out.join(&file), &run, &meta)?;
        dumps(cfg, out, &slug)?;
        rows.push((
            SpectrumSummaryRow {
                file,
                config_hash: cfg.hash.clone(),
                larmor_khz: cfg.measurement.larmor_khz,
                beam_shape: meta.beam_shape.clone(),
                beam_diameter_mm: meta.beam_diameter_mm,
                kappa_ms_sqrt: meta.kappa_ms_sqrt,
                n_avg: meta.n_avg,
                background_offset_khz: meta.background_offset_khz,
                background_db: meta.background_db,
                peak_area: meta.peak_area,
                peak_contrast: meta.peak_contrast,
                sweep: meta.sweep.clone(),
            },
            run,
        ));
    }
    let summary: Vec<&SpectrumSummaryRow> = rows.iter().map(|(r, _)| r).collect();
    write_json(&out.join("spectrum_summary.json"), &summary)?;
    Ok(rows)
}

/// One entry of `squeezing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReport {
    pub config_hash: String,
    pub seed: u64,
    pub beam_diameter_mm: f64,
    pub beam_shape: String,
    pub kappa_ms_sqrt: f64,
    pub larmor_khz: f64,
    pub estimator: String,
    pub var_conditional: f64,
    pub var_pnl: f64,
    pub xi2_db: f64,
    pub xi2_linear: f64,
    #[serde(rename = "kappa2_T2")]
    pub kappa2_t2: f64,
    pub n_repeats: usize,
    pub error_bar_db: Option<f64>,
    pub batch_xi2_db: Vec<f64>,
    pub var_prior: f64,
    pub var_conditional_prediction: f64,
    pub var_conditional_retrodiction: f64,
    pub var_schur_prediction: f64,
    pub var_schur_retrodiction: f64,
    pub pnl_mode: String,
    pub var_pnl_theory_stationary: f64,
    pub var_pnl_experiment_45: f64,
    pub ridge: f64,
    pub oracle_residual_variance: f64,
    pub oracle_expected_variance: f64,
    pub oracle_standard_error: f64,
    pub t2_ms: f64,
    pub sweep: BTreeMap<String, String>,
}

pub fn squeezing_report(cfg: &RunConfig, run: &SqueezingRun, sweep: BTreeMap<String, String>) -> SqueezingReport {
    SqueezingReport {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed,
        beam_diameter_mm: cfg.beam_diameter(),
        beam_shape: cfg.measurement.beam.shape.name().to_string(),
        kappa_ms_sqrt: cfg.kappa(),
        larmor_khz: cfg.measurement.larmor_khz,
        estimator: run.result.estimator.name().to_string(),
        var_conditional: run.result.var_conditional,
        var_pnl: run.result.var_pnl,
        xi2_db: run.result.xi_squared_db,
        xi2_linear: run.result.xi_squared,
        kappa2_t2: run.result.kappa2_t2,
        n_repeats: run.n_repeats,
        error_bar_db: run.error_bar_db.is_finite().then_some(run.error_bar_db),
        batch_xi2_db: run.batch_db.clone(),
        var_prior: run.retrodiction.var_prior,
        var_conditional_prediction: run.prediction.var_conditional,
        var_conditional_retrodiction: run.retrodiction.var_conditional,
        var_schur_prediction: run.prediction.var_schur,
        var_schur_retrodiction: run.retrodiction.var_schur,
        pnl_mode: cfg.analysis.pnl_mode.name().to_string(),
        var_pnl_theory_stationary: run.var_pnl_theory,
        var_pnl_experiment_45: run.var_pnl_experiment,
        ridge: run.retrodiction.ridge,
        oracle_residual_variance: run.oracle.residual_variance,
        oracle_expected_variance: run.oracle.expected,
        oracle_standard_error: run.oracle.standard_error,
        t2_ms: run.coherence.t2_ms,
        sweep,
    }
}

pub fn cmd_squeezing(base: &RunConfig, sweeps: &[SweepSpec], pool: &ThreadPool, out: &Path) -> Result<Vec<(SqueezingReport, SqueezingRun)>> {
    ensure_dir(out)?;
    let mut results = Vec::new();
    for point in expand(base, sweeps)? {
        let cfg = &point.config;
        let run = run_squeezing(cfg, pool)?;
        if !run.retrodiction_not_worse() {
            return Err(SimError::Numerical(transit_core::Error::InvalidParameter {
                name: "retrodiction",
                reason: "conditional variance exceeds the prediction variance",
            }));
        }
        dumps(cfg, out, &point.slug("squeezing"))?;
        results.push((squeezing_report(cfg, &run, sweep_map(&point)), run));
    }
    let reports: Vec<&SqueezingReport> = results.iter().map(|(r, _)| r).collect();
    write_json(&out.join("squeezing.json"), &reports)?;
    Ok(results)
}

pub fn cmd_calibrate(cfg: &RunConfig, out: &Path) -> Result<(CalibrationReport, PathBuf)> {
    ensure_dir(out)?;
    let cal = calibrate(cfg)?;
    write_json(&out.join("calibration.json"), &cal.report)?;
    let cfg_path = out.join("calibrated.cfg");
    let text = format!(
        "# wall-reset probability calibrated to kappa^2 T2 = {}\n{}",
        cal.report.target_kappa2_t2,
        cal.config.values.to_text()
    );
    std::fs::write(&cfg_path, text).map_err(|e| SimError::io(&cfg_path, e))?;
    Ok((cal.report, cfg_path))
}
