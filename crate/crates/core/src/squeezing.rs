//! Conditional spin squeezing from binned measurement records.
//!
//! The record of every repeat is reduced to `n` in-phase bins; the target
//! (the true collective p_A at some time) is then conditioned on a subset of
//! bins with joint-Gaussian (Schur complement) algebra. With simulated ground
//! truth available this is exact linear-Gaussian estimation.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Ratio between the projection-noise reference and the measured
/// thermal-state noise in the experimental calibration.
pub const THERMAL_PNL_FACTOR: f64 = 0.8;

/// Relative ridge added to the observation covariance diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Condition on record bins before the target time.
    Prediction,
    /// Condition on the whole record (past quantum state).
    Retrodiction,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Prediction => "prediction",
            Estimator::Retrodiction => "retrodiction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnlMode {
    TheoryStationary,
    Experiment45,
}

impl PnlMode {
    pub fn name(self) -> &'static str {
        match self {
            PnlMode::TheoryStationary => "theory_stationary",
            PnlMode::Experiment45 => "experiment_45",
        }
    }
}

/// Integrates a record against cos(Ωt) over `n_bins` equal-time bins. Samples
/// at `(m + 1/2) dt`; trailing samples that do not fill a bin are dropped.
pub fn bin_in_phase(record: &[f64], dt: f64, larmor_khz: f64, n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 || record.len() < n_bins {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "need at least one sample per bin",
        });
    }
    let per_bin = record.len() / n_bins;
    let w = 2.0 * PI * larmor_khz * dt;
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mut acc = 0.0;
        for m in b * per_bin..(b + 1) * per_bin {
            let v = record[m];
            if v != 0.0 {
                acc += v * libm::cos(w * (m as f64 + 0.5));
            }
        }
        bins.push(acc * dt);
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    pub matrix: DMatrix<f64>,
    pub means: DVector<f64>,
    pub n_repeats: usize,
}

/// Unbiased covariance across repeats of an N×n row-major data block.
pub fn covariance_analysis(data: &[f64], n_repeats: usize, n: usize) -> Result<CovarianceSummary> {
    if n_repeats < 2 {
        return Err(Error::TooFewRecords {
            needed: 2,
            got: n_repeats,
        });
    }
    if data.len() != n_repeats * n {
        return Err(Error::Dimension {
            expected: n_repeats * n,
            got: data.len(),
        });
    }
    let mut means = DVector::zeros(n);
    for r in 0..n_repeats {
        for j in 0..n {
            means[j] += data[r * n + j];
        }
    }
    means /= n_repeats as f64;
    let mut centered = DMatrix::zeros(n_repeats, n);
    for r in 0..n_repeats {
        for j in 0..n {
            centered[(r, j)] = data[r * n + j] - means[j];
        }
    }
    let mut matrix = centered.transpose() * &centered;
    matrix /= (n_repeats - 1) as f64;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(CovarianceSummary {
        matrix,
        means,
        n_repeats,
    })
}

impl CovarianceSummary {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Smallest eigenvalue, for positive-semidefiniteness checks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Var(a | b) = Var(a) − Cov(a, b)² / Var(b) for scalar observations.
pub fn conditional_variance(var_prior: f64, cov: f64, var_obs: f64) -> Result<f64> {
    if !(var_obs > 0.0) {
        return Err(Error::InvalidParameter {
            name: "var_obs",
            reason: "must be positive",
        });
    }
    Ok((var_prior - cov * cov / var_obs).max(0.0))
}

/// Outcome of conditioning one target component on a set of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    /// In-sample Schur complement.
    pub var_schur: f64,
    /// Schur complement corrected for the fitted degrees of freedom; an
    /// unbiased estimate of the residual variance of the optimal estimator.
    pub var_conditional: f64,
    pub var_prior: f64,
    /// Regression weights on the centered observations.
    pub weights: DVector<f64>,
    pub target_mean: f64,
    pub obs_means: DVector<f64>,
    pub ridge: f64,
    pub n_obs: usize,
    pub n_repeats: usize,
}

impl Conditioning {
    pub fn predict(&self, obs: &[f64]) -> f64 {
        let mut y = self.target_mean;
        for (k, o) in obs.iter().enumerate() {
            y += self.weights[k] * (o - self.obs_means[k]);
        }
        y
    }
}

/// Conditions `target[r]` on the first `n_obs` columns of the N×n row-major
/// `bins` block (or on the supplied column subset).
pub fn condition_on(target: &[f64], bins: &[f64], n: usize, columns: &[usize], ridge_rel: f64) -> Result<Conditioning> {
    let n_repeats = target.len();
    let p = columns.len();
    if bins.len() != n_repeats * n {
        return Err(Error::Dimension {
            expected: n_repeats * n,
            got: bins.len(),
        });
    }
    if n_repeats < p + 3 {
        return Err(Error::TooFewRecords {
            needed: p + 3,
            got: n_repeats,
        });
    }
    let mut joint = Vec::with_capacity(n_repeats * (p + 1));
    for r in 0..n_repeats {
        joint.push(target[r]);
        for &c in columns {
            joint.push(bins[r * n + c]);
        }
    }
    let cov = covariance_analysis(&joint, n_repeats, p + 1)?;
    let var_prior = cov.matrix[(0, 0)];
    let target_mean = cov.means[0];
    let obs_means = cov.means.rows(1, p).into_owned();
    if p == 0 {
        return Ok(Conditioning {
            var_schur: var_prior,
            var_conditional: var_prior,
            var_prior,
            weights: DVector::zeros(0),
            target_mean,
            obs_means,
            ridge: 0.0,
            n_obs: 0,
            n_repeats,
        });
    }
    let mut c_obs = cov.matrix.view((1, 1), (p, p)).into_owned();
    let c_cross = cov.matrix.view((1, 0), (p, 1)).column(0).into_owned();
    let ridge = ridge_rel * c_obs.trace() / p as f64;
    for k in 0..p {
        c_obs[(k, k)] += ridge;
    }
    let chol = c_obs.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let weights = chol.solve(&c_cross);
    let explained = c_cross.dot(&weights);
    let var_schur = (var_prior - explained).max(0.0);
    let dof = (n_repeats - 1) as f64 / (n_repeats - 1 - p) as f64;
    Ok(Conditioning {
        var_schur,
        var_conditional: var_schur * dof,
        var_prior,
        weights,
        target_mean,
        obs_means,
        ridge,
        n_obs: p,
        n_repeats,
    })
}

/// Bin columns used by an estimator for a target at bin boundary `split`.
pub fn estimator_columns(estimator: Estimator, n_bins: usize, split: usize) -> Vec<usize> {
    match estimator {
        Estimator::Prediction => (0..split.min(n_bins)).collect(),
        Estimator::Retrodiction => (0..n_bins).collect(),
    }
}

pub fn estimate_conditional(
    target: &[f64],
    bins: &[f64],
    n_bins: usize,
    estimator: Estimator,
    ridge_rel: f64,
) -> Result<Conditioning> {
    let columns = estimator_columns(estimator, n_bins, n_bins / 2);
    condition_on(target, bins, n_bins, &columns, ridge_rel)
}

/// Residual variance of a fitted estimator on independent repeats, with its
/// standard error.
pub fn held_out_residual(fit: &Conditioning, target: &[f64], bins: &[f64], n: usize, columns: &[usize]) -> (f64, f64) {
    let residuals: Vec<f64> = target
        .iter()
        .enumerate()
        .map(|(r, t)| {
            let obs: Vec<f64> = columns.iter().map(|&c| bins[r * n + c]).collect();
            t - fit.predict(&obs)
        })
        .collect();
    let m = residuals.len() as f64;
    let var = residuals.iter().map(|e| e * e).sum::<f64>() / m;
    (var, var * libm::sqrt(2.0 / m))
}

/// Expected out-of-sample residual variance of a least-squares fit with `p`
/// Gaussian regressors plus intercept on `n` training repeats, given the true
/// conditional variance.
pub fn expected_held_out_variance(var_conditional: f64, p: usize, n: usize) -> f64 {
    let n = n as f64;
    var_conditional * (1.0 + 1.0 / n) * (n - 2.0) / (n - p as f64 - 2.0)
}

/// Inputs for the projection-noise reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PnlCalibration {
    /// Prior variance of p_A from a stationary-atom run.
    pub stationary_prior: Option<f64>,
    /// Measured thermal-state noise variance.
    pub thermal_variance: Option<f64>,
}

pub fn pnl_reference(mode: PnlMode, cal: &PnlCalibration) -> Result<f64> {
    let v = match mode {
        PnlMode::TheoryStationary => cal.stationary_prior.ok_or(Error::MissingCalibration)?,
        PnlMode::Experiment45 => THERMAL_PNL_FACTOR * cal.thermal_variance.ok_or(Error::MissingCalibration)?,
    };
    if !(v > 0.0) {
        return Err(Error::NonPositiveReference(v));
    }
    Ok(v)
}

pub fn squeezing_db(var_conditional: f64, pnl: f64) -> Result<f64> {
    if !(pnl > 0.0) {
        return Err(Error::NonPositiveReference(pnl));
    }
    Ok(10.0 * libm::log10(var_conditional / pnl))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingResult {
    pub var_conditional: f64,
    pub var_pnl: f64,
    pub xi_squared: f64,
    pub xi_squared_db: f64,
    pub estimator: Estimator,
    pub kappa2_t2: f64,
}

impl SqueezingResult {
    pub fn new(var_conditional: f64, var_pnl: f64, estimator: Estimator, kappa2_t2: f64) -> Result<Self> {
        let xi_squared_db = squeezing_db(var_conditional, var_pnl)?;
        Ok(Self {
            var_conditional,
            var_pnl,
            xi_squared: var_conditional / var_pnl,
            xi_squared_db,
            estimator,
            kappa2_t2,
        })
    }
}

/// Forward (filter) variance of p_A after probing for `t` with constant
/// coupling `kappa` and decay `gamma`, starting from the CSS.
///
/// Solves dP/dt = γ(1 − 2P) − 2κ²P², the Riccati equation of a continuous
/// measurement with shot-noise density 1/2 on an Ornstein-Uhlenbeck spin.
pub fn qnd_filter_variance(kappa: f64, gamma: f64, t: f64) -> f64 {
    let k2 = kappa * kappa;
    if k2 == 0.0 {
        return 0.5;
    }
    if gamma == 0.0 {
        return 0.5 / (1.0 + k2 * t);
    }
    // closed form via the two roots of the stationary quadratic
    let disc = libm::sqrt(gamma * gamma + 2.0 * k2 * gamma);
    let r_plus = (-gamma + disc) / (2.0 * k2);
    let r_minus = (-gamma - disc) / (2.0 * k2);
    let c = (0.5 - r_plus) / (0.5 - r_minus);
    let e = c * libm::exp(-2.0 * disc * t);
    (r_plus - r_minus * e) / (1.0 - e)
}

/// Smoothed variance of p_A at time `t` inside a record of length `total`.
pub fn qnd_smoother_variance(kappa: f64, gamma: f64, total: f64, t: f64) -> f64 {
    let f = qnd_filter_variance(kappa, gamma, t);
    let b = qnd_filter_variance(kappa, gamma, total - t);
    1.0 / (1.0 / f + 1.0 / b - 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_conditioning_examples() {
        assert_eq!(conditional_variance(0.5, 0.0, 1.0).unwrap(), 0.5);
        assert!((conditional_variance(0.5, 0.3, 0.9).unwrap() - 0.4).abs() < 1e-12);
        assert!(conditional_variance(0.5, 0.3, 0.18).unwrap().abs() < 1e-12);
        assert!(conditional_variance(0.5, 0.3, 0.0).is_err());
    }

    #[test]
    fn identical_repeats_give_zero_covariance() {
        let data: Vec<f64> = (0..50).flat_map(|_| [1.0, 2.0, 3.0]).collect();
        let c = covariance_analysis(&data, 50, 3).unwrap();
        assert!(c.matrix.iter().all(|v| *v == 0.0));
        assert!(covariance_analysis(&data[..3], 1, 3).is_err());
    }

    #[test]
    fn pnl_modes() {
        let cal = PnlCalibration {
            stationary_prior: Some(0.5),
            thermal_variance: Some(1.0),
        };
        assert_eq!(pnl_reference(PnlMode::TheoryStationary, &cal).unwrap(), 0.5);
        assert!((pnl_reference(PnlMode::Experiment45, &cal).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            pnl_reference(PnlMode::Experiment45, &PnlCalibration::default()),
            Err(Error::MissingCalibration)
        ));
    }

    #[test]
    fn db_examples() {
        assert_eq!(squeezing_db(0.5, 0.5).unwrap(), 0.0);
        assert!((squeezing_db(0.25, 0.5).unwrap() + 3.0103).abs() < 1e-4);
    }

    #[test]
    fn riccati_closed_form_matches_integration() {
        let (k, g) = (1.61, 1.147);
        let mut p = 0.5;
        let h = 1e-5;
        for _ in 0..200_000 {
            let f = |p: f64| g * (1.0 - 2.0 * p) - 2.0 * k * k * p * p;
            let k1 = f(p);
            let k2 = f(p + 0.5 * h * k1);
            let k3 = f(p + 0.5 * h * k2);
            let k4 = f(p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((qnd_filter_variance(k, g, 2.0) - p).abs() < 1e-10);
        assert!((qnd_filter_variance(k, 0.0, 2.0) - 0.5 / (1.0 + 2.0 * k * k)).abs() < 1e-15);
    }

    #[test]
    fn smoother_beats_filter() {
        let f = qnd_filter_variance(1.61, 1.147, 2.0);
        let s = qnd_smoother_variance(1.61, 1.147, 4.0, 2.0);
        assert!(s < f && f < 0.5);
    }
}
