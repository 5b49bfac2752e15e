mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use transit_core::dynamics::{run_repeat, PreparedMeasurement};
use transit_core::rng::{child, Stream};
use transit_core::spectra::*;

fn white(seed: u64, n: usize, sd: f64) -> Vec<f64> {
    let mut rng = child(seed, Stream::Test, 0);
    (0..n).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
}

#[test]
fn white_noise_psd_integrates_to_its_variance() {
    let (len, dt, sd) = (1024, 0.01, 1.7);
    let mut acc = PsdAccumulator::real(len, len, dt).unwrap();
    for r in 0..2000 {
        acc.add_real(&white(100 + r, len, sd)).unwrap();
    }
    let est = acc.estimate().unwrap();
    let ratio = est.integral() / (sd * sd);
    assert!((ratio - 1.0).abs() < 0.01, "∫PSD / σ² = {ratio}");
    // flat at σ² dt one-sided
    let mid = est.psd[100..400].iter().sum::<f64>() / 300.0;
    assert!((mid / (2.0 * sd * sd * dt) - 1.0).abs() < 0.01);
}

#[test]
fn sinusoid_power_is_conserved() {
    let (len, dt, amp, f) = (4096, 1e-3, 0.8, 123.4);
    let x: Vec<f64> = (0..len).map(|k| amp * (2.0 * std::f64::consts::PI * f * k as f64 * dt).cos()).collect();
    let mut acc = PsdAccumulator::real(len, len, dt).unwrap();
    acc.add_real(&x).unwrap();
    acc.add_real(&x).unwrap();
    let est = acc.estimate().unwrap();
    let ratio = est.integral() / (0.5 * amp * amp);
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    let peak = est.psd.iter().cloned().enumerate().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap().0;
    assert!((est.freq_khz[peak] - f).abs() <= est.resolution_khz);
}

#[test]
fn estimator_scatter_falls_as_inverse_root_of_averages() {
    let (len, dt) = (256, 1.0);
    let scatter = |n: usize| {
        let mut acc = PsdAccumulator::real(len, len, dt).unwrap();
        for r in 0..n {
            acc.add_real(&white(5000 + r as u64, len, 1.0)).unwrap();
        }
        let est = acc.estimate().unwrap();
        let interior = &est.psd[5..120];
        let m = interior.iter().sum::<f64>() / interior.len() as f64;
        (interior.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (interior.len() - 1) as f64).sqrt() / m
    };
    let ratio = scatter(16) / scatter(256);
    assert!((ratio / 4.0 - 1.0).abs() < 0.2, "scatter ratio {ratio}");
}

/// κ = 0 leaves only the light: after demodulation the spectrum sits at the
/// shot-noise density throughout the passband.
#[test]
fn zero_coupling_spectrum_is_flat_at_shot_noise() {
    let cfg = homogeneous(0.0, 0.0, 100.0, 1.0, 2.0);
    let prep = PreparedMeasurement::new(&cfg).unwrap();
    let fs = 1.0 / cfg.dt;
    let filter = FirFilter::lowpass(30.0, 20.0, fs).unwrap();
    let decimation = (fs / 160.0) as usize;
    let mut acc: Option<PsdAccumulator> = None;
    let n = 300;
    for r in 0..n {
        let rec = run_repeat(&prep, 61, r);
        let base = demodulate(&rec.x_out, cfg.dt, 100.0, &filter, decimation).unwrap();
        let a = acc.get_or_insert_with(|| PsdAccumulator::complex(base.baseband.len(), base.baseband.len().next_power_of_two(), base.dt, 100.0).unwrap());
        a.add(&base).unwrap();
    }
    let est = acc.unwrap().estimate().unwrap().crop(100.0, 15.0);
    let db = est.to_db_rel_shot(SHOT_NOISE_DENSITY).unwrap();
    let mean_db = transit_core::stats::to_db(est.psd.iter().sum::<f64>() / est.psd.len() as f64 / SHOT_NOISE_DENSITY);
    assert!(mean_db.abs() < 0.05, "mean {mean_db} dB");
    // each bin is an average of n exponential variates
    let tol = 10.0 * (1.0 + 5.0 / (n as f64).sqrt()).log10();
    assert!(db.iter().all(|d| d.abs() < tol), "max {:?}", db.iter().cloned().fold(0.0, f64::max));
}

/// Homogeneous continuous probing: each quadrature relaxes at γ and is heated
/// by back-action at κ²/4 towards V = 1/2 + κ²/(8γ), starting from 1/2. The
/// Larmor line carries κ²V_w/2 in the demodulated (single-sideband) spectrum,
/// Lorentzian with HWHM γ/2π, where V_w is the variance averaged with the
/// squared Hann window. Strong coupling and a narrow window keep the shot
/// noise inside the window small.
#[test]
fn larmor_line_area_matches_back_action_heated_variance() {
    let (kappa, gamma, larmor, duration) = (3.0, 2.0, 100.0, 4.0);
    let cfg = homogeneous(kappa, gamma, larmor, 1.0, duration);
    let prep = PreparedMeasurement::new(&cfg).unwrap();
    let fs = 1.0 / cfg.dt;
    let filter = FirFilter::lowpass(30.0, 20.0, fs).unwrap();
    let decimation = (fs / 160.0) as usize;
    let mut acc: Option<PsdAccumulator> = None;
    let mut len = 0;
    for r in 0..2000 {
        let rec = run_repeat(&prep, 62, r);
        let base = demodulate(&rec.x_out, cfg.dt, larmor, &filter, decimation).unwrap();
        len = base.baseband.len();
        let a = acc.get_or_insert_with(|| PsdAccumulator::complex(len, 2 * len.next_power_of_two(), base.dt, larmor).unwrap());
        a.add(&base).unwrap();
    }
    let est = acc.unwrap().estimate().unwrap();
    let half = 4.0;
    let area = est.peak_area(larmor, half, SHOT_NOISE_DENSITY);
    let v = 0.5 + kappa * kappa / (8.0 * gamma);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..len {
        let w = (std::f64::consts::PI * k as f64 / len as f64).sin().powi(2);
        let t = duration * k as f64 / len as f64;
        num += w * w * (v - (v - 0.5) * (-2.0 * gamma * t).exp());
        den += w * w;
    }
    let v_w = num / den;
    let hwhm = gamma / (2.0 * std::f64::consts::PI);
    let expected = kappa * kappa * v_w / 2.0 * (2.0 / std::f64::consts::PI) * (half / hwhm).atan();
    assert!((area / expected - 1.0).abs() < 0.04, "area {area} vs {expected}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lowpass_is_symmetric_with_unit_dc(cut in 1.0f64..40.0, trans in 2.0f64..40.0) {
        let f = FirFilter::lowpass(cut, trans, 400.0).unwrap();
        let n = f.taps.len();
        prop_assert!(n % 2 == 1);
        for k in 0..n / 2 {
            prop_assert!((f.taps[k] - f.taps[n - 1 - k]).abs() < 1e-12);
        }
        prop_assert!((f.response(0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn periodogram_is_nonnegative_and_scales_quadratically(seed in any::<u64>(), gain in 0.1f64..10.0) {
        let x = white(seed, 64, 1.0);
        let y: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, -0.5 * v)).collect();
        let scaled: Vec<Complex64> = y.iter().map(|v| v * gain).collect();
        let mut a = PsdAccumulator::complex(64, 128, 0.1, 0.0).unwrap();
        let mut b = PsdAccumulator::complex(64, 128, 0.1, 0.0).unwrap();
        for _ in 0..2 {
            a.add_complex(&y).unwrap();
            b.add_complex(&scaled).unwrap();
        }
        let (ea, eb) = (a.estimate().unwrap(), b.estimate().unwrap());
        for (p, q) in ea.psd.iter().zip(&eb.psd) {
            prop_assert!(*p >= 0.0);
            prop_assert!((q - gain * gain * p).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }
}
