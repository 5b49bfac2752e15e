use transit_sim::commands::spectrum_meta;
use transit_sim::error::SimError;
use transit_sim::io::{read_spectrum, write_spectrum};
use transit_sim::runner::build_pool;
use transit_sim::spectrum::run_spectrum;
use transit_sim::RunConfig;

const CFG: &str = "\
cell.temperature_c = 58
beam.shape = tophat
beam.diameter_mm = 2
probe.larmor_khz = 30
probe.duty_cycle = 1
coupling.kappa_target = 1
dynamics.duration_ms = 0.5
dynamics.n_sim = 6
dynamics.n_repeats = 8
analysis.span_khz = 30
analysis.shot_repeats = 4
";

#[test]
fn spectrum_round_trips_and_rejects_foreign_hashes() {
    let cfg = RunConfig::parse(CFG).unwrap();
    let pool = build_pool(1).unwrap();
    let run = run_spectrum(&cfg, &pool).unwrap();
    let meta = spectrum_meta(&cfg, &run, [("larmor".to_string(), "30".to_string())].into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_spectrum(&path, &run, &meta).unwrap();

    let back = read_spectrum(&path, &cfg.hash).unwrap();
    assert_eq!(back.meta, meta);
    assert_eq!(back.freq_khz, run.estimate.freq_khz);
    assert_eq!(back.psd_linear, run.estimate.psd);
    assert_eq!(back.psd_db, run.psd_db);

    let other = cfg.with("seed", "99").unwrap();
    match read_spectrum(&path, &other.hash) {
        Err(e @ SimError::HashMismatch { .. }) => assert_eq!(e.exit_code(), 1),
        r => panic!("expected a hash mismatch, got {r:?}"),
    }
}

