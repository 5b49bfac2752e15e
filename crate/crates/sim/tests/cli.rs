use std::path::Path;
use std::process::Command;

const TINY: &str = "\
cell.temperature_c = 58
beam.shape = gaussian
beam.diameter_mm = 1
probe.larmor_khz = 100
probe.duty_cycle = 1
coupling.kappa_target = 1.61
dynamics.duration_ms = 0.5
dynamics.n_sim = 8
dynamics.n_repeats = 12
analysis.span_khz = 40
analysis.shot_repeats = 6
analysis.pnl_repeats = 20
analysis.coherence_atoms = 50
analysis.bins = 10
analysis.batches = 2
seed = 4
";

fn simulate(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_simulate"));
    cmd.args(args).env_remove("SIM_SEED").env_remove("SIM_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn spectrum_writes_csv_sidecar_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", TINY);
    let out = dir.path().join("out");
    let o = simulate(&["spectrum", "--config", &cfg, "--sweep", "beam_diameter=0.6,2", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for stem in ["spectrum_beam_diameter-0.6", "spectrum_beam_diameter-2"] {
        let csv = std::fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap();
        assert!(csv.starts_with("freq_khz,psd_linear,psd_db,beam_diameter"));
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("{stem}.json"))).unwrap()).unwrap();
        assert_eq!(meta["seed"], 4);
        assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectrum_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn squeezing_report_has_the_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", &TINY.replace("probe.duty_cycle = 1", "probe.duty_cycle = 0.1").replace("n_repeats = 12", "n_repeats = 60"));
    let out = dir.path().join("out");
    let o = simulate(&["squeezing", "--config", &cfg, "--out", out.to_str().unwrap()], &[("SIM_WORKERS", "2")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("squeezing.json")).unwrap()).unwrap();
    let r = &v[0];
    for key in ["xi2_db", "var_conditional", "var_pnl", "kappa2_T2", "config_hash", "seed", "beam_shape", "beam_diameter_mm"] {
        assert!(!r[key].is_null(), "missing {key} in {r}");
    }
}

#[test]
fn seed_comes_from_the_environment_unless_given() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", TINY);
    let seed_of = |args: &[&str], env: &[(&str, &str)]| {
        let out = dir.path().join(format!("o{}", args.len() + env.len()));
        let mut all = vec!["spectrum", "--config", cfg.as_str(), "--out", out.to_str().unwrap()];
        all.extend_from_slice(args);
        assert!(simulate(&all, env).status.success());
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
        meta["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], &[]), 4);
    assert_eq!(seed_of(&[], &[("SIM_SEED", "77")]), 77);
    assert_eq!(seed_of(&["--seed", "9"], &[("SIM_SEED", "77")]), 9);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        TINY.replace("seed = 4", "sede = 4"),
        TINY.replace("beam.shape = gaussian", "beam.shape = square"),
        format!("{TINY}seed = 5\n"),
        TINY.replace("probe.duty_cycle = 1", "probe.duty_cycle = 1.5"),
        TINY.replace("beam.diameter_mm = 1\n", ""),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_cfg(dir.path(), &format!("bad{i}.cfg"), text);
        let o = simulate(&["spectrum", "--config", &cfg], &[]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let cfg = write_cfg(dir.path(), "ok.cfg", TINY);
    for sweep in ["nonsense=1", "larmor", "larmor=abc"] {
        let o = simulate(&["spectrum", "--config", &cfg, "--sweep", sweep], &[]);
        assert_eq!(o.status.code(), Some(2), "{sweep}");
    }
    let o = simulate(&["calibrate", "--config", &cfg, "--sweep", "larmor=30"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_calibration_target_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", &format!("{TINY}analysis.target_kappa2_t2 = 1000\n"));
    let o = simulate(&["calibrate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn record_and_trajectory_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "a.cfg", &format!("{TINY}output.dump_records = 2\noutput.dump_trajectories = 3\n"));
    let out = dir.path().join("out");
    assert!(simulate(&["spectrum", "--config", &cfg, "--out", out.to_str().unwrap()], &[]).status.success());
    let rec = out.join("records/spectrum");
    let csv = std::fs::read_to_string(rec.join("repeat_00001.csv")).unwrap();
    assert!(csv.starts_with("t_ms,x_out\n"));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rec.join("repeat_00001.json")).unwrap()).unwrap();
    assert!(meta["ground_truth"]["p_mid"].is_number());
    assert!(!rec.join("repeat_00002.csv").exists());
    let traj = std::fs::read_to_string(out.join("trajectories/spectrum/atom_00002.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t_ms,x_mm,y_mm,vx,vy,reset_flag"));
    // 0.5 ms at 1 µs
    assert!(lines.count() >= 500);
}
