//! CSV and JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transit_core::dynamics::RepeatRecord;
use transit_core::kinematics::Trajectory;

use crate::error::{Result, SimError};
use crate::spectrum::SpectrumRun;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SimError::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| SimError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SimError::Format {
        path: path.into(),
        message: e.to_string(),
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> SimError {
    SimError::Format {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Sidecar for a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub config_hash: String,
    pub seed: u64,
    pub n_avg: usize,
    pub segments_per_record: usize,
    pub rbw_khz: f64,
    pub enbw_khz: f64,
    pub shot_reference: f64,
    pub lo_khz: f64,
    pub background_offset_khz: f64,
    pub background_linear: f64,
    pub background_db: f64,
    pub peak_area: f64,
    pub peak_contrast: f64,
    pub beam_shape: String,
    pub beam_diameter_mm: f64,
    pub kappa_ms_sqrt: f64,
    pub sweep: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFile {
    pub meta: SpectrumMeta,
    pub freq_khz: Vec<f64>,
    pub psd_linear: Vec<f64>,
    pub psd_db: Vec<f64>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `<stem>.csv` with one row per frequency (sweep values repeated on
/// every row) and `<stem>.json` with the metadata.
pub fn write_spectrum(csv_path: &Path, run: &SpectrumRun, meta: &SpectrumMeta) -> Result<()> {
    let mut w = csv_writer(csv_path)?;
    let mut header = vec!["freq_khz".to_string(), "psd_linear".into(), "psd_db".into()];
    header.extend(meta.sweep.keys().cloned());
    w.write_record(&header).map_err(|e| csv_error(csv_path, e))?;
    for k in 0..run.estimate.freq_khz.len() {
        let mut row = vec![
            format!("{:?}", run.estimate.freq_khz[k]),
            format!("{:?}", run.estimate.psd[k]),
            format!("{:?}", run.psd_db[k]),
        ];
        row.extend(meta.sweep.values().cloned());
        w.write_record(&row).map_err(|e| csv_error(csv_path, e))?;
    }
    w.flush().map_err(|e| SimError::io(csv_path, e))?;
    write_json(&sidecar_path(csv_path), meta)
}

/// Loads a spectrum written by [`write_spectrum`], refusing files produced by
/// a different configuration.
pub fn read_spectrum(csv_path: &Path, expected_hash: &str) -> Result<SpectrumFile> {
    let meta: SpectrumMeta = read_json(&sidecar_path(csv_path))?;
    if meta.config_hash != expected_hash {
        return Err(SimError::HashMismatch {
            path: csv_path.into(),
            expected: expected_hash.to_string(),
            found: meta.config_hash,
        });
    }
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
    let mut out = SpectrumFile {
        meta,
        freq_khz: Vec::new(),
        psd_linear: Vec::new(),
        psd_db: Vec::new(),
    };
    for row in r.records() {
        let row = row.map_err(|e| csv_error(csv_path, e))?;
        let num = |i: usize| -> Result<f64> {
            row.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| SimError::Format {
                path: csv_path.into(),
                message: format!("bad number in column {i}"),
            })
        };
        out.freq_khz.push(num(0)?);
        out.psd_linear.push(num(1)?);
        out.psd_db.push(num(2)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMeta {
    pub x_start: f64,
    pub p_start: f64,
    pub x_mid: f64,
    pub p_mid: f64,
    pub x_end: f64,
    pub p_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub config_hash: String,
    pub seed: u64,
    pub repeat: u64,
    pub dt_ms: f64,
    pub larmor_khz: f64,
    pub wall_hits: u64,
    pub resets: u64,
    pub ground_truth: GroundTruthMeta,
}

/// `repeat_NNNNN.csv` (t_ms, x_out) plus its JSON sidecar.
pub fn write_record(dir: &Path, repeat: u64, rec: &RepeatRecord, dt: f64, larmor_khz: f64, config_hash: &str, seed: u64) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(format!("repeat_{repeat:05}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["t_ms", "x_out"]).map_err(|e| csv_error(&path, e))?;
    for (m, x) in rec.x_out.iter().enumerate() {
        w.write_record([format!("{:?}", (m as f64 + 0.5) * dt), format!("{x:?}")])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| SimError::io(&path, e))?;
    let t = rec.truth;
    write_json(
        &sidecar_path(&path),
        &RecordMeta {
            config_hash: config_hash.to_string(),
            seed,
            repeat,
            dt_ms: dt,
            larmor_khz,
            wall_hits: rec.wall_hits,
            resets: rec.resets,
            ground_truth: GroundTruthMeta {
                x_start: t.x_start,
                p_start: t.p_start,
                x_mid: t.x_mid,
                p_mid: t.p_mid,
                x_end: t.x_end,
                p_end: t.p_end,
            },
        },
    )
}

/// t_ms, x_mm, y_mm, vx, vy, reset_flag; the flag marks samples preceded by a
/// phase reset since the previous sample.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_ms", "x_mm", "y_mm", "vx", "vy", "reset_flag"])
        .map_err(|e| csv_error(path, e))?;
    let mut events = traj.reset_events.iter().peekable();
    for s in &traj.samples {
        let mut flag = 0;
        while events.peek().is_some_and(|t| **t <= s.time) {
            events.next();
            flag = 1;
        }
        w.write_record([
            format!("{:?}", s.time),
            format!("{:?}", s.position.x),
            format!("{:?}", s.position.y),
            format!("{:?}", s.velocity.x),
            format!("{:?}", s.velocity.y),
            flag.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}
