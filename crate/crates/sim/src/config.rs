//! Line-oriented `section.key = value` run configuration.
//!
//! ```text
//! # comments run to end of line
//! cell.temperature_c = 58
//! beam.shape = gaussian
//! beam.diameter_mm = 0.6
//! probe.larmor_khz = 500
//! ```
//!
//! Unknown and duplicate keys are rejected. Every key has a typed entry in
//! [`KEYS`]; missing optional keys take their documented default.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use transit_core::consts::celsius_to_kelvin;
use transit_core::dynamics::{default_dt, DecoherenceParams, MeasurementConfig};
use transit_core::kinematics::CellGeometry;
use transit_core::optics::{
    disk_mean_intensity, effective_kappa, BeamProfile, BeamShape, CouplingParams, PowerAveraging,
};
use transit_core::squeezing::{Estimator, PnlMode};

use crate::error::ConfigError;

/// Wall-reset probability that gives κ²T₂ = 2.26 at the reference settings.
pub const CALIBRATED_WALL_RESET: &str = "0.00998";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Word(&'static [&'static str]),
    Text,
}

#[derive(Debug, Clone, Copy)]
enum Fallback {
    Required,
    Optional,
    Value(&'static str),
}

pub struct KeySpec {
    pub key: &'static str,
    kind: Kind,
    default: Fallback,
}

const fn spec(key: &'static str, kind: Kind, default: Fallback) -> KeySpec {
    KeySpec { key, kind, default }
}

use Fallback::{Optional, Required, Value as Def};
use Kind::{Bool, Float, Int, Text, Word};

pub static KEYS: &[KeySpec] = &[
    spec("cell.temperature_c", Float, Required),
    spec("cell.radius_mm", Float, Def("1.6925687506432699")),
    spec("cell.wall_reset_probability", Float, Def(CALIBRATED_WALL_RESET)),
    spec("beam.shape", Word(&["gaussian", "tophat"]), Required),
    spec("beam.diameter_mm", Float, Required),
    spec("probe.larmor_khz", Float, Required),
    spec("probe.peak_power_mw", Float, Def("5")),
    spec("probe.duty_cycle", Float, Def("0.1")),
    spec("probe.detuning_ghz", Float, Def("-2.5")),
    spec("coupling.kappa_target", Float, Optional),
    spec("coupling.area_mm2", Float, Def("9")),
    spec("coupling.atom_number", Float, Def("5.6606e10")),
    spec("decoherence.gamma_background", Float, Def("0.1")),
    spec("decoherence.probe_fraction", Float, Def("0.08")),
    spec("decoherence.langevin_variance", Float, Def("0.5")),
    spec("dynamics.dt_us", Float, Optional),
    spec("dynamics.atom_step_us", Float, Def("0.25")),
    spec("dynamics.relax_interval_us", Float, Def("2")),
    spec("dynamics.duration_ms", Float, Def("4")),
    spec("dynamics.n_sim", Int, Def("10000")),
    spec("dynamics.n_repeats", Int, Def("2500")),
    spec("dynamics.stationary_atoms", Bool, Def("false")),
    spec("analysis.bins", Int, Def("100")),
    spec("analysis.estimator", Word(&["prediction", "retrodiction"]), Def("retrodiction")),
    spec("analysis.pnl_mode", Word(&["theory_stationary", "experiment_45"]), Def("theory_stationary")),
    spec("analysis.batches", Int, Def("5")),
    spec("analysis.background_offset_khz", Float, Def("20")),
    spec("analysis.background_halfwidth_khz", Float, Def("5")),
    spec("analysis.span_khz", Float, Def("100")),
    spec("analysis.rbw_khz", Float, Optional),
    spec("analysis.peak_halfwidth_khz", Float, Def("3")),
    spec("analysis.ridge", Float, Def("1e-8")),
    spec("analysis.shot_repeats", Int, Def("200")),
    spec("analysis.pnl_repeats", Int, Def("500")),
    spec("analysis.coherence_atoms", Int, Def("4000")),
    spec("analysis.coherence_lag_ms", Float, Def("2")),
    spec("analysis.target_kappa2_t2", Float, Def("2.26")),
    spec("analysis.calibration_tolerance", Float, Def("0.01")),
    spec("seed", Int, Def("1")),
    spec("output.dir", Text, Def("out")),
    spec("output.dump_records", Int, Def("0")),
    spec("output.dump_trajectories", Int, Def("0")),
];

fn lookup(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v}"),
        }
    }
}

fn parse_value(spec: &KeySpec, raw: &str) -> Result<Value, String> {
    match spec.kind {
        Float => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Float)
            .ok_or_else(|| format!("expected a number, got `{raw}`")),
        Int => raw
            .parse::<u64>()
            .map(Value::Int)
            .map_err(|_| format!("expected a nonnegative integer, got `{raw}`")),
        Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{raw}`")),
        },
        Word(allowed) => {
            if allowed.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(format!("expected one of {}, got `{raw}`", allowed.join(", ")))
            }
        }
        Text => Ok(Value::Text(raw.to_string())),
    }
}

/// Splits `key = value # comment`; values may be double-quoted.
fn split_line(line: &str, number: usize) -> Result<Option<(String, String)>, ConfigError> {
    let mut in_quotes = false;
    let mut end = line.len();
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => {
                end = i;
                break;
            }
            _ => {}
        }
    }
    let body = line[..end].trim();
    if body.is_empty() {
        return Ok(None);
    }
    let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
        line: number,
        message: format!("expected `key = value`, got `{body}`"),
    })?;
    let key = key.trim();
    let mut value = value.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.') {
        return Err(ConfigError::Parse {
            line: number,
            message: format!("malformed key `{key}`"),
        });
    }
    if let Some(stripped) = value.strip_prefix('"') {
        value = stripped.strip_suffix('"').ok_or_else(|| ConfigError::Parse {
            line: number,
            message: "unterminated string".into(),
        })?;
    }
    if value.is_empty() {
        return Err(ConfigError::Parse {
            line: number,
            message: format!("missing value for `{key}`"),
        });
    }
    Ok(Some((key.to_string(), value.to_string())))
}

/// Key/value map after defaults, before typed interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigValues {
    values: BTreeMap<&'static str, Value>,
}

impl ConfigValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen: BTreeMap<&'static str, (Value, usize)> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let number = idx + 1;
            let Some((key, raw)) = split_line(line, number)? else {
                continue;
            };
            let spec = lookup(&key).ok_or_else(|| ConfigError::UnknownKey {
                key: key.clone(),
                line: number,
            })?;
            if let Some((_, first)) = seen.get(spec.key) {
                return Err(ConfigError::Duplicate {
                    key,
                    line: number,
                    first: *first,
                });
            }
            let value = parse_value(spec, &raw).map_err(|reason| ConfigError::Invalid {
                key: key.clone(),
                reason: format!("line {number}: {reason}"),
            })?;
            seen.insert(spec.key, (value, number));
        }
        let mut values = BTreeMap::new();
        for spec in KEYS {
            if let Some((v, _)) = seen.remove(spec.key) {
                values.insert(spec.key, v);
                continue;
            }
            match spec.default {
                Required => return Err(ConfigError::Missing(spec.key)),
                Optional => {}
                Def(raw) => {
                    values.insert(spec.key, parse_value(spec, raw).expect("valid default"));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    /// Overrides one key with a raw textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let spec = lookup(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            line: 0,
        })?;
        let value = parse_value(spec, raw).map_err(|reason| ConfigError::Invalid {
            key: key.to_string(),
            reason,
        })?;
        self.values.insert(spec.key, value);
        Ok(())
    }

    pub fn unset(&mut self, key: &str) {
        self.values.remove(key);
    }

    /// SHA-256 over the sorted, canonically formatted keys that affect
    /// results (everything except `output.*`).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if k.starts_with("output.") {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Config text with every resolved key, loadable by [`ConfigValues::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            match v {
                Value::Text(s) if lookup(k).map(|s| s.kind) == Some(Text) => out.push_str(&format!("{k} = \"{s}\"\n")),
                _ => out.push_str(&format!("{k} = {v}\n")),
            }
        }
        out
    }

    fn float(&self, key: &'static str) -> Option<f64> {
        match self.values.get(key) {
            Some(Value::Float(v)) => Some(*v),
            _ => None,
        }
    }

    fn req_float(&self, key: &'static str) -> f64 {
        self.float(key).expect("resolved key")
    }

    fn int(&self, key: &'static str) -> u64 {
        match self.values.get(key) {
            Some(Value::Int(v)) => *v,
            _ => unreachable!("resolved key {key}"),
        }
    }

    fn boolean(&self, key: &'static str) -> bool {
        matches!(self.values.get(key), Some(Value::Bool(true)))
    }

    fn text(&self, key: &'static str) -> &str {
        match self.values.get(key) {
            Some(Value::Text(v)) => v,
            _ => unreachable!("resolved key {key}"),
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(values: &ConfigValues, key: &'static str) -> Result<f64, ConfigError> {
    let v = values.req_float(key);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn at_least(values: &ConfigValues, key: &'static str, min: u64) -> Result<usize, ConfigError> {
    let v = values.int(key);
    if v >= min {
        Ok(v as usize)
    } else {
        Err(invalid(key, format!("must be at least {min}, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub bins: usize,
    pub estimator: Estimator,
    pub pnl_mode: PnlMode,
    pub batches: usize,
    pub background_offset_khz: f64,
    pub background_halfwidth_khz: f64,
    pub span_khz: f64,
    pub rbw_khz: Option<f64>,
    pub peak_halfwidth_khz: f64,
    pub ridge: f64,
    pub shot_repeats: usize,
    pub pnl_repeats: usize,
    pub coherence_atoms: usize,
    pub coherence_lag_ms: f64,
    pub target_kappa2_t2: f64,
    pub calibration_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: String,
    pub dump_records: usize,
    pub dump_trajectories: usize,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub values: ConfigValues,
    pub measurement: MeasurementConfig,
    /// Fraction of κ² that sets the ensemble-mean probe-induced decay rate.
    pub probe_fraction: f64,
    pub n_repeats: usize,
    pub analysis: AnalysisSettings,
    pub seed: u64,
    pub output: OutputSettings,
    pub hash: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_values(ConfigValues::parse(text)?)
    }

    pub fn from_values(values: ConfigValues) -> Result<Self, ConfigError> {
        let temperature_c = values.req_float("cell.temperature_c");
        if celsius_to_kelvin(temperature_c) <= 0.0 {
            return Err(invalid("cell.temperature_c", "must be above absolute zero"));
        }
        let radius = positive(&values, "cell.radius_mm")?;
        let p_reset = values.req_float("cell.wall_reset_probability");
        if !(0.0..=1.0).contains(&p_reset) {
            return Err(invalid("cell.wall_reset_probability", "must lie in [0, 1]"));
        }
        let geometry = CellGeometry::new(radius, celsius_to_kelvin(temperature_c), p_reset)
            .map_err(|e| invalid("cell", e.to_string()))?;

        let shape = match values.text("beam.shape") {
            "tophat" => BeamShape::Tophat,
            _ => BeamShape::Gaussian,
        };
        let diameter = positive(&values, "beam.diameter_mm")?;
        let beam = BeamProfile::from_diameter(shape, diameter).map_err(|e| invalid("beam.diameter_mm", e.to_string()))?;

        let larmor_khz = values.req_float("probe.larmor_khz");
        if larmor_khz < 0.0 {
            return Err(invalid("probe.larmor_khz", "must be nonnegative"));
        }
        let duty = values.req_float("probe.duty_cycle");
        if !(duty > 0.0 && duty <= 1.0) {
            return Err(invalid("probe.duty_cycle", "must lie in (0, 1]"));
        }
        let power_mw = values.req_float("probe.peak_power_mw");
        if power_mw < 0.0 {
            return Err(invalid("probe.peak_power_mw", "must be nonnegative"));
        }
        let kappa = match values.float("coupling.kappa_target") {
            Some(k) if k >= 0.0 => k,
            Some(_) => return Err(invalid("coupling.kappa_target", "must be nonnegative")),
            None => {
                let params = CouplingParams {
                    area_interaction: positive(&values, "coupling.area_mm2")? * 1e-6,
                    detuning: 2.0 * std::f64::consts::PI * values.req_float("probe.detuning_ghz") * 1e9,
                    power_peak: power_mw * 1e-3,
                    duty_cycle: duty,
                    atom_number: positive(&values, "coupling.atom_number")?,
                    ..CouplingParams::reference()
                };
                effective_kappa(&params, PowerAveraging::TimeAveraged).map_err(|e| invalid("probe.detuning_ghz", e.to_string()))?
            }
        };

        let probe_fraction = values.req_float("decoherence.probe_fraction");
        let gamma_background = values.req_float("decoherence.gamma_background");
        let langevin_variance = values.req_float("decoherence.langevin_variance");
        for (key, v) in [
            ("decoherence.probe_fraction", probe_fraction),
            ("decoherence.gamma_background", gamma_background),
            ("decoherence.langevin_variance", langevin_variance),
        ] {
            if v < 0.0 {
                return Err(invalid(key, "must be nonnegative"));
            }
        }
        let ubar = disk_mean_intensity(&beam, &geometry);
        let decoherence = DecoherenceParams {
            gamma_background,
            gamma_probe_peak: probe_fraction * kappa * kappa / (ubar * duty),
            langevin_variance,
        };

        let dt = match values.float("dynamics.dt_us") {
            Some(us) if us > 0.0 => us * 1e-3,
            Some(_) => return Err(invalid("dynamics.dt_us", "must be positive")),
            None => default_dt(larmor_khz),
        };
        let measurement = MeasurementConfig {
            geometry,
            beam,
            kappa,
            larmor_khz,
            duty_cycle: duty,
            dt,
            atom_step: positive(&values, "dynamics.atom_step_us")? * 1e-3,
            duration: positive(&values, "dynamics.duration_ms")?,
            n_sim: at_least(&values, "dynamics.n_sim", 1)?,
            decoherence,
            stationary_atoms: values.boolean("dynamics.stationary_atoms"),
            relax_interval: positive(&values, "dynamics.relax_interval_us")? * 1e-3,
        };
        measurement.validate().map_err(|e| invalid("dynamics", e.to_string()))?;

        let analysis = AnalysisSettings {
            bins: at_least(&values, "analysis.bins", 2)?,
            estimator: match values.text("analysis.estimator") {
                "prediction" => Estimator::Prediction,
                _ => Estimator::Retrodiction,
            },
            pnl_mode: match values.text("analysis.pnl_mode") {
                "experiment_45" => PnlMode::Experiment45,
                _ => PnlMode::TheoryStationary,
            },
            batches: at_least(&values, "analysis.batches", 1)?,
            background_offset_khz: values.req_float("analysis.background_offset_khz"),
            background_halfwidth_khz: positive(&values, "analysis.background_halfwidth_khz")?,
            span_khz: positive(&values, "analysis.span_khz")?,
            rbw_khz: match values.float("analysis.rbw_khz") {
                Some(v) if v > 0.0 => Some(v),
                Some(_) => return Err(invalid("analysis.rbw_khz", "must be positive")),
                None => None,
            },
            peak_halfwidth_khz: positive(&values, "analysis.peak_halfwidth_khz")?,
            ridge: values.req_float("analysis.ridge").max(0.0),
            shot_repeats: at_least(&values, "analysis.shot_repeats", 2)?,
            pnl_repeats: at_least(&values, "analysis.pnl_repeats", 2)?,
            coherence_atoms: at_least(&values, "analysis.coherence_atoms", 1)?,
            coherence_lag_ms: positive(&values, "analysis.coherence_lag_ms")?,
            target_kappa2_t2: positive(&values, "analysis.target_kappa2_t2")?,
            calibration_tolerance: positive(&values, "analysis.calibration_tolerance")?,
        };
        if measurement.n_samples() < analysis.bins {
            return Err(invalid("analysis.bins", "more bins than record samples"));
        }
        let output = OutputSettings {
            dir: values.text("output.dir").to_string(),
            dump_records: values.int("output.dump_records") as usize,
            dump_trajectories: values.int("output.dump_trajectories") as usize,
        };
        let hash = values.hash();
        Ok(Self {
            n_repeats: at_least(&values, "dynamics.n_repeats", 2)?,
            seed: values.int("seed"),
            values,
            measurement,
            probe_fraction,
            analysis,
            output,
            hash,
        })
    }

    /// Copy with one key overridden, re-validated.
    pub fn with(&self, key: &str, raw: &str) -> Result<Self, ConfigError> {
        let mut values = self.values.clone();
        values.set(key, raw)?;
        Self::from_values(values)
    }

    pub fn kappa(&self) -> f64 {
        self.measurement.kappa
    }

    pub fn beam_diameter(&self) -> f64 {
        self.measurement.beam.diameter()
    }

    /// Ensemble-mean probe-induced decay rate, per ms.
    pub fn mean_probe_rate(&self) -> f64 {
        self.probe_fraction * self.kappa() * self.kappa()
    }
}
