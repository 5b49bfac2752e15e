//! `--sweep axis=v1,v2,...` expansion. Several sweeps form a Cartesian
//! product, first axis outermost.

use crate::config::RunConfig;
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: String,
    pub key: String,
    pub values: Vec<String>,
}

/// Short axis names; any full config key is accepted as well.
pub fn axis_key(axis: &str) -> &str {
    match axis {
        "beam_diameter" => "beam.diameter_mm",
        "larmor" => "probe.larmor_khz",
        "kappa" => "coupling.kappa_target",
        "beam_shape" => "beam.shape",
        "n_averages" => "dynamics.n_repeats",
        other => other,
    }
}

pub fn parse_sweep(spec: &str) -> Result<SweepSpec, ConfigError> {
    let err = |reason: &str| ConfigError::Sweep {
        spec: spec.to_string(),
        reason: reason.to_string(),
    };
    let (axis, list) = spec.split_once('=').ok_or_else(|| err("expected axis=v1,v2,..."))?;
    let axis = axis.trim();
    let values: Vec<String> = list.split(',').map(|v| v.trim().to_string()).collect();
    if axis.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(err("empty axis or value"));
    }
    Ok(SweepSpec {
        axis: axis.to_string(),
        key: axis_key(axis).to_string(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// (axis, value) pairs in sweep order.
    pub labels: Vec<(String, String)>,
    pub config: RunConfig,
}

impl SweepPoint {
    /// File-name-safe identifier, `base` when nothing is swept.
    pub fn slug(&self, base: &str) -> String {
        if self.labels.is_empty() {
            return base.to_string();
        }
        let parts: Vec<String> = self
            .labels
            .iter()
            .map(|(a, v)| {
                let clean: String = format!("{a}-{v}")
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
                    .collect();
                clean
            })
            .collect();
        format!("{base}_{}", parts.join("_"))
    }
}

pub fn expand(base: &RunConfig, sweeps: &[SweepSpec]) -> Result<Vec<SweepPoint>, ConfigError> {
    let mut points = vec![SweepPoint {
        labels: Vec::new(),
        config: base.clone(),
    }];
    for sweep in sweeps {
        let mut next = Vec::with_capacity(points.len() * sweep.values.len());
        for point in &points {
            for value in &sweep.values {
                let config = point.config.with(&sweep.key, value).map_err(|e| ConfigError::Sweep {
                    spec: format!("{}={value}", sweep.axis),
                    reason: e.to_string(),
                })?;
                let mut labels = point.labels.clone();
                labels.push((sweep.axis.clone(), value.clone()));
                next.push(SweepPoint { labels, config });
            }
        }
        points = next;
    }
    Ok(points)
}
