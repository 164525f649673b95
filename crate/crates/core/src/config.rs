//! Flat dotted-key run configuration: `key = value` lines, `#` comments.
//!
//! Values are integers, floats, bare strings, or bracketed float lists.
//! Unknown keys are a hard error, every key except `objective.name`,
//! `method.name`, and `experiment.seed` has a documented default, and
//! documents survive a parse → serialize → parse round trip unchanged.
//! Serialized output lists keys lexicographically and prints numbers in
//! shortest round-trip decimal form.

use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

use crate::assumptions::{ProbeSettings, RegionProbe};
use crate::experiment::{ExperimentError, InitialCondition, TrialConfig};
use crate::landscape::{double_well_2d, quadratic_from_rows, saddle_circle_3d, ObjectiveHandle};
use crate::optim::{Method, MethodConfig};
use crate::oracle::{NoiseModel, NoiseOracle};
use crate::schedule::{ScheduleError, StepSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    MalformedLine { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("key `{key}`: expected {expected}, got `{got}`")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        got: String,
    },
    #[error("missing mandatory key `{key}`")]
    MissingMandatory { key: &'static str },
    #[error("key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    UInt,
    Float,
    Str,
    Floats,
}

/// Every key of the document format, with its value kind.
const KEYS: &[(&str, Kind)] = &[
    ("experiment.delta_m", Kind::Float),
    ("experiment.delta_s", Kind::Float),
    ("experiment.horizon", Kind::UInt),
    ("experiment.initial", Kind::Floats),
    ("experiment.initial_radius", Kind::Float),
    ("experiment.record_stride", Kind::UInt),
    ("experiment.seed", Kind::UInt),
    ("method.beta", Kind::Float),
    ("method.name", Kind::Str),
    ("objective.matrix", Kind::Floats),
    ("objective.name", Kind::Str),
    ("oracle.c", Kind::Float),
    ("oracle.model", Kind::Str),
    ("oracle.sigma", Kind::Float),
    ("output.dir", Kind::Str),
    ("parallelism", Kind::UInt),
    ("probe.box_hi", Kind::Float),
    ("probe.box_lo", Kind::Float),
    ("probe.directions", Kind::UInt),
    ("probe.draws", Kind::UInt),
    ("probe.excitation_draws", Kind::UInt),
    ("probe.radii", Kind::Floats),
    ("probe.samples", Kind::UInt),
    ("probe.shell_samples", Kind::UInt),
    ("rate.tail_fraction", Kind::Float),
    ("schedule.a", Kind::Float),
    ("schedule.n0", Kind::UInt),
    ("schedule.p", Kind::Float),
    ("trials", Kind::UInt),
];

const MANDATORY: &[&str] = &["objective.name", "method.name", "experiment.seed"];

/// A parsed and validated run configuration document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfigDocument {
    pub schedule_a: f64,
    pub schedule_p: f64,
    pub schedule_n0: u64,
    pub objective_name: String,
    pub objective_matrix: Option<Vec<f64>>,
    pub oracle_model: String,
    pub oracle_sigma: f64,
    pub oracle_c: f64,
    pub method_name: String,
    pub method_beta: f64,
    pub horizon: u64,
    pub record_stride: u64,
    pub seed: u64,
    pub initial: Option<Vec<f64>>,
    pub initial_radius: f64,
    pub delta_s: f64,
    pub delta_m: f64,
    pub trials: u64,
    pub parallelism: usize,
    pub output_dir: String,
    pub probe_box_lo: f64,
    pub probe_box_hi: f64,
    pub probe_samples: u64,
    pub probe_draws: u64,
    pub probe_directions: u64,
    pub probe_excitation_draws: u64,
    pub probe_radii: Vec<f64>,
    pub probe_shell_samples: u64,
    pub rate_tail_fraction: f64,
}

/// Domain objects assembled from a document.
pub struct BuiltConfig {
    pub objective: ObjectiveHandle,
    pub trial: TrialConfig,
    pub trials: u64,
    pub parallelism: usize,
    pub output_dir: String,
    pub probe: RegionProbe,
    pub probe_settings: ProbeSettings,
    pub rate_tail_fraction: f64,
}

impl RunConfigDocument {
    fn with_defaults() -> Self {
        Self {
            schedule_a: 0.5,
            schedule_p: 0.7,
            schedule_n0: 0,
            objective_name: String::new(),
            objective_matrix: None,
            oracle_model: "sphere".to_string(),
            oracle_sigma: 0.5,
            oracle_c: 1.0,
            method_name: String::new(),
            method_beta: 0.9,
            horizon: 100_000,
            record_stride: 100,
            seed: 0,
            initial: None,
            initial_radius: 0.0,
            delta_s: 0.1,
            delta_m: 0.1,
            trials: 100,
            parallelism: 0,
            output_dir: "out".to_string(),
            probe_box_lo: -3.0,
            probe_box_hi: 3.0,
            probe_samples: 200,
            probe_draws: 2000,
            probe_directions: 64,
            probe_excitation_draws: 1_000_000,
            probe_radii: vec![5.0, 10.0, 20.0],
            probe_shell_samples: 1000,
            rate_tail_fraction: 0.5,
        }
    }

    /// Parses and eagerly validates a document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Self::with_defaults();
        let mut seen: Vec<&'static str> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::MalformedLine { line });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&(canonical, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line,
                });
            };
            if seen.contains(&canonical) {
                return Err(ConfigError::DuplicateKey {
                    key: key.to_string(),
                    line,
                });
            }
            seen.push(canonical);
            doc.apply_kv(canonical, value)?;
        }
        for &key in MANDATORY {
            if !seen.contains(&key) {
                return Err(ConfigError::MissingMandatory { key });
            }
        }
        doc.build().map(|_| doc)
    }

    /// Sets one key from its textual value; used by the parser and by CLI
    /// flag and sweep overrides. Callers re-validate with [`Self::build`].
    pub fn apply_kv(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let kind = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|&(_, kind)| kind)
            .ok_or_else(|| ConfigError::UnknownKey {
                key: key.to_string(),
                line: 0,
            })?;
        let mismatch = |expected: &'static str| ConfigError::TypeMismatch {
            key: key.to_string(),
            expected,
            got: raw.to_string(),
        };
        match kind {
            Kind::UInt => {
                let v: u64 = raw.parse().map_err(|_| mismatch("nonnegative integer"))?;
                match key {
                    "experiment.horizon" => self.horizon = v,
                    "experiment.record_stride" => self.record_stride = v,
                    "experiment.seed" => self.seed = v,
                    "parallelism" => self.parallelism = v as usize,
                    "probe.directions" => self.probe_directions = v,
                    "probe.draws" => self.probe_draws = v,
                    "probe.excitation_draws" => self.probe_excitation_draws = v,
                    "probe.samples" => self.probe_samples = v,
                    "probe.shell_samples" => self.probe_shell_samples = v,
                    "schedule.n0" => self.schedule_n0 = v,
                    "trials" => self.trials = v,
                    _ => unreachable!(),
                }
            }
            Kind::Float => {
                let v: f64 = raw.parse().map_err(|_| mismatch("number"))?;
                if !v.is_finite() {
                    return Err(mismatch("finite number"));
                }
                match key {
                    "experiment.delta_m" => self.delta_m = v,
                    "experiment.delta_s" => self.delta_s = v,
                    "experiment.initial_radius" => self.initial_radius = v,
                    "method.beta" => self.method_beta = v,
                    "oracle.c" => self.oracle_c = v,
                    "oracle.sigma" => self.oracle_sigma = v,
                    "probe.box_hi" => self.probe_box_hi = v,
                    "probe.box_lo" => self.probe_box_lo = v,
                    "rate.tail_fraction" => self.rate_tail_fraction = v,
                    "schedule.a" => self.schedule_a = v,
                    "schedule.p" => self.schedule_p = v,
                    _ => unreachable!(),
                }
            }
            Kind::Str => {
                if raw.is_empty() {
                    return Err(mismatch("string"));
                }
                match key {
                    "method.name" => self.method_name = raw.to_string(),
                    "objective.name" => self.objective_name = raw.to_string(),
                    "oracle.model" => self.oracle_model = raw.to_string(),
                    "output.dir" => self.output_dir = raw.to_string(),
                    _ => unreachable!(),
                }
            }
            Kind::Floats => {
                let inner = raw
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| mismatch("bracketed float list"))?;
                let mut values = Vec::new();
                for item in inner.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        continue;
                    }
                    let v: f64 = item.parse().map_err(|_| mismatch("bracketed float list"))?;
                    if !v.is_finite() {
                        return Err(mismatch("finite float list"));
                    }
                    values.push(v);
                }
                match key {
                    "experiment.initial" => self.initial = Some(values),
                    "objective.matrix" => self.objective_matrix = Some(values),
                    "probe.radii" => self.probe_radii = values,
                    _ => unreachable!(),
                }
            }
        }
        Ok(())
    }

    /// Serializes to the canonical text form: lexicographic keys, shortest
    /// round-trip numbers, one `key = value` per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for &(key, _) in KEYS {
            if let Some(value) = self.value_string(key) {
                out.push_str(key);
                out.push_str(" = ");
                out.push_str(&value);
                out.push('\n');
            }
        }
        out
    }

    fn value_string(&self, key: &str) -> Option<String> {
        let list = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            format!("[{}]", items.join(", "))
        };
        Some(match key {
            "experiment.delta_m" => format!("{}", self.delta_m),
            "experiment.delta_s" => format!("{}", self.delta_s),
            "experiment.horizon" => format!("{}", self.horizon),
            "experiment.initial" => return self.initial.as_deref().map(list),
            "experiment.initial_radius" => format!("{}", self.initial_radius),
            "experiment.record_stride" => format!("{}", self.record_stride),
            "experiment.seed" => format!("{}", self.seed),
            "method.beta" => format!("{}", self.method_beta),
            "method.name" => self.method_name.clone(),
            "objective.matrix" => return self.objective_matrix.as_deref().map(list),
            "objective.name" => self.objective_name.clone(),
            "oracle.c" => format!("{}", self.oracle_c),
            "oracle.model" => self.oracle_model.clone(),
            "oracle.sigma" => format!("{}", self.oracle_sigma),
            "output.dir" => self.output_dir.clone(),
            "parallelism" => format!("{}", self.parallelism),
            "probe.box_hi" => format!("{}", self.probe_box_hi),
            "probe.box_lo" => format!("{}", self.probe_box_lo),
            "probe.directions" => format!("{}", self.probe_directions),
            "probe.draws" => format!("{}", self.probe_draws),
            "probe.excitation_draws" => format!("{}", self.probe_excitation_draws),
            "probe.radii" => list(&self.probe_radii),
            "probe.samples" => format!("{}", self.probe_samples),
            "probe.shell_samples" => format!("{}", self.probe_shell_samples),
            "rate.tail_fraction" => format!("{}", self.rate_tail_fraction),
            "schedule.a" => format!("{}", self.schedule_a),
            "schedule.n0" => format!("{}", self.schedule_n0),
            "schedule.p" => format!("{}", self.schedule_p),
            "trials" => format!("{}", self.trials),
            _ => return None,
        })
    }

    /// The document as a sorted JSON object keyed by the dotted names,
    /// embedded into emitted reports.
    ///
    /// Execution-only knobs (`parallelism`, `output.dir`) are excluded: they
    /// choose *how* a run executes, not *what* it measures, and reports are
    /// byte-identical across them.
    pub fn to_json(&self) -> serde_json::Value {
        const EXECUTION_ONLY: &[&str] = &["parallelism", "output.dir"];
        let mut map = serde_json::Map::new();
        for &(key, kind) in KEYS {
            if EXECUTION_ONLY.contains(&key) {
                continue;
            }
            let value = match (kind, key) {
                (Kind::Floats, "experiment.initial") => match &self.initial {
                    Some(v) => serde_json::json!(v),
                    None => continue,
                },
                (Kind::Floats, "objective.matrix") => match &self.objective_matrix {
                    Some(v) => serde_json::json!(v),
                    None => continue,
                },
                (Kind::Floats, _) => serde_json::json!(self.probe_radii),
                (Kind::Str, _) => serde_json::json!(self.value_string(key).unwrap()),
                (Kind::UInt, _) => {
                    serde_json::json!(self.value_string(key).unwrap().parse::<u64>().unwrap())
                }
                (Kind::Float, _) => {
                    serde_json::json!(self.value_string(key).unwrap().parse::<f64>().unwrap())
                }
            };
            map.insert(key.to_string(), value);
        }
        serde_json::Value::Object(map)
    }

    /// Builds the domain objects, surfacing construction failures with the
    /// offending key.
    pub fn build(&self) -> Result<BuiltConfig, ConfigError> {
        let schedule =
            StepSchedule::new(self.schedule_a, self.schedule_p, self.schedule_n0).map_err(|e| {
                let key = match e {
                    ScheduleError::NonPositiveScale(_) => "schedule.a",
                    _ => "schedule.p",
                };
                ConfigError::Invalid {
                    key,
                    message: e.to_string(),
                }
            })?;

        let objective: ObjectiveHandle = match self.objective_name.as_str() {
            "double_well_2d" => Arc::new(double_well_2d()),
            "saddle_circle_3d" => Arc::new(saddle_circle_3d()),
            "quadratic" => {
                let data = self.objective_matrix.as_ref().ok_or(ConfigError::Invalid {
                    key: "objective.matrix",
                    message: "objective `quadratic` needs a row-major matrix".to_string(),
                })?;
                Arc::new(quadratic_from_rows(data).map_err(|e| ConfigError::Invalid {
                    key: "objective.matrix",
                    message: e.to_string(),
                })?)
            }
            other => {
                return Err(ConfigError::Invalid {
                    key: "objective.name",
                    message: format!(
                        "unknown objective `{other}` (expected double_well_2d, saddle_circle_3d, or quadratic)"
                    ),
                })
            }
        };

        let model = match self.oracle_model.as_str() {
            "exact" => NoiseModel::Exact,
            "sphere" => NoiseModel::Sphere {
                sigma: self.oracle_sigma,
            },
            "rademacher" => NoiseModel::Rademacher {
                sigma: self.oracle_sigma,
            },
            "finite_sum" => NoiseModel::FiniteSum { c: self.oracle_c },
            other => {
                return Err(ConfigError::Invalid {
                    key: "oracle.model",
                    message: format!(
                        "unknown model `{other}` (expected exact, sphere, rademacher, or finite_sum)"
                    ),
                })
            }
        };
        let oracle = NoiseOracle::new(objective.clone(), model).map_err(|e| {
            let key = if matches!(model, NoiseModel::FiniteSum { .. }) {
                "oracle.c"
            } else {
                "oracle.sigma"
            };
            ConfigError::Invalid {
                key,
                message: e.to_string(),
            }
        })?;

        let method = match self.method_name.as_str() {
            "sgd" => Method::Sgd,
            "shb" => Method::Shb,
            "snag" => Method::Snag,
            other => {
                return Err(ConfigError::Invalid {
                    key: "method.name",
                    message: format!("unknown method `{other}` (expected sgd, shb, or snag)"),
                })
            }
        };
        let method = MethodConfig::new(method, self.method_beta, schedule).map_err(|e| {
            ConfigError::Invalid {
                key: "method.beta",
                message: e.to_string(),
            }
        })?;

        let center = self
            .initial
            .clone()
            .unwrap_or_else(|| vec![0.0; objective.dim()]);
        let initial = if self.initial_radius > 0.0 {
            InitialCondition::Ball {
                center,
                radius: self.initial_radius,
            }
        } else {
            InitialCondition::Fixed(center)
        };

        let trial = TrialConfig {
            oracle,
            method,
            initial,
            horizon: self.horizon,
            record_stride: self.record_stride,
            master_seed: self.seed,
            delta_saddle: self.delta_s,
            delta_minimum: self.delta_m,
        };
        trial.validate().map_err(|e| {
            let key = match e {
                ExperimentError::HorizonTooShort { .. } => "experiment.horizon",
                ExperimentError::BadStride => "experiment.record_stride",
                ExperimentError::BadTolerance(_) => "experiment.delta_s",
                ExperimentError::DimensionMismatch { .. } => "experiment.initial",
                _ => "experiment.horizon",
            };
            ConfigError::Invalid {
                key,
                message: e.to_string(),
            }
        })?;

        let probe = RegionProbe::new(
            self.probe_box_lo,
            self.probe_box_hi,
            self.probe_samples as usize,
            self.seed,
        )
        .map_err(|e| ConfigError::Invalid {
            key: "probe.box_lo",
            message: e.to_string(),
        })?;
        if self.probe_directions < 16 {
            return Err(ConfigError::Invalid {
                key: "probe.directions",
                message: format!("need at least 16 directions, got {}", self.probe_directions),
            });
        }
        if self.probe_excitation_draws < 100_000 {
            return Err(ConfigError::Invalid {
                key: "probe.excitation_draws",
                message: format!(
                    "need at least 1e5 draws, got {}",
                    self.probe_excitation_draws
                ),
            });
        }
        if self.probe_radii.windows(2).any(|w| w[0] >= w[1]) || self.probe_radii.is_empty() {
            return Err(ConfigError::Invalid {
                key: "probe.radii",
                message: "radii must be a nonempty strictly increasing list".to_string(),
            });
        }
        if !(self.rate_tail_fraction > 0.0 && self.rate_tail_fraction <= 1.0) {
            return Err(ConfigError::Invalid {
                key: "rate.tail_fraction",
                message: format!("must lie in (0, 1], got {}", self.rate_tail_fraction),
            });
        }

        Ok(BuiltConfig {
            objective,
            trial,
            trials: self.trials,
            parallelism: self.parallelism,
            output_dir: self.output_dir.clone(),
            probe,
            probe_settings: ProbeSettings {
                abc_draws_per_point: self.probe_draws,
                excitation_directions: self.probe_directions as usize,
                excitation_draws: self.probe_excitation_draws,
                shell_radii: self.probe_radii.clone(),
                shell_samples: self.probe_shell_samples as usize,
                local_bound_draws: 100_000,
            },
            rate_tail_fraction: self.rate_tail_fraction,
        })
    }
}
