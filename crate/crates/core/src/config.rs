//! TOML experiment documents.
//!
//! ```toml
//! [scenario]
//! preset = "scenario1"          # optional base, fields below override it
//! iterations = 300
//! initial_position = [35.0, 35.0]
//! measurement_source = "direct" # or "signal"
//!
//! [scenario.covariance]
//! diag = 0.4
//! offdiag = 0.1                 # or: matrix = [[...], ...]
//!
//! [[optimizer]]
//! algorithm = "RMSProp+AF"
//! buffer_size = 10
//! ```
//!
//! Unknown keys are rejected. Omitted optimizer fields take the reference
//! defaults of [`OptimizerConfig::new`]; an absent `[[optimizer]]` list
//! selects all five algorithms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{MeasurementSource, Scenario};
use crate::measurement::{CovarianceSpec, Point};
use crate::optim::{Algorithm, OptimizerConfig};
use crate::signal::SignalParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    /// Syntax or schema violation; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Validation {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

/// A fully validated experiment: one scenario and the optimizers to run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub scenario: Scenario,
    pub optimizers: Vec<OptimizerConfig>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    scenario: ScenarioDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    optimizer: Vec<OptimizerDoc>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    receivers: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_position: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_position: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measurement_source: Option<MeasurementSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resample_each_iteration: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<CovarianceDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signal: Option<SignalParams>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovarianceDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    diag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offdiag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerDoc {
    algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    momentum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_moment_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_moment_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    buffer_size: Option<usize>,
}

fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

fn pair(p: &Point) -> [f64; 2] {
    [p.x, p.y]
}

/// Parses and validates an experiment document.
pub fn parse_config(text: &str) -> Result<Experiment, ConfigError> {
    let doc: Document = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let scenario = build_scenario(doc.scenario)?;
    let optimizers = if doc.optimizer.is_empty() {
        Algorithm::ALL.iter().map(|&a| OptimizerConfig::new(a)).collect()
    } else {
        doc.optimizer
            .into_iter()
            .enumerate()
            .map(|(idx, o)| build_optimizer(idx, o))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(Experiment { scenario, optimizers })
}

fn build_scenario(doc: ScenarioDoc) -> Result<Scenario, ConfigError> {
    let mut scenario = match doc.preset.as_deref() {
        Some(name) => Scenario::by_name(name)
            .ok_or_else(|| ConfigError::invalid("scenario.preset", format!("unknown preset '{name}'")))?,
        None => {
            let missing = |f: &str| ConfigError::invalid(format!("scenario.{f}"), "required without a preset");
            Scenario {
                id: "custom".into(),
                receivers: doc
                    .receivers
                    .clone()
                    .ok_or_else(|| missing("receivers"))?
                    .into_iter()
                    .map(point)
                    .collect(),
                true_position: point(doc.true_position.ok_or_else(|| missing("true_position"))?),
                covariance: CovarianceSpec::Uniform {
                    diag: 0.4,
                    offdiag: 0.1,
                },
                initial_position: None,
                iterations: 300,
                measurement_source: MeasurementSource::Direct,
                signal: None,
                resample_each_iteration: false,
            }
        }
    };
    if let Some(id) = doc.id {
        scenario.id = id;
    }
    if let Some(r) = doc.receivers {
        scenario.receivers = r.into_iter().map(point).collect();
    }
    if let Some(p) = doc.true_position {
        scenario.true_position = point(p);
    }
    if let Some(p) = doc.initial_position {
        scenario.initial_position = Some(point(p));
    }
    if let Some(k) = doc.iterations {
        scenario.iterations = k;
    }
    if let Some(src) = doc.measurement_source {
        scenario.measurement_source = src;
    }
    if let Some(flag) = doc.resample_each_iteration {
        scenario.resample_each_iteration = flag;
    }
    if let Some(signal) = doc.signal {
        signal
            .validate()
            .map_err(|e| ConfigError::invalid("scenario.signal", e))?;
        scenario.signal = Some(signal);
    }
    if let Some(cov) = doc.covariance {
        scenario.covariance = match cov {
            CovarianceDoc {
                matrix: Some(matrix),
                diag: None,
                offdiag: None,
            } => CovarianceSpec::Full { matrix },
            CovarianceDoc {
                matrix: None,
                diag: Some(diag),
                offdiag,
            } => CovarianceSpec::Uniform {
                diag,
                offdiag: offdiag.unwrap_or(0.0),
            },
            _ => {
                return Err(ConfigError::invalid(
                    "scenario.covariance",
                    "give either `matrix` or `diag` (with optional `offdiag`)",
                ))
            }
        };
    }

    let field = |e: crate::Error| {
        let name = match &e {
            crate::Error::Covariance(_) => "scenario.covariance",
            _ => "scenario",
        };
        ConfigError::invalid(name, e)
    };
    scenario.validate().map_err(field)?;
    Ok(scenario)
}

fn build_optimizer(idx: usize, doc: OptimizerDoc) -> Result<OptimizerConfig, ConfigError> {
    let algorithm: Algorithm = doc
        .algorithm
        .parse()
        .map_err(|e| ConfigError::invalid(format!("optimizer[{idx}].algorithm"), e))?;
    let mut c = OptimizerConfig::new(algorithm);
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = doc.$f { c.$f = v; } )* };
    }
    apply!(
        learning_rate,
        momentum,
        decay,
        first_moment_decay,
        second_moment_decay,
        decay_threshold,
        smoothing,
        buffer_size
    );
    if let Err(e) = c.validate() {
        let message = e.to_string();
        let name = [
            "learning_rate",
            "momentum",
            "first_moment_decay",
            "second_moment_decay",
            "decay_threshold",
            "decay",
            "smoothing",
            "buffer_size",
        ]
        .into_iter()
        .find(|f| message.contains(f))
        .unwrap_or("optimizer");
        return Err(ConfigError::invalid(format!("optimizer[{idx}].{name}"), message));
    }
    Ok(c)
}

/// Writes a fully explicit document that parses back to the same experiment.
pub fn to_toml(experiment: &Experiment) -> String {
    let s = &experiment.scenario;
    let covariance = match &s.covariance {
        CovarianceSpec::Uniform { diag, offdiag } => CovarianceDoc {
            diag: Some(*diag),
            offdiag: Some(*offdiag),
            matrix: None,
        },
        CovarianceSpec::Full { matrix } => CovarianceDoc {
            matrix: Some(matrix.clone()),
            ..CovarianceDoc::default()
        },
    };
    let doc = Document {
        scenario: ScenarioDoc {
            preset: None,
            id: Some(s.id.clone()),
            receivers: Some(s.receivers.iter().map(pair).collect()),
            true_position: Some(pair(&s.true_position)),
            initial_position: s.initial_position.as_ref().map(pair),
            iterations: Some(s.iterations),
            measurement_source: Some(s.measurement_source),
            resample_each_iteration: Some(s.resample_each_iteration),
            covariance: Some(covariance),
            signal: s.signal.clone(),
        },
        optimizer: experiment
            .optimizers
            .iter()
            .map(|c| OptimizerDoc {
                algorithm: c.algorithm.name().to_string(),
                learning_rate: Some(c.learning_rate),
                momentum: Some(c.momentum),
                decay: Some(c.decay),
                first_moment_decay: Some(c.first_moment_decay),
                second_moment_decay: Some(c.second_moment_decay),
                decay_threshold: Some(c.decay_threshold),
                smoothing: Some(c.smoothing),
                buffer_size: Some(c.buffer_size),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("experiment documents always serialize")
}
