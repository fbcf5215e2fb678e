//! JSON scenario files. Field names carry SI units; unknown fields are
//! rejected so a misspelt unit suffix cannot be silently ignored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dprc_core::{ArrivalCurve, ChannelModel, Error, LearningTaskSpec, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub deadline_s: f64,
    pub bits_per_sample: f64,
    pub prior_samples: f64,
    pub amplitude: f64,
    pub decay: f64,
    pub error_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalEventFile {
    pub time_s: f64,
    pub cumulative_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub tasks: Vec<TaskFile>,
    pub budget_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_cap_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival: Option<Vec<ArrivalEventFile>>,
    pub energy_weight: f64,
    pub channel: ChannelFile,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            tasks: s
                .tasks
                .iter()
                .map(|t| TaskFile {
                    deadline_s: t.deadline,
                    bits_per_sample: t.bits_per_sample,
                    prior_samples: t.prior_samples,
                    amplitude: t.amplitude,
                    decay: t.decay,
                    error_weight: t.error_weight,
                })
                .collect(),
            budget_bits: s.budget_bits,
            buffer_cap_bits: s.buffer_cap_bits,
            arrival: s.arrival.as_ref().map(|a| {
                a.events()
                    .iter()
                    .map(|&(time_s, cumulative_bits)| ArrivalEventFile { time_s, cumulative_bits })
                    .collect()
            }),
            energy_weight: s.energy_weight,
            channel: ChannelFile {
                bandwidth_hz: s.channel.bandwidth,
                noise_power_w: s.channel.noise_power,
                gain: s.channel.gain,
            },
        }
    }
}

impl ScenarioFile {
    /// Validates everything at once and reports every violated invariant.
    pub fn into_scenario(self) -> Result<Scenario, Error> {
        let mut problems = Vec::new();
        let tasks: Vec<LearningTaskSpec> = self
            .tasks
            .iter()
            .map(|t| LearningTaskSpec {
                deadline: t.deadline_s,
                bits_per_sample: t.bits_per_sample,
                prior_samples: t.prior_samples,
                amplitude: t.amplitude,
                decay: t.decay,
                error_weight: t.error_weight,
            })
            .collect();
        let channel = ChannelModel {
            bandwidth: self.channel.bandwidth_hz,
            noise_power: self.channel.noise_power_w,
            gain: self.channel.gain,
        };
        let arrival = match self.arrival {
            None => None,
            Some(events) => match ArrivalCurve::new(events.iter().map(|e| (e.time_s, e.cumulative_bits)).collect()) {
                Ok(a) => Some(a),
                Err(e) => {
                    problems.push(format!("arrival: {e}"));
                    None
                }
            },
        };
        let draft = Scenario {
            tasks,
            budget_bits: self.budget_bits,
            buffer_cap_bits: self.buffer_cap_bits,
            arrival,
            energy_weight: self.energy_weight,
            channel,
        };
        problems.extend(draft.problems());
        if !problems.is_empty() {
            return Err(Error::InvalidInput(problems.join("; ")));
        }
        Scenario::new(
            draft.tasks,
            draft.budget_bits,
            draft.buffer_cap_bits,
            draft.arrival,
            draft.energy_weight,
            draft.channel,
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Invalid { path: String, source: Error },
}

pub fn parse_scenario(text: &str) -> Result<Scenario, LoadError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|source| LoadError::Parse {
        path: "<input>".into(),
        source,
    })?;
    file.into_scenario().map_err(|source| LoadError::Invalid {
        path: "<input>".into(),
        source,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, LoadError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: name.clone(),
        source,
    })?;
    parse_scenario(&text).map_err(|e| match e {
        LoadError::Parse { source, .. } => LoadError::Parse { path: name, source },
        LoadError::Invalid { source, .. } => LoadError::Invalid { path: name, source },
        other => other,
    })
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&ScenarioFile::from(scenario)).expect("plain data serializes");
    s.push('\n');
    s
}
