//! The single configuration bundle used by every command.

use serde::{Deserialize, Serialize};

use crate::gate::{default_questionnaire, GateThresholds, ImpactThresholds, Questionnaire};
use crate::graph::DEFAULT_RANGE_CAP;
use crate::inspection::RuleConfig;
use crate::scoping::EffortCoefficients;
use crate::setup::SetupSeverities;

pub const CONFIG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigBundle {
    pub format: u32,
    pub questionnaire: Questionnaire,
    pub impact_thresholds: ImpactThresholds,
    pub gates: GateThresholds,
    pub effort: EffortCoefficients,
    pub setup_severities: SetupSeverities,
    pub rules: RuleConfig,
    /// Ranges with more cells than this stay a single graph node.
    pub range_cap: u64,
}

impl Default for ConfigBundle {
    fn default() -> Self {
        ConfigBundle {
            format: CONFIG_FORMAT,
            questionnaire: default_questionnaire(),
            impact_thresholds: ImpactThresholds::default(),
            gates: GateThresholds::default(),
            effort: EffortCoefficients::default(),
            setup_severities: SetupSeverities::default(),
            rules: RuleConfig::default(),
            range_cap: DEFAULT_RANGE_CAP,
        }
    }
}

/// A document that failed to load, with the JSON path of the fault.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct DocumentError {
    pub path: String,
    pub message: String,
}

impl DocumentError {
    fn at(path: &str, message: impl ToString) -> Self {
        DocumentError { path: path.to_string(), message: message.to_string() }
    }
}

/// Deserialize any JSON document, reporting the path of the first fault.
pub fn parse_document<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, DocumentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        DocumentError { path, message: e.into_inner().to_string() }
    })?;
    Ok(value)
}

impl ConfigBundle {
    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let c: ConfigBundle = parse_document(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DocumentError> {
        if self.format != CONFIG_FORMAT {
            return Err(DocumentError::at("format", format!("unsupported format {}", self.format)));
        }
        self.questionnaire.validate().map_err(|e| DocumentError::at("questionnaire", e))?;
        self.impact_thresholds.validate().map_err(|e| DocumentError::at("impact_thresholds", e))?;
        self.gates.validate().map_err(|e| DocumentError::at("gates", e))?;
        self.effort.validate().map_err(|e| DocumentError::at("effort", e))?;
        self.rules.validate().map_err(|e| DocumentError::at("rules", e))?;
        if self.range_cap < 1 {
            return Err(DocumentError::at("range_cap", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_is_complete() {
        let c = ConfigBundle::default();
        let text = c.to_json();
        assert_eq!(ConfigBundle::from_json(&text).unwrap(), c);
        for key in [
            "\"questionnaire\"",
            "\"value_per_minute\": 50.0",
            "\"risk_score\": 0.25",
            "\"copy\": 0.25",
            "\"constant_allowlist\"",
            "\"range_cap\": 4096",
            "\"manual_recalc\"",
        ] {
            assert!(text.contains(key), "{key} missing");
        }
    }

    #[test]
    fn partial_and_bad_documents() {
        let c = ConfigBundle::from_json(r#"{"gates": {"risk_score": 0.5}}"#).unwrap();
        assert_eq!(c.gates.risk_score, 0.5);
        assert_eq!(c.gates.value_per_minute, 50.0);
        let e = ConfigBundle::from_json(r#"{"gates": {"risk": 0.5}}"#).unwrap_err();
        assert_eq!(e.path, "gates.risk");
        let e = ConfigBundle::from_json(r#"{"rules": {"enabled": ["NOPE"]}}"#).unwrap_err();
        assert!(e.path.starts_with("rules.enabled"), "{e}");
        let e = ConfigBundle::from_json(r#"{"effort": {"copy": 0}}"#).unwrap_err();
        assert_eq!(e.path, "effort");
    }
}
