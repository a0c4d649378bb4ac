use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ControlRunConfig, DenoiseRunConfig, QuantileRunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum ResolvedConfig {
    Control(ControlRunConfig),
    Denoise(DenoiseRunConfig),
    Quantile(QuantileRunConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub run: ResolvedConfig,
    pub wall_clock_seconds: f64,
    pub termination: String,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub outputs: Vec<String>,
}

pub fn version_string() -> String {
    match option_env!("SALM_GIT_DESCRIBE") {
        Some(desc) if !desc.is_empty() => format!("v{}-{desc}", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let mut metrics = BTreeMap::new();
        metrics.insert("objective".to_string(), 0.1 + 0.2);
        metrics.insert("tiny".to_string(), 5e-324);
        metrics.insert("v".to_string(), 1.234_567_890_123_456_7e-7);
        let mut flags = BTreeMap::new();
        flags.insert("constraint_active".to_string(), false);
        let m = RunManifest {
            version: version_string(),
            seed: 7,
            run: ResolvedConfig::Control(ControlRunConfig::default()),
            wall_clock_seconds: 1.0 / 3.0,
            termination: "converged".into(),
            metrics,
            flags,
            outputs: vec!["trace.csv".into()],
        };
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }
}
