//! Campaign configuration: one JSON document whose sections mirror the
//! module configs.
//!
//! ```json
//! {
//!   "generator": { "program_count": 20, "backend": "builtin" },
//!   "toolchain": { "exec_timeout_secs": 1 },
//!   "lifters": [ { "name": "oracle", "kind": "builtin_oracle" } ],
//!   "metrics": { "codebleu_weights": { "ngram": 0.25, "weighted_ngram": 0.25, "syntax": 0.25, "dataflow": 0.25 } },
//!   "pipeline": { "opt_levels": ["O0", "O3"] }
//! }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::GenerationConfig;
use crate::lifters::LifterSpec;
use crate::metrics::CodeBleuWeights;
use crate::toolchain::{OptLevel, ToolchainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub codebleu_weights: CodeBleuWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub opt_levels: Vec<OptLevel>,
    /// Worker threads; the available CPU count when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            opt_levels: OptLevel::ALL.to_vec(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub generator: GenerationConfig,
    #[serde(default)]
    pub toolchain: ToolchainConfig,
    #[serde(default)]
    pub lifters: Vec<LifterSpec>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {field}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    /// The self-test profile: four built-in lifters over 20 built-in
    /// programs, with a short execution timeout so the non-terminating
    /// lifter does not dominate the wall clock.
    pub fn selftest() -> Self {
        RunConfig {
            generator: GenerationConfig {
                program_count: 20,
                ..GenerationConfig::default()
            },
            toolchain: ToolchainConfig {
                exec_timeout_secs: 1.0,
                ..ToolchainConfig::default()
            },
            lifters: LifterSpec::builtin_set(),
            // Timeout cells wait on the clock, so overlap them even on one core.
            pipeline: PipelineConfig {
                workers: Some(4),
                ..PipelineConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                path: origin.to_string(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generator.validate().map_err(ConfigError::Invalid)?;
        if self.toolchain.compile_timeout_secs.is_nan() || self.toolchain.compile_timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("toolchain.compile_timeout_secs: must be positive".into()));
        }
        if self.toolchain.exec_timeout_secs.is_nan() || self.toolchain.exec_timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("toolchain.exec_timeout_secs: must be positive".into()));
        }
        let mut names = HashSet::new();
        for lifter in &self.lifters {
            lifter.validate().map_err(ConfigError::Invalid)?;
            if !names.insert(lifter.name.as_str()) {
                return Err(ConfigError::Invalid(format!("lifters: duplicate name {:?}", lifter.name)));
            }
        }
        self.metrics.codebleu_weights.validate().map_err(ConfigError::Invalid)?;
        if self.pipeline.opt_levels.is_empty() {
            return Err(ConfigError::Invalid("pipeline.opt_levels: must not be empty".into()));
        }
        let distinct: HashSet<_> = self.pipeline.opt_levels.iter().collect();
        if distinct.len() != self.pipeline.opt_levels.len() {
            return Err(ConfigError::Invalid("pipeline.opt_levels: duplicate level".into()));
        }
        if self.pipeline.workers == Some(0) {
            return Err(ConfigError::Invalid("pipeline.workers: must be positive".into()));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.pipeline
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = RunConfig::from_json("{}", "inline").unwrap();
        assert_eq!(cfg.generator.program_count, 1024);
        assert_eq!(cfg.pipeline.opt_levels, OptLevel::ALL.to_vec());
        assert!(cfg.lifters.is_empty());
    }

    #[test]
    fn parse_errors_carry_position_and_field() {
        let text = "{\n  \"generator\": {\n    \"token_budget\": \"lots\"\n  }\n}";
        match RunConfig::from_json(text, "cfg.json") {
            Err(ConfigError::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "generator.token_budget");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json(r#"{"pipeline": {"wrokers": 2}}"#, "cfg.json").unwrap_err();
        assert!(err.to_string().contains("wrokers"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"generator": {"token_budget": 0}}"#, "cfg.json").unwrap_err();
        assert!(err.to_string().contains("generator.token_budget"), "{err}");
        let err = RunConfig::from_json(
            r#"{"lifters": [{"name": "a", "kind": "builtin_oracle"}, {"name": "a", "kind": "builtin_sabotage"}]}"#,
            "cfg.json",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn selftest_profile_is_valid() {
        let cfg = RunConfig::selftest();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text, "roundtrip").unwrap(), cfg);
    }
}
