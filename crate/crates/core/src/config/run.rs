use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{decode_at, parse_json, ConfigError, Stage};

pub const DEFAULT_TOOL_COMMAND: &str = "vitis_hls -f {script} -l {log}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Vendor,
}

/// Make the mock backend fail one stage of one design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedFailure {
    pub design: String,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MockSettings {
    /// Simulated duration of every stage.
    #[serde(default)]
    pub stage_ms: u64,
    #[serde(default)]
    pub failures: Vec<ForcedFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<PathBuf>,
    /// Vendor tool invocation with `{script}`, `{workdir}` and `{log}` placeholders.
    #[serde(default = "default_command")]
    pub command: String,
    #[serde(default)]
    pub mock: MockSettings,
}

fn one() -> usize {
    1
}

fn default_timeout() -> u64 {
    3600
}

fn default_out() -> PathBuf {
    PathBuf::from("forgebench_out")
}

fn default_command() -> String {
    DEFAULT_TOOL_COMMAND.to_string()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendKind::Mock,
            workers: 1,
            timeout_s: default_timeout(),
            output_dir: default_out(),
            device: None,
            command: default_command(),
            mock: MockSettings::default(),
        }
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = decode_at(parse_json(text)?)?;
    if cfg.workers < 1 {
        return Err(ConfigError::schema("workers", "workers must be ≥ 1"));
    }
    if cfg.timeout_s < 1 {
        return Err(ConfigError::schema("timeout_s", "timeout_s must be ≥ 1"));
    }
    if cfg.command.split_whitespace().next().is_none() {
        return Err(ConfigError::schema("command", "command template is empty"));
    }
    Ok(cfg)
}
