//! Design and run configuration documents.
//!
//! Parsing is strict: unknown keys, wrong types and dangling buffer names are
//! rejected with the JSON path of the offending value. Shape compatibility and
//! dataflow ordering are checked separately by [`validate_design`], which
//! reports diagnostics instead of failing.

mod run;
mod validate;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kernels::{KernelKind, OperatorSpec};
use crate::tensor::TensorShape;
use crate::util::is_identifier;

pub use run::{parse_run_config, BackendKind, ForcedFailure, MockSettings, RunConfig, DEFAULT_TOOL_COMMAND};
pub use validate::{validate_design, Diagnostic, ValidationReport};

pub const DEFAULT_CLOCK_NS: f64 = 10.0;
pub const DEFAULT_PART: &str = "xczu9eg-ffvb1156-2-e";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { path, .. } => Some(path),
            ConfigError::Syntax { .. } => None,
        }
    }
}

/// Element representation of buffers in the generated source.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    #[default]
    Float32,
    /// `(total_bits, int_bits)`, truncating and wrapping like `ap_fixed`.
    Fixed(u32, u32),
    /// Passed through to the source verbatim; disables oracle checking.
    Opaque(String),
}

impl DataType {
    pub fn is_opaque(&self) -> bool {
        matches!(self, DataType::Opaque(_))
    }

    pub fn frac_bits(&self) -> Option<u32> {
        match self {
            DataType::Fixed(t, i) => Some(t - i),
            _ => None,
        }
    }

    /// Spelling of the type in emitted C++.
    pub fn c_type(&self) -> String {
        match self {
            DataType::Float32 => "float".to_string(),
            DataType::Fixed(t, i) => format!("ap_fixed<{t}, {i}>"),
            DataType::Opaque(s) => s.clone(),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            DataType::Fixed(t, i) if !(1 <= *i && i <= t && *t <= 64) => Err(format!(
                "fixed({t}, {i}) requires 1 <= int_bits <= total_bits <= 64"
            )),
            DataType::Opaque(s) if s.trim().is_empty() => Err("opaque type string is empty".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Float32 => f.write_str("float32"),
            DataType::Fixed(t, i) => write!(f, "fixed({t}, {i})"),
            DataType::Opaque(s) => write!(f, "opaque({s})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemSpace {
    OnChip,
    OffChip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
    Inout,
}

/// Tool flow stage. Declaration order is execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Csim,
    Synth,
    Cosim,
    Impl,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Csim, Stage::Synth, Stage::Cosim, Stage::Impl];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Csim => "csim",
            Stage::Synth => "synth",
            Stage::Cosim => "cosim",
            Stage::Impl => "impl",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryDecl {
    pub name: String,
    pub space: MemSpace,
    pub shape: TensorShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<DataType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceDecl {
    pub name: String,
    pub direction: Direction,
    pub shape: TensorShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<DataType>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModuleCall {
    pub params: OperatorSpec,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl ModuleCall {
    pub fn new(params: OperatorSpec, inputs: &[&str], outputs: &[&str]) -> Self {
        ModuleCall {
            params,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn kernel(&self) -> KernelKind {
        self.params.kind()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCall {
    kernel: KernelKind,
    params: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Serialize for ModuleCall {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawCall {
            kernel: self.kernel(),
            params: self.params.to_params(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
        .serialize(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    #[serde(default = "default_clock")]
    pub clock_period_ns: f64,
    #[serde(default)]
    pub top_name: String,
    #[serde(default)]
    pub data_type: DataType,
    #[serde(default = "default_flow")]
    pub flow: Vec<Stage>,
    #[serde(default = "default_part")]
    pub part: String,
}

fn default_clock() -> f64 {
    DEFAULT_CLOCK_NS
}

fn default_flow() -> Vec<Stage> {
    vec![Stage::Csim, Stage::Synth]
}

fn default_part() -> String {
    DEFAULT_PART.to_string()
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            clock_period_ns: DEFAULT_CLOCK_NS,
            top_name: String::new(),
            data_type: DataType::Float32,
            flow: default_flow(),
            part: default_part(),
        }
    }
}

/// One HLS design: buffers, top-level ports, ordered kernel calls, tool settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignConfig {
    pub name: String,
    pub memories: Vec<MemoryDecl>,
    pub interfaces: Vec<InterfaceDecl>,
    pub calls: Vec<ModuleCall>,
    pub synth: SynthSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    name: String,
    #[serde(default)]
    memories: Vec<MemoryDecl>,
    #[serde(default)]
    interfaces: Vec<InterfaceDecl>,
    #[serde(default)]
    calls: Vec<RawCall>,
    #[serde(default)]
    synth: Option<SynthSettings>,
}

/// What a buffer name resolves to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferRole {
    Memory(MemSpace),
    Interface(Direction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferInfo<'a> {
    pub name: &'a str,
    pub role: BufferRole,
    pub shape: &'a TensorShape,
    pub element: &'a DataType,
}

impl DesignConfig {
    /// A design with default synthesis settings and no buffers or calls.
    pub fn empty(name: &str) -> Self {
        DesignConfig {
            name: name.to_string(),
            memories: Vec::new(),
            interfaces: Vec::new(),
            calls: Vec::new(),
            synth: SynthSettings {
                top_name: name.to_string(),
                ..SynthSettings::default()
            },
        }
    }

    pub fn buffer(&self, name: &str) -> Option<BufferInfo<'_>> {
        let dt = &self.synth.data_type;
        if let Some(m) = self.memories.iter().find(|m| m.name == name) {
            return Some(BufferInfo {
                name: &m.name,
                role: BufferRole::Memory(m.space),
                shape: &m.shape,
                element: m.element.as_ref().unwrap_or(dt),
            });
        }
        self.interfaces.iter().find(|i| i.name == name).map(|i| BufferInfo {
            name: &i.name,
            role: BufferRole::Interface(i.direction),
            shape: &i.shape,
            element: i.element.as_ref().unwrap_or(dt),
        })
    }

    /// Interfaces the caller must supply (`in` and `inout`).
    pub fn input_interfaces(&self) -> impl Iterator<Item = &InterfaceDecl> {
        self.interfaces.iter().filter(|i| i.direction != Direction::Out)
    }

    /// Interfaces returned to the caller (`out` and `inout`).
    pub fn output_interfaces(&self) -> impl Iterator<Item = &InterfaceDecl> {
        self.interfaces.iter().filter(|i| i.direction != Direction::In)
    }

    /// Canonical pretty-printed document; parses back to an equal config.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

pub fn serialize_design_config(cfg: &DesignConfig) -> String {
    cfg.to_json_string()
}

pub(crate) fn parse_json(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub(crate) fn decode_at<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::schema(if path == "." { "$".to_string() } else { path }, e.inner().to_string())
    })
}

pub fn parse_design_config(text: &str) -> Result<DesignConfig, ConfigError> {
    design_from_value(parse_json(text)?)
}

pub fn design_from_value(value: Value) -> Result<DesignConfig, ConfigError> {
    let raw: RawDesign = decode_at(value)?;
    if !is_identifier(&raw.name) {
        return Err(ConfigError::schema("name", format!("\"{}\" is not a valid identifier", raw.name)));
    }

    let mut seen = HashSet::new();
    for (i, m) in raw.memories.iter().enumerate() {
        check_decl_name(&m.name, &format!("memories[{i}].name"), &mut seen)?;
        if let Some(dt) = &m.element {
            dt.check().map_err(|e| ConfigError::schema(format!("memories[{i}].element"), e))?;
        }
    }
    for (i, d) in raw.interfaces.iter().enumerate() {
        check_decl_name(&d.name, &format!("interfaces[{i}].name"), &mut seen)?;
        if let Some(dt) = &d.element {
            dt.check().map_err(|e| ConfigError::schema(format!("interfaces[{i}].element"), e))?;
        }
    }

    let mut calls = Vec::with_capacity(raw.calls.len());
    for (i, c) in raw.calls.into_iter().enumerate() {
        for (field, names) in [("inputs", &c.inputs), ("outputs", &c.outputs)] {
            for (j, n) in names.iter().enumerate() {
                if !seen.contains(n.as_str()) {
                    return Err(ConfigError::schema(
                        format!("calls[{i}].{field}[{j}]"),
                        format!("undeclared buffer \"{n}\""),
                    ));
                }
            }
        }
        let params = OperatorSpec::from_params(c.kernel, &c.params).map_err(|e| {
            let path = if e.path.is_empty() {
                format!("calls[{i}].params")
            } else {
                format!("calls[{i}].params.{}", e.path)
            };
            ConfigError::schema(path, e.message)
        })?;
        calls.push(ModuleCall {
            params,
            inputs: c.inputs,
            outputs: c.outputs,
        });
    }

    let mut synth = raw.synth.unwrap_or_default();
    if synth.top_name.is_empty() {
        synth.top_name = raw.name.clone();
    }
    if !is_identifier(&synth.top_name) {
        return Err(ConfigError::schema(
            "synth.top_name",
            format!("\"{}\" is not a valid identifier", synth.top_name),
        ));
    }
    if !(synth.clock_period_ns > 0.0 && synth.clock_period_ns.is_finite()) {
        return Err(ConfigError::schema("synth.clock_period_ns", "clock period must be > 0"));
    }
    if synth.flow.is_empty() {
        return Err(ConfigError::schema("synth.flow", "flow must name at least one stage"));
    }
    synth.flow.sort();
    synth.flow.dedup();
    synth.data_type.check().map_err(|e| ConfigError::schema("synth.data_type", e))?;
    if synth.part.trim().is_empty() {
        return Err(ConfigError::schema("synth.part", "part must be non-empty"));
    }

    Ok(DesignConfig {
        name: raw.name,
        memories: raw.memories,
        interfaces: raw.interfaces,
        calls,
        synth,
    })
}

fn check_decl_name<'a>(name: &'a str, path: &str, seen: &mut HashSet<&'a str>) -> Result<(), ConfigError> {
    if !is_identifier(name) {
        return Err(ConfigError::schema(path, format!("\"{name}\" is not a valid identifier")));
    }
    if !seen.insert(name) {
        return Err(ConfigError::schema(path, format!("duplicate buffer name \"{name}\"")));
    }
    Ok(())
}
