//! Cartesian configuration sweeps and the three built-in benchmark suites.
//!
//! A sweep names a block family and an ordered list of axes. Expansion walks
//! the grid like an odometer (last axis fastest) and names designs
//! `<family>_<index:05>`. Axes a spec leaves out take the family default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{DesignConfig, Direction, InterfaceDecl, MemSpace, MemoryDecl, ModuleCall};
use crate::config::validate_design;
use crate::kernels::{
    ActKind, ActivationSpec, Assoc, AttnSpec, ConvSpec, DropoutSpec, KernelCatalog, LinearSpec, LoopOrder,
    NormKind, NormSpec, OperatorSpec,
};
use crate::tensor::TensorShape;
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("axis \"{axis}\" value {value}: {reason}")]
    InvalidAxisValue { axis: String, value: String, reason: String },
    #[error("axis \"{0}\" is not defined for this family")]
    UnknownAxis(String),
    #[error("axis \"{0}\" has no values")]
    EmptyAxis(String),
    #[error("axis \"{0}\" appears twice")]
    DuplicateAxis(String),
    #[error("{name}: generated design fails validation: {messages:?}")]
    Invalid { name: String, messages: Vec<String> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sweep spec: {0}")]
    Spec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `x·A·B·y` vector-matrix chain.
    GemmChain,
    /// Convolution, BatchNorm, activation.
    DnnBlock,
    /// Attention, optional dropout, normalization.
    LlmBlock,
}

impl Family {
    pub fn prefix(self) -> &'static str {
        match self {
            Family::GemmChain => "gemm",
            Family::DnnBlock => "dnn",
            Family::LlmBlock => "llm",
        }
    }

    fn axis_names(self) -> &'static [&'static str] {
        match self {
            Family::GemmChain => &["dims", "loop_order", "unroll", "assoc"],
            Family::DnnBlock => &["kernel", "fmap", "grouped", "bias", "activation", "unroll"],
            Family::LlmBlock => &[
                "seq_len",
                "hidden",
                "heads",
                "grouping",
                "dropout_p",
                "with_rope",
                "with_dropout",
                "norm",
            ],
        }
    }

    fn default_value(self, axis: &str) -> Value {
        match (self, axis) {
            (Family::GemmChain, "dims") => json!([8, 8, 8]),
            (Family::GemmChain, "loop_order") => json!("ijk"),
            (Family::GemmChain, "unroll") => json!([1, 1, 1]),
            (Family::GemmChain, "assoc") => json!("((xA)B)y"),
            (Family::DnnBlock, "kernel") => json!(3),
            (Family::DnnBlock, "fmap") => json!([8, 8]),
            (Family::DnnBlock, "grouped") => json!(false),
            (Family::DnnBlock, "bias") => json!(false),
            (Family::DnnBlock, "activation") => json!("relu"),
            (Family::DnnBlock, "unroll") => json!([1, 1]),
            (Family::LlmBlock, "seq_len") => json!(8),
            (Family::LlmBlock, "hidden") => json!(16),
            (Family::LlmBlock, "heads") => json!(2),
            (Family::LlmBlock, "grouping") => json!("mha"),
            (Family::LlmBlock, "dropout_p") => json!(0.1),
            (Family::LlmBlock, "with_rope") => json!(false),
            (Family::LlmBlock, "with_dropout") => json!(false),
            (Family::LlmBlock, "norm") => json!("layernorm"),
            _ => Value::Null,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub suite: String,
    pub family: Family,
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    /// Number of grid points.
    pub fn total(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let known = self.family.axis_names();
        let mut seen = std::collections::BTreeSet::new();
        for axis in &self.axes {
            if !known.contains(&axis.name.as_str()) {
                return Err(SweepError::UnknownAxis(axis.name.clone()));
            }
            if !seen.insert(axis.name.as_str()) {
                return Err(SweepError::DuplicateAxis(axis.name.clone()));
            }
            if axis.values.is_empty() {
                return Err(SweepError::EmptyAxis(axis.name.clone()));
            }
        }
        Ok(())
    }
}

pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, SweepError> {
    let spec: SweepSpec = serde_json::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn axis(name: &str, values: Vec<Value>) -> Axis {
    Axis {
        name: name.to_string(),
        values,
    }
}

fn gemm_suite() -> SweepSpec {
    let dims: [[usize; 3]; 20] = [
        [4, 4, 4],
        [8, 8, 8],
        [16, 16, 16],
        [32, 32, 32],
        [64, 64, 64],
        [128, 128, 128],
        [256, 256, 256],
        [8, 16, 32],
        [32, 16, 8],
        [16, 64, 16],
        [64, 16, 64],
        [4, 32, 4],
        [32, 4, 32],
        [24, 48, 12],
        [12, 48, 24],
        [96, 128, 64],
        [128, 64, 96],
        [64, 128, 32],
        [256, 128, 192],
        [128, 256, 64],
    ];
    SweepSpec {
        suite: "gemm".into(),
        family: Family::GemmChain,
        axes: vec![
            axis("dims", dims.iter().map(|d| json!(d)).collect()),
            axis("loop_order", LoopOrder::all().iter().map(|o| json!(o.to_string())).collect()),
            axis("unroll", vec![json!([1, 1, 1]), json!([1, 1, 2]), json!([1, 1, 4]), json!([2, 2, 2])]),
            axis("assoc", Assoc::ALL.iter().map(|a| json!(a.label())).collect()),
        ],
    }
}

fn dnn_suite() -> SweepSpec {
    SweepSpec {
        suite: "dnn".into(),
        family: Family::DnnBlock,
        axes: vec![
            axis("kernel", vec![json!(1), json!(3), json!(5), json!(7)]),
            axis(
                "fmap",
                [[8, 8], [8, 16], [16, 8], [16, 16], [32, 8], [32, 16]]
                    .iter()
                    .map(|f| json!(f))
                    .collect(),
            ),
            axis("grouped", vec![json!(false), json!(true)]),
            axis("bias", vec![json!(false), json!(true)]),
            axis(
                "activation",
                ["relu", "relu6", "sigmoid", "tanh", "silu", "gelu"].iter().map(|a| json!(a)).collect(),
            ),
            axis("unroll", vec![json!([1, 1]), json!([1, 2]), json!([2, 1]), json!([2, 2])]),
        ],
    }
}

fn llm_suite() -> SweepSpec {
    SweepSpec {
        suite: "llm".into(),
        family: Family::LlmBlock,
        axes: vec![
            axis("seq_len", vec![json!(4), json!(8), json!(16)]),
            axis("hidden", vec![json!(16), json!(32), json!(64)]),
            axis("heads", vec![json!(2), json!(4), json!(8)]),
            axis("grouping", vec![json!("mha"), json!("gqa"), json!("mqa")]),
            axis("dropout_p", vec![json!(0.1), json!(0.25), json!(0.5)]),
            axis("with_rope", vec![json!(false), json!(true)]),
            axis("with_dropout", vec![json!(false), json!(true)]),
            axis("norm", vec![json!("layernorm"), json!("rmsnorm")]),
        ],
    }
}

/// GEMM (1920), DNN (2304) and LLM (1944) suites, in that order.
pub fn builtin_suites() -> Vec<SweepSpec> {
    vec![gemm_suite(), dnn_suite(), llm_suite()]
}

pub fn builtin_suite(name: &str) -> Option<SweepSpec> {
    builtin_suites().into_iter().find(|s| s.suite == name)
}

/// One grid point: axis name to chosen value, with family defaults filled in.
struct Point<'a> {
    family: Family,
    values: BTreeMap<&'a str, &'a Value>,
    defaults: BTreeMap<&'static str, Value>,
}

impl Point<'_> {
    fn get(&self, axis: &str) -> &Value {
        self.values
            .get(axis)
            .copied()
            .or_else(|| self.defaults.get(axis))
            .expect("axis belongs to family")
    }

    fn bad(&self, axis: &str, reason: impl Into<String>) -> SweepError {
        SweepError::InvalidAxisValue {
            axis: axis.to_string(),
            value: self.get(axis).to_string(),
            reason: reason.into(),
        }
    }

    fn typed<T: serde::de::DeserializeOwned>(&self, axis: &str, expect: &str) -> Result<T, SweepError> {
        serde_json::from_value(self.get(axis).clone()).map_err(|_| self.bad(axis, format!("expected {expect}")))
    }

    fn positive(&self, axis: &str) -> Result<usize, SweepError> {
        match self.typed::<usize>(axis, "a positive integer")? {
            0 => Err(self.bad(axis, "expected a positive integer")),
            v => Ok(v),
        }
    }

    fn positive_list<const N: usize>(&self, axis: &str) -> Result<[usize; N], SweepError> {
        let what = format!("{N} positive integers");
        let v: Vec<usize> = self.typed(axis, &what)?;
        match <[usize; N]>::try_from(v) {
            Ok(a) if !a.contains(&0) => Ok(a),
            _ => Err(self.bad(axis, what)),
        }
    }
}

fn shape(dims: &[usize]) -> TensorShape {
    TensorShape::new(dims.to_vec()).expect("positive dims")
}

fn port(cfg: &mut DesignConfig, name: &str, direction: Direction, dims: &[usize]) {
    cfg.interfaces.push(InterfaceDecl {
        name: name.to_string(),
        direction,
        shape: shape(dims),
        element: None,
    });
}

fn scratch(cfg: &mut DesignConfig, name: &str, dims: &[usize]) {
    cfg.memories.push(MemoryDecl {
        name: name.to_string(),
        space: MemSpace::OnChip,
        shape: shape(dims),
        element: None,
    });
}

/// Input ports named after the spec's operand roles, with an optional prefix.
fn operand_ports(cfg: &mut DesignConfig, spec: &OperatorSpec, prefix: &str, skip: usize) -> Vec<String> {
    let sig = spec.signature().expect("spec checked by caller");
    let mut names = Vec::new();
    for (role, s) in sig.inputs.iter().skip(skip) {
        let name = format!("{prefix}{role}");
        port(cfg, &name, Direction::In, s.dims());
        names.push(name);
    }
    names
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn build_gemm(p: &Point, name: &str) -> Result<DesignConfig, SweepError> {
    let [m, k, n] = p.positive_list::<3>("dims")?;
    let order: String = p.typed("loop_order", "a loop order string")?;
    let loop_order: LoopOrder = order.parse().map_err(|e: String| p.bad("loop_order", e))?;
    let unroll = p.positive_list::<3>("unroll")?;
    let assoc: Assoc = p.typed("assoc", "one of the four chain parenthesizations")?;
    let mut s = LinearSpec::chain(m, k, n, assoc);
    s.loop_order = loop_order;
    s.unroll = unroll;
    let spec = OperatorSpec::Linear(s);
    let mut cfg = DesignConfig::empty(name);
    let inputs = operand_ports(&mut cfg, &spec, "", 0);
    port(&mut cfg, "out", Direction::Out, &[1]);
    let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    cfg.calls.push(ModuleCall::new(spec, &refs, &["out"]));
    Ok(cfg)
}

/// Group count used by the grouped DNN variant.
pub const DNN_GROUPS: usize = 4;

fn build_dnn(p: &Point, name: &str) -> Result<DesignConfig, SweepError> {
    let kernel = p.positive("kernel")?;
    if kernel % 2 == 0 {
        return Err(p.bad("kernel", "same-padded blocks need an odd kernel size"));
    }
    let [ch, hw] = p.positive_list::<2>("fmap")?;
    let grouped: bool = p.typed("grouped", "a boolean")?;
    let bias: bool = p.typed("bias", "a boolean")?;
    let act: ActKind = p.typed("activation", "an activation name")?;
    let [ui, uo] = p.positive_list::<2>("unroll")?;
    let groups = if grouped { DNN_GROUPS } else { 1 };
    if ch % groups != 0 {
        return Err(p.bad("grouped", format!("{groups} groups do not divide fmap channels {ch}")));
    }
    if hw < kernel {
        return Err(p.bad("kernel", format!("kernel {kernel} exceeds fmap size {hw}")));
    }
    let mut conv = ConvSpec::new(ch, ch, hw, hw, kernel);
    conv.padding = kernel / 2;
    conv.groups = groups;
    conv.bias = bias;
    conv.unroll_in = ui;
    conv.unroll_out = uo;
    let fmap = [ch, hw, hw];
    let conv = OperatorSpec::Conv(conv);
    let bn = OperatorSpec::Norm(NormSpec {
        kind: NormKind::Batchnorm,
        shape: shape(&fmap),
        epsilon: 1e-5,
        affine: true,
    });
    let act = OperatorSpec::Activation(ActivationSpec {
        kind: act,
        shape: shape(&fmap),
    });

    let mut cfg = DesignConfig::empty(name);
    port(&mut cfg, "x", Direction::In, &fmap);
    let mut conv_in = vec!["x".to_string()];
    conv_in.extend(operand_ports(&mut cfg, &conv, "conv_", 1));
    let bn_in: Vec<String> = std::iter::once("conv_out".to_string())
        .chain(operand_ports(&mut cfg, &bn, "bn_", 1))
        .collect();
    port(&mut cfg, "y", Direction::Out, &fmap);
    scratch(&mut cfg, "conv_out", &fmap);
    scratch(&mut cfg, "bn_out", &fmap);
    cfg.calls.push(ModuleCall::new(conv, &strs(&conv_in), &["conv_out"]));
    cfg.calls.push(ModuleCall::new(bn, &strs(&bn_in), &["bn_out"]));
    cfg.calls.push(ModuleCall::new(act, &["bn_out"], &["y"]));
    Ok(cfg)
}

fn build_llm(p: &Point, name: &str) -> Result<DesignConfig, SweepError> {
    let seq = p.positive("seq_len")?;
    let hidden = p.positive("hidden")?;
    let heads = p.positive("heads")?;
    let grouping: String = p.typed("grouping", "mha, gqa or mqa")?;
    let dropout_p: f64 = p.typed("dropout_p", "a probability")?;
    let with_rope: bool = p.typed("with_rope", "a boolean")?;
    let with_dropout: bool = p.typed("with_dropout", "a boolean")?;
    let norm = match p.typed::<String>("norm", "layernorm or rmsnorm")?.as_str() {
        "layernorm" => NormKind::Layernorm,
        "rmsnorm" => NormKind::Rmsnorm,
        _ => return Err(p.bad("norm", "expected layernorm or rmsnorm")),
    };
    if hidden % heads != 0 {
        return Err(p.bad("heads", format!("heads={heads} does not divide hidden={hidden}")));
    }
    let kv_groups = match grouping.as_str() {
        "mha" => heads,
        "gqa" if heads % 2 == 0 => heads / 2,
        "gqa" => return Err(p.bad("grouping", format!("grouped-query attention needs an even head count, got {heads}"))),
        "mqa" => 1,
        _ => return Err(p.bad("grouping", "expected mha, gqa or mqa")),
    };
    if with_rope && (hidden / heads) % 2 != 0 {
        return Err(p.bad("with_rope", format!("head_dim {} is odd", hidden / heads)));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(p.bad("dropout_p", "expected a probability in [0, 1)"));
    }
    let mut attn = AttnSpec::new(seq, hidden, heads, kv_groups);
    attn.with_rope = with_rope;
    let attn = OperatorSpec::Attention(attn);
    let tok = [seq, hidden];

    let mut cfg = DesignConfig::empty(name);
    let attn_in = operand_ports(&mut cfg, &attn, "", 0);
    let refs: Vec<&str> = attn_in.iter().map(String::as_str).collect();
    scratch(&mut cfg, "attn_out", &tok);
    cfg.calls.push(ModuleCall::new(attn, &refs, &["attn_out"]));
    let mut cur = "attn_out";
    if with_dropout {
        scratch(&mut cfg, "drop_out", &tok);
        let drop = OperatorSpec::Dropout(DropoutSpec {
            shape: shape(&tok),
            p: dropout_p,
            seed: 0,
        });
        cfg.calls.push(ModuleCall::new(drop, &[cur], &["drop_out"]));
        cur = "drop_out";
    }
    let norm = OperatorSpec::Norm(NormSpec {
        kind: norm,
        shape: shape(&tok),
        epsilon: 1e-5,
        affine: true,
    });
    let mut norm_in = vec![cur.to_string()];
    norm_in.extend(operand_ports(&mut cfg, &norm, "norm_", 1));
    port(&mut cfg, "y", Direction::Out, &tok);
    let refs: Vec<&str> = norm_in.iter().map(String::as_str).collect();
    cfg.calls.push(ModuleCall::new(norm, &refs, &["y"]));
    Ok(cfg)
}

/// Build one design from an axis assignment (missing axes use defaults).
pub fn build_point(family: Family, name: &str, values: &BTreeMap<&str, &Value>) -> Result<DesignConfig, SweepError> {
    let point = Point {
        family,
        values: values.clone(),
        defaults: family
            .axis_names()
            .iter()
            .map(|a| (*a, family.default_value(a)))
            .collect(),
    };
    match point.family {
        Family::GemmChain => build_gemm(&point, name),
        Family::DnnBlock => build_dnn(&point, name),
        Family::LlmBlock => build_llm(&point, name),
    }
}

/// Every grid point as a validated design, in odometer order.
pub fn expand_grid(spec: &SweepSpec) -> Result<Vec<DesignConfig>, SweepError> {
    spec.validate()?;
    let catalog = KernelCatalog::standard();
    let total = spec.total();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; spec.axes.len()];
    for n in 0..total {
        let values: BTreeMap<&str, &Value> = spec
            .axes
            .iter()
            .zip(&idx)
            .map(|(a, &i)| (a.name.as_str(), &a.values[i]))
            .collect();
        let name = format!("{}_{n:05}", spec.family.prefix());
        let cfg = build_point(spec.family, &name, &values)?;
        let report = validate_design(&cfg, &catalog);
        if !report.is_empty() {
            return Err(SweepError::Invalid {
                name,
                messages: report.messages(),
            });
        }
        out.push(cfg);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < spec.axes[d].values.len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub suite: String,
    pub count: usize,
    pub files: Vec<ManifestEntry>,
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<(), SweepError> {
    if fs::read(path).ok().as_deref() == Some(bytes) {
        return Ok(());
    }
    fs::write(path, bytes).map_err(|source| SweepError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write `<dir>/<name>.json` per design, then `<dir>/manifest.json`.
pub fn write_suite(suite: &str, configs: &[DesignConfig], dir: &Path) -> Result<Manifest, SweepError> {
    fs::create_dir_all(dir).map_err(|source| SweepError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files = Vec::with_capacity(configs.len());
    for cfg in configs {
        let text = cfg.to_json_string();
        let file = format!("{}.json", cfg.name);
        write_if_changed(&dir.join(&file), text.as_bytes())?;
        files.push(ManifestEntry {
            file,
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = Manifest {
        suite: suite.to_string(),
        count: files.len(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_if_changed(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_totals() {
        let totals: Vec<usize> = builtin_suites().iter().map(|s| s.total()).collect();
        assert_eq!(totals, vec![1920, 2304, 1944]);
    }

    #[test]
    fn small_grid_is_a_product_in_odometer_order() {
        let spec = SweepSpec {
            suite: "t".into(),
            family: Family::GemmChain,
            axes: vec![
                axis("dims", vec![json!([2, 3, 4]), json!([4, 4, 4]), json!([1, 2, 1])]),
                axis("loop_order", ["ijk", "kij", "jik", "kji"].iter().map(|o| json!(o)).collect()),
            ],
        };
        let cfgs = expand_grid(&spec).unwrap();
        assert_eq!(cfgs.len(), 12);
        assert_eq!(cfgs[0].name, "gemm_00000");
        assert_eq!(cfgs[11].name, "gemm_00011");
        let OperatorSpec::Linear(s) = &cfgs[1].calls[0].params else { panic!() };
        assert_eq!((s.m, s.loop_order.to_string()), (2, "kij".to_string()));
        let OperatorSpec::Linear(s) = &cfgs[4].calls[0].params else { panic!() };
        assert_eq!((s.m, s.loop_order.to_string()), (4, "ijk".to_string()));
    }

    #[test]
    fn heads_not_dividing_hidden_is_named() {
        let spec = SweepSpec {
            suite: "t".into(),
            family: Family::LlmBlock,
            axes: vec![axis("hidden", vec![json!(16)]), axis("heads", vec![json!(3)])],
        };
        let err = expand_grid(&spec).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, SweepError::InvalidAxisValue { .. }));
        assert!(msg.contains("heads=3") && msg.contains("hidden=16"), "{msg}");
    }

    #[test]
    fn malformed_axes() {
        let mut spec = gemm_suite();
        spec.axes.push(axis("dims", vec![json!([1, 1, 1])]));
        assert!(matches!(expand_grid(&spec), Err(SweepError::DuplicateAxis(_))));
        spec.axes = vec![axis("heads", vec![json!(1)])];
        assert!(matches!(expand_grid(&spec), Err(SweepError::UnknownAxis(_))));
        spec.axes = vec![axis("dims", vec![])];
        assert!(matches!(expand_grid(&spec), Err(SweepError::EmptyAxis(_))));
        spec.axes = vec![axis("dims", vec![json!("big")])];
        assert!(matches!(expand_grid(&spec), Err(SweepError::InvalidAxisValue { .. })));
    }

    #[test]
    fn suite_write_is_idempotent() {
        let spec = SweepSpec {
            suite: "mini".into(),
            family: Family::DnnBlock,
            axes: vec![axis("activation", vec![json!("relu"), json!("gelu")])],
        };
        let cfgs = expand_grid(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m1 = write_suite("mini", &cfgs, dir.path()).unwrap();
        let before = fs::read(dir.path().join("dnn_00001.json")).unwrap();
        let m2 = write_suite("mini", &cfgs, dir.path()).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.count, 2);
        assert_eq!(before, fs::read(dir.path().join("dnn_00001.json")).unwrap());
    }
}
