//! Operator parameter records and their operand signatures.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::tensor::TensorShape;
use crate::util::sha256_hex;

/// Kernel-kind tag as it appears in the `"kernel"` field of a call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gemm,
    Matvec,
    Dot,
    Chain,
    Conv,
    Batchnorm,
    Layernorm,
    Rmsnorm,
    Activation,
    Attention,
    Rope,
    Dropout,
    Pool,
    Add,
    Mul,
    Load,
    Store,
}

impl KernelKind {
    pub const ALL: [KernelKind; 17] = [
        KernelKind::Gemm,
        KernelKind::Matvec,
        KernelKind::Dot,
        KernelKind::Chain,
        KernelKind::Conv,
        KernelKind::Batchnorm,
        KernelKind::Layernorm,
        KernelKind::Rmsnorm,
        KernelKind::Activation,
        KernelKind::Attention,
        KernelKind::Rope,
        KernelKind::Dropout,
        KernelKind::Pool,
        KernelKind::Add,
        KernelKind::Mul,
        KernelKind::Load,
        KernelKind::Store,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelKind::Gemm => "gemm",
            KernelKind::Matvec => "matvec",
            KernelKind::Dot => "dot",
            KernelKind::Chain => "chain",
            KernelKind::Conv => "conv",
            KernelKind::Batchnorm => "batchnorm",
            KernelKind::Layernorm => "layernorm",
            KernelKind::Rmsnorm => "rmsnorm",
            KernelKind::Activation => "activation",
            KernelKind::Attention => "attention",
            KernelKind::Rope => "rope",
            KernelKind::Dropout => "dropout",
            KernelKind::Pool => "pool",
            KernelKind::Add => "add",
            KernelKind::Mul => "mul",
            KernelKind::Load => "load",
            KernelKind::Store => "store",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinearVariant {
    Dot,
    Matvec,
    Gemm,
    Chain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoopAxis {
    I,
    J,
    K,
}

impl LoopAxis {
    pub fn var(self) -> &'static str {
        match self {
            LoopAxis::I => "i",
            LoopAxis::J => "j",
            LoopAxis::K => "k",
        }
    }

    pub fn index(self) -> usize {
        match self {
            LoopAxis::I => 0,
            LoopAxis::J => 1,
            LoopAxis::K => 2,
        }
    }
}

/// A permutation of the `i-j-k` loop nest, outermost first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LoopOrder(pub [LoopAxis; 3]);

impl LoopOrder {
    pub const IJK: LoopOrder = LoopOrder([LoopAxis::I, LoopAxis::J, LoopAxis::K]);

    pub fn all() -> [LoopOrder; 6] {
        ["ijk", "ikj", "jik", "jki", "kij", "kji"].map(|s| s.parse().unwrap())
    }
}

impl Default for LoopOrder {
    fn default() -> Self {
        LoopOrder::IJK
    }
}

impl FromStr for LoopOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let axes: Vec<LoopAxis> = s
            .chars()
            .map(|c| match c {
                'i' => Ok(LoopAxis::I),
                'j' => Ok(LoopAxis::J),
                'k' => Ok(LoopAxis::K),
                _ => Err(format!("invalid loop axis '{c}' in \"{s}\"")),
            })
            .collect::<Result<_, _>>()?;
        let mut sorted = axes.clone();
        sorted.sort();
        if sorted != [LoopAxis::I, LoopAxis::J, LoopAxis::K] {
            return Err(format!("loop order \"{s}\" is not a permutation of ijk"));
        }
        Ok(LoopOrder([axes[0], axes[1], axes[2]]))
    }
}

impl TryFrom<String> for LoopOrder {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LoopOrder> for String {
    fn from(o: LoopOrder) -> String {
        o.to_string()
    }
}

impl fmt::Display for LoopOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            f.write_str(a.var())?;
        }
        Ok(())
    }
}

/// Parenthesization of the `x·A·B·y` chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Assoc {
    #[default]
    #[serde(rename = "((xA)B)y")]
    LeftToRight,
    #[serde(rename = "(xA)(By)")]
    Split,
    #[serde(rename = "x((AB)y)")]
    MatrixFirst,
    #[serde(rename = "x(A(By))")]
    RightToLeft,
}

impl Assoc {
    pub const ALL: [Assoc; 4] = [
        Assoc::LeftToRight,
        Assoc::Split,
        Assoc::MatrixFirst,
        Assoc::RightToLeft,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Assoc::LeftToRight => "((xA)B)y",
            Assoc::Split => "(xA)(By)",
            Assoc::MatrixFirst => "x((AB)y)",
            Assoc::RightToLeft => "x(A(By))",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub variant: LinearVariant,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub bias: bool,
    pub loop_order: LoopOrder,
    /// Unroll factors for the `i`, `j`, `k` loops.
    pub unroll: [usize; 3],
    pub inline_mul: bool,
    pub assoc_order: Assoc,
    /// GEMM only: the output tile is seeded from an extra input instead of zero.
    pub accumulate: bool,
}

impl LinearSpec {
    pub fn gemm(m: usize, k: usize, n: usize) -> Self {
        LinearSpec {
            variant: LinearVariant::Gemm,
            m,
            k,
            n,
            bias: false,
            loop_order: LoopOrder::IJK,
            unroll: [1, 1, 1],
            inline_mul: false,
            assoc_order: Assoc::LeftToRight,
            accumulate: false,
        }
    }

    pub fn matvec(m: usize, k: usize) -> Self {
        LinearSpec {
            variant: LinearVariant::Matvec,
            n: 1,
            ..Self::gemm(m, k, 1)
        }
    }

    pub fn dot(k: usize) -> Self {
        LinearSpec {
            variant: LinearVariant::Dot,
            ..Self::gemm(1, k, 1)
        }
    }

    pub fn chain(m: usize, k: usize, n: usize, assoc: Assoc) -> Self {
        LinearSpec {
            variant: LinearVariant::Chain,
            assoc_order: assoc,
            ..Self::gemm(m, k, n)
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self.variant {
            LinearVariant::Dot => KernelKind::Dot,
            LinearVariant::Matvec => KernelKind::Matvec,
            LinearVariant::Gemm => KernelKind::Gemm,
            LinearVariant::Chain => KernelKind::Chain,
        }
    }

    fn bias_len(&self) -> usize {
        match self.variant {
            LinearVariant::Gemm => self.n,
            LinearVariant::Matvec => self.m,
            LinearVariant::Dot | LinearVariant::Chain => 1,
        }
    }
}

fn one() -> usize {
    1
}

fn default_eps() -> f64 {
    1e-5
}

fn yes() -> bool {
    true
}

fn default_rope_base() -> f64 {
    10000.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub groups: usize,
    #[serde(default)]
    pub bias: bool,
    #[serde(default = "one")]
    pub unroll_in: usize,
    #[serde(default = "one")]
    pub unroll_out: usize,
    /// Output seeded from an extra input (partial sums across channel tiles).
    #[serde(default, skip_serializing_if = "is_false")]
    pub accumulate: bool,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, h: usize, w: usize, kernel: usize) -> Self {
        ConvSpec {
            in_ch,
            out_ch,
            h,
            w,
            kernel,
            stride: 1,
            padding: 0,
            groups: 1,
            bias: false,
            unroll_in: 1,
            unroll_out: 1,
            accumulate: false,
        }
    }

    /// Output spatial dims, or `None` when no window fits.
    pub fn out_hw(&self) -> Option<(usize, usize)> {
        let ph = self.h + 2 * self.padding;
        let pw = self.w + 2 * self.padding;
        if self.stride == 0 || ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Batchnorm,
    Layernorm,
    Rmsnorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormSpec {
    pub kind: NormKind,
    pub shape: TensorShape,
    pub epsilon: f64,
    pub affine: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormParams {
    shape: TensorShape,
    #[serde(default = "default_eps")]
    epsilon: f64,
    #[serde(default = "yes")]
    affine: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActKind {
    Relu,
    Relu6,
    Sigmoid,
    Tanh,
    Elu,
    Silu,
    Gelu,
    HardSigmoid,
    HardSwish,
    Softmax,
    Exp,
}

impl ActKind {
    pub const ALL: [ActKind; 11] = [
        ActKind::Relu,
        ActKind::Relu6,
        ActKind::Sigmoid,
        ActKind::Tanh,
        ActKind::Elu,
        ActKind::Silu,
        ActKind::Gelu,
        ActKind::HardSigmoid,
        ActKind::HardSwish,
        ActKind::Softmax,
        ActKind::Exp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActKind::Relu => "relu",
            ActKind::Relu6 => "relu6",
            ActKind::Sigmoid => "sigmoid",
            ActKind::Tanh => "tanh",
            ActKind::Elu => "elu",
            ActKind::Silu => "silu",
            ActKind::Gelu => "gelu",
            ActKind::HardSigmoid => "hard_sigmoid",
            ActKind::HardSwish => "hard_swish",
            ActKind::Softmax => "softmax",
            ActKind::Exp => "exp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSpec {
    pub kind: ActKind,
    pub shape: TensorShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttnSpec {
    pub seq_len: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Number of key/value heads; each serves `heads / kv_groups` query heads.
    pub kv_groups: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub with_rope: bool,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
}

impl AttnSpec {
    pub fn new(seq_len: usize, hidden: usize, heads: usize, kv_groups: usize) -> Self {
        AttnSpec {
            seq_len,
            hidden,
            heads,
            kv_groups,
            window: None,
            with_rope: false,
            rope_base: default_rope_base(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn kv_dim(&self) -> usize {
        self.kv_groups * self.head_dim()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttnParams {
    seq_len: usize,
    hidden: usize,
    heads: usize,
    #[serde(default)]
    kv_groups: Option<usize>,
    #[serde(default)]
    window: Option<usize>,
    #[serde(default)]
    with_rope: bool,
    #[serde(default = "default_rope_base")]
    rope_base: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeSpec {
    pub seq_len: usize,
    pub dim: usize,
    pub head_dim: usize,
    #[serde(default = "default_rope_base")]
    pub base: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub shape: TensorShape,
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn out_hw(&self) -> Option<(usize, usize)> {
        if self.stride == 0 || self.h < self.kernel || self.w < self.kernel {
            return None;
        }
        Some((
            (self.h - self.kernel) / self.stride + 1,
            (self.w - self.kernel) / self.stride + 1,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementwiseOp {
    Add,
    Mul,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementwiseSpec {
    pub op: ElementwiseOp,
    pub shape: TensorShape,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeParams {
    shape: TensorShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveDirection {
    Load,
    Store,
}

/// Region copy between a large array and a tile.
///
/// `load` extracts `shape` at `offset` from an `outer`-shaped source; `store`
/// writes a `shape` tile into an `outer`-shaped destination at `offset`,
/// leaving the rest of the destination untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveSpec {
    pub direction: MoveDirection,
    pub outer: TensorShape,
    pub offset: Vec<usize>,
    pub shape: TensorShape,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadParams {
    src_shape: TensorShape,
    offset: Vec<usize>,
    shape: TensorShape,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreParams {
    dst_shape: TensorShape,
    offset: Vec<usize>,
    shape: TensorShape,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    #[serde(default)]
    m: Option<usize>,
    k: usize,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    bias: bool,
    #[serde(default)]
    loop_order: LoopOrder,
    #[serde(default = "unit_unroll")]
    unroll: [usize; 3],
    #[serde(default)]
    inline_mul: bool,
    #[serde(default)]
    assoc_order: Option<Assoc>,
    #[serde(default)]
    accumulate: bool,
}

fn unit_unroll() -> [usize; 3] {
    [1, 1, 1]
}

/// Tagged parameter record for one kernel instance.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    Linear(LinearSpec),
    Conv(ConvSpec),
    Norm(NormSpec),
    Activation(ActivationSpec),
    Attention(AttnSpec),
    Rope(RopeSpec),
    Dropout(DropoutSpec),
    Pool(PoolSpec),
    Elementwise(ElementwiseSpec),
    Move(MoveSpec),
}

/// A decoding failure inside a params object: (relative path, message).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub path: String,
    pub message: String,
}

impl ParamError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        ParamError {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

fn decode<T: DeserializeOwned>(params: &Value) -> Result<T, ParamError> {
    serde_path_to_error::deserialize(params).map_err(|e| {
        let path = e.path().to_string();
        ParamError {
            path: if path == "." { String::new() } else { path },
            message: e.inner().to_string(),
        }
    })
}

/// Operand roles and shapes a kernel instance expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    pub inputs: Vec<(&'static str, TensorShape)>,
    pub outputs: Vec<(&'static str, TensorShape)>,
}

fn shp(dims: &[usize]) -> Result<TensorShape, String> {
    TensorShape::new(dims.to_vec()).map_err(|e| e.to_string())
}

impl OperatorSpec {
    pub fn kind(&self) -> KernelKind {
        match self {
            OperatorSpec::Linear(s) => s.kind(),
            OperatorSpec::Conv(_) => KernelKind::Conv,
            OperatorSpec::Norm(s) => match s.kind {
                NormKind::Batchnorm => KernelKind::Batchnorm,
                NormKind::Layernorm => KernelKind::Layernorm,
                NormKind::Rmsnorm => KernelKind::Rmsnorm,
            },
            OperatorSpec::Activation(_) => KernelKind::Activation,
            OperatorSpec::Attention(_) => KernelKind::Attention,
            OperatorSpec::Rope(_) => KernelKind::Rope,
            OperatorSpec::Dropout(_) => KernelKind::Dropout,
            OperatorSpec::Pool(_) => KernelKind::Pool,
            OperatorSpec::Elementwise(s) => match s.op {
                ElementwiseOp::Add => KernelKind::Add,
                ElementwiseOp::Mul => KernelKind::Mul,
            },
            OperatorSpec::Move(s) => match s.direction {
                MoveDirection::Load => KernelKind::Load,
                MoveDirection::Store => KernelKind::Store,
            },
        }
    }

    /// Decode the `params` object of a call with the given kernel tag.
    pub fn from_params(kind: KernelKind, params: &Value) -> Result<Self, ParamError> {
        Ok(match kind {
            KernelKind::Gemm | KernelKind::Matvec | KernelKind::Dot | KernelKind::Chain => {
                OperatorSpec::Linear(linear_from_params(kind, decode(params)?)?)
            }
            KernelKind::Conv => OperatorSpec::Conv(decode(params)?),
            KernelKind::Batchnorm | KernelKind::Layernorm | KernelKind::Rmsnorm => {
                let p: NormParams = decode(params)?;
                let kind = match kind {
                    KernelKind::Batchnorm => NormKind::Batchnorm,
                    KernelKind::Layernorm => NormKind::Layernorm,
                    _ => NormKind::Rmsnorm,
                };
                OperatorSpec::Norm(NormSpec {
                    kind,
                    shape: p.shape,
                    epsilon: p.epsilon,
                    affine: p.affine,
                })
            }
            KernelKind::Activation => OperatorSpec::Activation(decode(params)?),
            KernelKind::Attention => {
                let p: AttnParams = decode(params)?;
                OperatorSpec::Attention(AttnSpec {
                    seq_len: p.seq_len,
                    hidden: p.hidden,
                    heads: p.heads,
                    kv_groups: p.kv_groups.unwrap_or(p.heads),
                    window: p.window,
                    with_rope: p.with_rope,
                    rope_base: p.rope_base,
                })
            }
            KernelKind::Rope => OperatorSpec::Rope(decode(params)?),
            KernelKind::Dropout => OperatorSpec::Dropout(decode(params)?),
            KernelKind::Pool => OperatorSpec::Pool(decode(params)?),
            KernelKind::Add | KernelKind::Mul => {
                let p: ShapeParams = decode(params)?;
                let op = if kind == KernelKind::Add {
                    ElementwiseOp::Add
                } else {
                    ElementwiseOp::Mul
                };
                OperatorSpec::Elementwise(ElementwiseSpec { op, shape: p.shape })
            }
            KernelKind::Load => {
                let p: LoadParams = decode(params)?;
                OperatorSpec::Move(MoveSpec {
                    direction: MoveDirection::Load,
                    outer: p.src_shape,
                    offset: p.offset,
                    shape: p.shape,
                })
            }
            KernelKind::Store => {
                let p: StoreParams = decode(params)?;
                OperatorSpec::Move(MoveSpec {
                    direction: MoveDirection::Store,
                    outer: p.dst_shape,
                    offset: p.offset,
                    shape: p.shape,
                })
            }
        })
    }

    /// Canonical `params` object; decoding it yields an equal spec.
    pub fn to_params(&self) -> Value {
        match self {
            OperatorSpec::Linear(s) => {
                let mut m = Map::new();
                match s.variant {
                    LinearVariant::Dot => {
                        m.insert("k".into(), json!(s.k));
                    }
                    LinearVariant::Matvec => {
                        m.insert("m".into(), json!(s.m));
                        m.insert("k".into(), json!(s.k));
                    }
                    LinearVariant::Gemm | LinearVariant::Chain => {
                        m.insert("m".into(), json!(s.m));
                        m.insert("k".into(), json!(s.k));
                        m.insert("n".into(), json!(s.n));
                    }
                }
                m.insert("bias".into(), json!(s.bias));
                m.insert("loop_order".into(), json!(s.loop_order.to_string()));
                m.insert("unroll".into(), json!(s.unroll));
                m.insert("inline_mul".into(), json!(s.inline_mul));
                if s.variant == LinearVariant::Chain {
                    m.insert("assoc_order".into(), json!(s.assoc_order.label()));
                }
                if s.accumulate {
                    m.insert("accumulate".into(), json!(true));
                }
                Value::Object(m)
            }
            OperatorSpec::Conv(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Norm(s) => serde_json::to_value(NormParams {
                shape: s.shape.clone(),
                epsilon: s.epsilon,
                affine: s.affine,
            })
            .unwrap(),
            OperatorSpec::Activation(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Attention(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Rope(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Dropout(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Pool(s) => serde_json::to_value(s).unwrap(),
            OperatorSpec::Elementwise(s) => json!({ "shape": s.shape }),
            OperatorSpec::Move(s) => {
                let outer_key = match s.direction {
                    MoveDirection::Load => "src_shape",
                    MoveDirection::Store => "dst_shape",
                };
                let mut m = Map::new();
                m.insert(outer_key.into(), json!(s.outer));
                m.insert("offset".into(), json!(s.offset));
                m.insert("shape".into(), json!(s.shape));
                Value::Object(m)
            }
        }
    }

    /// Stable textual identity: kernel tag plus canonical params.
    pub fn canonical_json(&self) -> String {
        let v = json!({ "kernel": self.kind().tag(), "params": self.to_params() });
        serde_json::to_string(&v).unwrap()
    }

    /// First 8 hex chars of the SHA-256 of [`Self::canonical_json`].
    pub fn hash8(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())[..8].to_string()
    }

    /// Check the spec's own invariants and derive its operand shapes.
    pub fn signature(&self) -> Result<Signature, String> {
        match self {
            OperatorSpec::Linear(s) => linear_signature(s),
            OperatorSpec::Conv(s) => {
                if s.in_ch == 0 || s.out_ch == 0 || s.kernel == 0 || s.groups == 0 || s.stride == 0
                {
                    return Err("conv dimensions, kernel, stride and groups must be >= 1".into());
                }
                if s.in_ch % s.groups != 0 || s.out_ch % s.groups != 0 {
                    return Err(format!(
                        "channels not divisible by groups (in_ch={}, out_ch={}, groups={})",
                        s.in_ch, s.out_ch, s.groups
                    ));
                }
                if s.unroll_in == 0 || s.unroll_out == 0 {
                    return Err("unroll factors must be >= 1".into());
                }
                let (oh, ow) = s
                    .out_hw()
                    .ok_or_else(|| "conv output spatial dims would be < 1".to_string())?;
                let mut inputs = vec![
                    ("x", shp(&[s.in_ch, s.h, s.w])?),
                    (
                        "weights",
                        shp(&[s.out_ch, s.in_ch / s.groups, s.kernel, s.kernel])?,
                    ),
                ];
                if s.accumulate {
                    inputs.push(("acc_in", shp(&[s.out_ch, oh, ow])?));
                }
                if s.bias {
                    inputs.push(("bias", shp(&[s.out_ch])?));
                }
                Ok(Signature {
                    inputs,
                    outputs: vec![("y", shp(&[s.out_ch, oh, ow])?)],
                })
            }
            OperatorSpec::Norm(s) => {
                if !(s.epsilon > 0.0) {
                    return Err("epsilon must be > 0".into());
                }
                let x = s.shape.clone();
                let mut inputs = vec![("x", x.clone())];
                match s.kind {
                    NormKind::Batchnorm => {
                        let c = shp(&[x.dims()[0]])?;
                        inputs.push(("mean", c.clone()));
                        inputs.push(("var", c.clone()));
                        if s.affine {
                            inputs.push(("gamma", c.clone()));
                            inputs.push(("beta", c));
                        }
                    }
                    NormKind::Layernorm => {
                        if s.affine {
                            let c = shp(&[x.last()])?;
                            inputs.push(("gamma", c.clone()));
                            inputs.push(("beta", c));
                        }
                    }
                    NormKind::Rmsnorm => {
                        if s.affine {
                            inputs.push(("gamma", shp(&[x.last()])?));
                        }
                    }
                }
                Ok(Signature {
                    inputs,
                    outputs: vec![("y", x)],
                })
            }
            OperatorSpec::Activation(s) => Ok(Signature {
                inputs: vec![("x", s.shape.clone())],
                outputs: vec![("y", s.shape.clone())],
            }),
            OperatorSpec::Attention(s) => {
                if s.seq_len == 0 || s.hidden == 0 || s.heads == 0 || s.kv_groups == 0 {
                    return Err("attention dimensions must be >= 1".into());
                }
                if s.hidden % s.heads != 0 {
                    return Err(format!(
                        "hidden {} not divisible by heads {}",
                        s.hidden, s.heads
                    ));
                }
                if s.heads % s.kv_groups != 0 {
                    return Err(format!(
                        "heads {} not divisible by kv_groups {}",
                        s.heads, s.kv_groups
                    ));
                }
                if s.with_rope && s.head_dim() % 2 != 0 {
                    return Err(format!("head_dim {} must be even with RoPE", s.head_dim()));
                }
                if s.window == Some(0) {
                    return Err("window must be >= 1".into());
                }
                if !(s.rope_base > 0.0) {
                    return Err("rope_base must be > 0".into());
                }
                let tok = shp(&[s.seq_len, s.hidden])?;
                let sq = shp(&[s.hidden, s.hidden])?;
                let kv = shp(&[s.hidden, s.kv_dim()])?;
                Ok(Signature {
                    inputs: vec![
                        ("q", tok.clone()),
                        ("k", tok.clone()),
                        ("v", tok.clone()),
                        ("wq", sq.clone()),
                        ("wk", kv.clone()),
                        ("wv", kv),
                        ("wo", sq),
                    ],
                    outputs: vec![("out", tok)],
                })
            }
            OperatorSpec::Rope(s) => {
                if s.head_dim == 0 || s.head_dim % 2 != 0 {
                    return Err(format!("head_dim {} must be even", s.head_dim));
                }
                if s.dim % s.head_dim != 0 {
                    return Err(format!(
                        "dim {} not divisible by head_dim {}",
                        s.dim, s.head_dim
                    ));
                }
                let x = shp(&[s.seq_len, s.dim])?;
                Ok(Signature {
                    inputs: vec![("x", x.clone())],
                    outputs: vec![("y", x)],
                })
            }
            OperatorSpec::Dropout(s) => {
                if !(0.0..1.0).contains(&s.p) {
                    return Err(format!("dropout probability {} outside [0, 1)", s.p));
                }
                Ok(Signature {
                    inputs: vec![("x", s.shape.clone())],
                    outputs: vec![("y", s.shape.clone())],
                })
            }
            OperatorSpec::Pool(s) => {
                let (oh, ow) = s
                    .out_hw()
                    .ok_or_else(|| "pool window does not fit the input".to_string())?;
                Ok(Signature {
                    inputs: vec![("x", shp(&[s.channels, s.h, s.w])?)],
                    outputs: vec![("y", shp(&[s.channels, oh, ow])?)],
                })
            }
            OperatorSpec::Elementwise(s) => Ok(Signature {
                inputs: vec![("a", s.shape.clone()), ("b", s.shape.clone())],
                outputs: vec![("c", s.shape.clone())],
            }),
            OperatorSpec::Move(s) => {
                check_region(&s.outer, &s.offset, &s.shape)?;
                let (src, dst) = match s.direction {
                    MoveDirection::Load => (s.outer.clone(), s.shape.clone()),
                    MoveDirection::Store => (s.shape.clone(), s.outer.clone()),
                };
                Ok(Signature {
                    inputs: vec![("src", src)],
                    outputs: vec![("dst", dst)],
                })
            }
        }
    }
}

/// Region `offset + shape` must lie within `outer`, with matching rank.
pub fn check_region(outer: &TensorShape, offset: &[usize], shape: &TensorShape) -> Result<(), String> {
    if offset.len() != outer.rank() || shape.rank() != outer.rank() {
        return Err(format!(
            "region rank mismatch: array {outer}, offset {offset:?}, region {shape}"
        ));
    }
    for (axis, ((&o, &d), &n)) in offset.iter().zip(shape.dims()).zip(outer.dims()).enumerate() {
        if o + d > n {
            return Err(format!(
                "region out of bounds on axis {axis}: offset {o} + extent {d} > {n}"
            ));
        }
    }
    Ok(())
}

fn linear_from_params(kind: KernelKind, p: LinearParams) -> Result<LinearSpec, ParamError> {
    let variant = match kind {
        KernelKind::Dot => LinearVariant::Dot,
        KernelKind::Matvec => LinearVariant::Matvec,
        KernelKind::Gemm => LinearVariant::Gemm,
        _ => LinearVariant::Chain,
    };
    let need = |v: Option<usize>, field: &str| {
        v.ok_or_else(|| ParamError::at(field, format!("missing field `{field}`")))
    };
    let forbid = |v: Option<usize>, field: &str| match v {
        Some(_) => Err(ParamError::at(
            field,
            format!("unknown field `{field}` for kernel {kind}"),
        )),
        None => Ok(1),
    };
    let (m, n) = match variant {
        LinearVariant::Dot => (forbid(p.m, "m")?, forbid(p.n, "n")?),
        LinearVariant::Matvec => (need(p.m, "m")?, forbid(p.n, "n")?),
        LinearVariant::Gemm | LinearVariant::Chain => (need(p.m, "m")?, need(p.n, "n")?),
    };
    if p.assoc_order.is_some() && variant != LinearVariant::Chain {
        return Err(ParamError::at(
            "assoc_order",
            format!("unknown field `assoc_order` for kernel {kind}"),
        ));
    }
    if p.accumulate && variant != LinearVariant::Gemm {
        return Err(ParamError::at(
            "accumulate",
            format!("unknown field `accumulate` for kernel {kind}"),
        ));
    }
    Ok(LinearSpec {
        variant,
        m,
        k: p.k,
        n,
        bias: p.bias,
        loop_order: p.loop_order,
        unroll: p.unroll,
        inline_mul: p.inline_mul,
        assoc_order: p.assoc_order.unwrap_or_default(),
        accumulate: p.accumulate,
    })
}

fn linear_signature(s: &LinearSpec) -> Result<Signature, String> {
    if s.m == 0 || s.k == 0 || s.n == 0 {
        return Err("linear dimensions must be >= 1".into());
    }
    if s.unroll.contains(&0) {
        return Err("unroll factors must be >= 1".into());
    }
    let mut inputs = match s.variant {
        LinearVariant::Gemm => vec![("a", shp(&[s.m, s.k])?), ("b", shp(&[s.k, s.n])?)],
        LinearVariant::Matvec => vec![("a", shp(&[s.m, s.k])?), ("x", shp(&[s.k])?)],
        LinearVariant::Dot => vec![("x", shp(&[s.k])?), ("y", shp(&[s.k])?)],
        LinearVariant::Chain => vec![
            ("x", shp(&[s.m])?),
            ("a", shp(&[s.m, s.k])?),
            ("b", shp(&[s.k, s.n])?),
            ("y", shp(&[s.n])?),
        ],
    };
    let out = match s.variant {
        LinearVariant::Gemm => shp(&[s.m, s.n])?,
        LinearVariant::Matvec => shp(&[s.m])?,
        LinearVariant::Dot | LinearVariant::Chain => shp(&[1])?,
    };
    if s.accumulate {
        inputs.push(("acc_in", out.clone()));
    }
    if s.bias {
        inputs.push(("bias", shp(&[s.bias_len()])?));
    }
    Ok(Signature {
        inputs,
        outputs: vec![("out", out)],
    })
}
