use std::collections::BTreeMap;

use thiserror::Error;

use super::spec::{KernelKind, MoveDirection, NormKind, OperatorSpec};
use super::{
    eval_activation, eval_attention, eval_conv, eval_dropout, eval_elementwise, eval_linear, eval_move,
    eval_norm, eval_pool, eval_rope, expect_shape, KernelError,
};
use crate::config::{DataType, DesignConfig};
use crate::tensor::{Tensor, TensorShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("missing binding for input interface {0}")]
    MissingBinding(String),
    #[error("binding {name}: expected shape {expected}, got {actual}")]
    BindingShape {
        name: String,
        expected: TensorShape,
        actual: TensorShape,
    },
    #[error("call {call} ({kernel}): {source}")]
    Kernel {
        call: usize,
        kernel: KernelKind,
        #[source]
        source: KernelError,
    },
    #[error("call {call}: {message}")]
    Call { call: usize, message: String },
}

impl DesignError {
    pub fn call_index(&self) -> Option<usize> {
        match self {
            DesignError::Kernel { call, .. } | DesignError::Call { call, .. } => Some(*call),
            _ => None,
        }
    }
}

/// Storage emulation for golden vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Round every buffer write (and every binding) to this element type, as
    /// the generated hardware stores it. `None` keeps the pure `f64` path.
    pub storage: Option<DataType>,
}

/// Value a `dt`-typed buffer holds after storing `x`.
///
/// `float32` rounds to nearest; `fixed(t, i)` truncates toward −∞ on the
/// `2^-(t-i)` grid and wraps into `t` bits; opaque types are left as is.
pub fn round_to_storage(dt: &DataType, x: f64) -> f64 {
    match dt {
        DataType::Float32 => x as f32 as f64,
        DataType::Fixed(t, i) => {
            let scale = 2f64.powi((t - i) as i32);
            let modulus = 2f64.powi(*t as i32);
            let mut q = (x * scale).floor().rem_euclid(modulus);
            if q >= modulus / 2.0 {
                q -= modulus;
            }
            q / scale
        }
        DataType::Opaque(_) => x,
    }
}

/// Evaluate one kernel instance on operands in its signature order.
///
/// `dst` is the current destination value for `store`, whose untouched
/// region is preserved; other kernels ignore it.
pub fn eval_operator(spec: &OperatorSpec, inputs: &[&Tensor], dst: Option<&Tensor>) -> Result<Tensor, KernelError> {
    let sig = spec.signature().map_err(KernelError::Shape)?;
    if inputs.len() != sig.inputs.len() {
        return Err(KernelError::Shape(format!(
            "{} expects {} operand(s), got {}",
            spec.kind(),
            sig.inputs.len(),
            inputs.len()
        )));
    }
    for ((role, shape), t) in sig.inputs.iter().zip(inputs) {
        expect_shape(role, t, shape.dims())?;
    }
    match spec {
        OperatorSpec::Linear(s) => eval_linear(s, inputs),
        OperatorSpec::Conv(s) => {
            let mut rest = inputs[2..].iter();
            let acc = if s.accumulate { rest.next().copied() } else { None };
            let bias = if s.bias { rest.next().copied() } else { None };
            eval_conv(s, inputs[0], inputs[1], acc, bias)
        }
        OperatorSpec::Norm(s) => match s.kind {
            NormKind::Batchnorm => {
                let (g, b) = if s.affine { (Some(inputs[3]), Some(inputs[4])) } else { (None, None) };
                eval_norm(s, inputs[0], g, b, Some((inputs[1], inputs[2])))
            }
            NormKind::Layernorm => {
                let (g, b) = if s.affine { (Some(inputs[1]), Some(inputs[2])) } else { (None, None) };
                eval_norm(s, inputs[0], g, b, None)
            }
            NormKind::Rmsnorm => eval_norm(s, inputs[0], s.affine.then(|| inputs[1]), None, None),
        },
        OperatorSpec::Activation(s) => eval_activation(s.kind, inputs[0]),
        OperatorSpec::Attention(s) => eval_attention(
            s, inputs[0], inputs[1], inputs[2], inputs[3], inputs[4], inputs[5], inputs[6],
        ),
        OperatorSpec::Rope(s) => {
            let positions: Vec<usize> = (0..s.seq_len).collect();
            eval_rope(inputs[0], &positions, s.head_dim, s.base)
        }
        OperatorSpec::Dropout(s) => eval_dropout(inputs[0], s.p, s.seed),
        OperatorSpec::Pool(s) => eval_pool(s, inputs[0]),
        OperatorSpec::Elementwise(s) => eval_elementwise(s.op, inputs[0], inputs[1]),
        OperatorSpec::Move(s) => match s.direction {
            MoveDirection::Load => eval_move(s, inputs[0], None),
            MoveDirection::Store => eval_move(s, inputs[0], dst),
        },
    }
}

/// Execute a design's calls in order on the `f64` path.
pub fn run_design(
    cfg: &DesignConfig,
    bindings: &BTreeMap<String, Tensor>,
) -> Result<BTreeMap<String, Tensor>, DesignError> {
    run_design_with(cfg, bindings, &RunOptions::default())
}

/// Execute a design's calls in order; returns every `out`/`inout` interface.
///
/// Unwritten outputs are returned as zeros, matching zero-initialized hardware
/// buffers.
pub fn run_design_with(
    cfg: &DesignConfig,
    bindings: &BTreeMap<String, Tensor>,
    opts: &RunOptions,
) -> Result<BTreeMap<String, Tensor>, DesignError> {
    let store = |t: Tensor| match &opts.storage {
        Some(dt) => t.map(|x| round_to_storage(dt, x)),
        None => t,
    };
    let mut env: BTreeMap<&str, Tensor> = BTreeMap::new();
    for iface in cfg.input_interfaces() {
        let t = bindings
            .get(&iface.name)
            .ok_or_else(|| DesignError::MissingBinding(iface.name.clone()))?;
        if t.shape() != &iface.shape {
            return Err(DesignError::BindingShape {
                name: iface.name.clone(),
                expected: iface.shape.clone(),
                actual: t.shape().clone(),
            });
        }
        env.insert(&iface.name, store(t.clone()));
    }

    for (ci, call) in cfg.calls.iter().enumerate() {
        let mut operands = Vec::with_capacity(call.inputs.len());
        for name in &call.inputs {
            let t = env.get(name.as_str()).ok_or_else(|| DesignError::Call {
                call: ci,
                message: format!("buffer {name} read before it is defined"),
            })?;
            operands.push(t);
        }
        if call.outputs.len() != 1 {
            return Err(DesignError::Call {
                call: ci,
                message: format!("expected exactly one output, got {}", call.outputs.len()),
            });
        }
        let dst_name = call.outputs[0].as_str();
        let result = eval_operator(&call.params, &operands, env.get(dst_name)).map_err(|source| {
            DesignError::Kernel {
                call: ci,
                kernel: call.kernel(),
                source,
            }
        })?;
        if let Some(b) = cfg.buffer(dst_name) {
            if b.shape != result.shape() {
                return Err(DesignError::Call {
                    call: ci,
                    message: format!("output {dst_name} is {} but the kernel produced {}", b.shape, result.shape()),
                });
            }
        }
        env.insert(dst_name, store(result));
    }

    Ok(cfg
        .output_interfaces()
        .map(|o| {
            let t = env.get(o.name.as_str()).cloned().unwrap_or_else(|| Tensor::zeros(o.shape.clone()));
            (o.name.clone(), t)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_design_config;
    use crate::shape;

    fn bind(pairs: Vec<(&str, Tensor)>) -> BTreeMap<String, Tensor> {
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn identity_gemm_returns_input() {
        let cfg = parse_design_config(
            r#"{"name": "g",
                "interfaces": [{"name": "A", "direction": "in", "shape": [3, 4]},
                               {"name": "I", "direction": "in", "shape": [4, 4]},
                               {"name": "C", "direction": "out", "shape": [3, 4]}],
                "calls": [{"kernel": "gemm", "params": {"m": 3, "k": 4, "n": 4}, "inputs": ["A", "I"], "outputs": ["C"]}]}"#,
        )
        .unwrap();
        let a = Tensor::from_fn(shape![3, 4], |i| i as f64 * 0.5 - 2.0);
        let id = Tensor::from_fn(shape![4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        let out = run_design(&cfg, &bind(vec![("A", a.clone()), ("I", id)])).unwrap();
        assert_eq!(out["C"], a);
    }

    #[test]
    fn missing_binding_and_call_index() {
        let cfg = parse_design_config(
            r#"{"name": "g",
                "interfaces": [{"name": "x", "direction": "in", "shape": [2]},
                               {"name": "y", "direction": "out", "shape": [2]}],
                "calls": [{"kernel": "activation", "params": {"kind": "exp", "shape": [2]}, "inputs": ["x"], "outputs": ["y"]}]}"#,
        )
        .unwrap();
        assert!(matches!(run_design(&cfg, &BTreeMap::new()), Err(DesignError::MissingBinding(_))));
        let err = run_design(&cfg, &bind(vec![("x", Tensor::filled(shape![2], 1e4))])).unwrap_err();
        assert_eq!(err.call_index(), Some(0));
    }

    #[test]
    fn storage_rounding() {
        assert_eq!(round_to_storage(&DataType::Float32, 0.1), 0.1f32 as f64);
        let q = DataType::Fixed(8, 4);
        assert_eq!(round_to_storage(&q, 1.0 / 3.0), 5.0 / 16.0);
        assert_eq!(round_to_storage(&q, -0.01), -1.0 / 16.0);
        // 8.0 is one past the top of the signed range and wraps to -8
        assert_eq!(round_to_storage(&q, 8.0), -8.0);
        assert_eq!(round_to_storage(&DataType::Opaque("half".into()), 0.1), 0.1);
    }
}
