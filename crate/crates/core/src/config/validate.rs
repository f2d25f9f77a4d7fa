use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{BufferRole, DesignConfig, Direction};
use crate::kernels::{KernelCatalog, LinearVariant, OperatorSpec};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    /// Index of the offending call, or `None` for declaration-level problems.
    pub call: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.call {
            Some(i) => write!(f, "calls[{i}]: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.diagnostics.iter().map(|d| d.to_string()).collect()
    }
}

/// Shape-check every call against its params and check the dataflow order.
pub fn validate_design(cfg: &DesignConfig, catalog: &KernelCatalog) -> ValidationReport {
    let mut out = Vec::new();
    let dt = &cfg.synth.data_type;

    let mut decl_diags = Vec::new();
    let elements = cfg
        .memories
        .iter()
        .map(|m| (&m.name, &m.element))
        .chain(cfg.interfaces.iter().map(|i| (&i.name, &i.element)));
    for (name, element) in elements {
        if let Some(e) = element {
            if e != dt {
                decl_diags.push(Diagnostic {
                    call: None,
                    message: format!("buffer {name}: element type {e} differs from design data type {dt}"),
                });
            }
        }
    }
    decl_diags.sort();
    out.extend(decl_diags);

    let mut defined: HashSet<&str> = cfg.input_interfaces().map(|i| i.name.as_str()).collect();

    for (ci, call) in cfg.calls.iter().enumerate() {
        let mut diag = |message: String| out.push(Diagnostic { call: Some(ci), message });
        let kind = call.kernel();
        if !catalog.contains(kind) {
            diag(format!("kernel {kind} is not in the catalog"));
        }

        let shapes: Vec<Option<Vec<usize>>> = call
            .inputs
            .iter()
            .map(|n| cfg.buffer(n).map(|b| b.shape.dims().to_vec()))
            .collect();
        if let Some(m) = inner_dimension_mismatch(&call.params, &shapes) {
            diag(m);
        }

        match call.params.signature() {
            Err(m) => diag(m),
            Ok(sig) => {
                let roles = |v: &[(&str, _)]| v.iter().map(|(r, _)| *r).collect::<Vec<_>>().join(", ");
                if call.inputs.len() != sig.inputs.len() {
                    diag(format!(
                        "{kind} expects {} input(s) ({}), got {}",
                        sig.inputs.len(),
                        roles(&sig.inputs),
                        call.inputs.len()
                    ));
                }
                if call.outputs.len() != sig.outputs.len() {
                    diag(format!(
                        "{kind} expects {} output(s) ({}), got {}",
                        sig.outputs.len(),
                        roles(&sig.outputs),
                        call.outputs.len()
                    ));
                }
                let pairs = call
                    .inputs
                    .iter()
                    .zip(&sig.inputs)
                    .chain(call.outputs.iter().zip(&sig.outputs));
                for (name, (role, want)) in pairs {
                    if let Some(b) = cfg.buffer(name) {
                        if b.shape != want {
                            diag(format!("operand {role} ({name}) expects {want}, got {}", b.shape));
                        }
                    }
                }
            }
        }

        for name in &call.inputs {
            if !defined.contains(name.as_str()) {
                diag(format!("reads {name} before any call or input interface defines it"));
            }
            if call.outputs.contains(name) {
                diag(format!("{name} is both read and written by the same call"));
            }
        }
        let mut written = HashSet::new();
        for name in &call.outputs {
            if let Some(b) = cfg.buffer(name) {
                if b.role == BufferRole::Interface(Direction::In) {
                    diag(format!("writes input-only interface {name}"));
                }
            }
            if !written.insert(name.as_str()) {
                diag(format!("{name} is written twice by the same call"));
            }
        }
        defined.extend(call.outputs.iter().map(|s| s.as_str()));
    }

    ValidationReport { diagnostics: out }
}

/// Contraction-dimension check on the bound buffers of a linear call.
fn inner_dimension_mismatch(spec: &OperatorSpec, shapes: &[Option<Vec<usize>>]) -> Option<String> {
    let OperatorSpec::Linear(s) = spec else {
        return None;
    };
    let dim = |op: usize, axis: usize| shapes.get(op)?.as_ref()?.get(axis).copied();
    let pairs: &[((usize, usize), (usize, usize))] = match s.variant {
        LinearVariant::Gemm | LinearVariant::Matvec => &[((0, 1), (1, 0))],
        LinearVariant::Dot => &[((0, 0), (1, 0))],
        LinearVariant::Chain => &[((0, 0), (1, 0)), ((1, 1), (2, 0)), ((2, 1), (3, 0))],
    };
    for &((ao, aa), (bo, ba)) in pairs {
        if let (Some(x), Some(y)) = (dim(ao, aa), dim(bo, ba)) {
            if x != y {
                return Some(format!("inner dimensions {x}≠{y}"));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_design_config;

    fn gemm(a: &str, b: &str, c: &str, params: &str) -> String {
        format!(
            r#"{{"name": "g",
              "interfaces": [
                {{"name": "A", "direction": "in", "shape": {a}}},
                {{"name": "B", "direction": "in", "shape": {b}}},
                {{"name": "C", "direction": "out", "shape": {c}}}],
              "calls": [{{"kernel": "gemm", "params": {params}, "inputs": ["A", "B"], "outputs": ["C"]}}]}}"#
        )
    }

    #[test]
    fn consistent_gemm_is_clean() {
        let cfg = parse_design_config(&gemm("[4,6]", "[6,2]", "[4,2]", r#"{"m":4,"k":6,"n":2}"#)).unwrap();
        let r = validate_design(&cfg, &KernelCatalog::standard());
        assert!(r.is_empty(), "{:?}", r.messages());
    }

    #[test]
    fn inner_dimension_mismatch_reported() {
        let cfg = parse_design_config(&gemm("[4,6]", "[5,2]", "[4,2]", r#"{"m":4,"k":6,"n":2}"#)).unwrap();
        let r = validate_design(&cfg, &KernelCatalog::standard());
        assert!(r.messages().iter().any(|m| m.contains("inner dimensions 6≠5")), "{:?}", r.messages());
    }

    #[test]
    fn conv_group_rule_and_catalog() {
        let text = r#"{"name": "c",
            "interfaces": [
                {"name": "x", "direction": "in", "shape": [3, 5, 5]},
                {"name": "w", "direction": "in", "shape": [4, 1, 3, 3]},
                {"name": "y", "direction": "out", "shape": [4, 3, 3]}],
            "calls": [{"kernel": "conv", "params": {"in_ch": 3, "out_ch": 4, "h": 5, "w": 5, "kernel": 3, "groups": 2},
                       "inputs": ["x", "w"], "outputs": ["y"]}]}"#;
        let cfg = parse_design_config(text).unwrap();
        let r = validate_design(&cfg, &KernelCatalog::standard());
        assert!(r.messages().iter().any(|m| m.contains("channels not divisible by groups")));
        let r = validate_design(&cfg, &KernelCatalog::only([crate::kernels::KernelKind::Gemm]));
        assert!(r.messages().iter().any(|m| m.contains("not in the catalog")));
    }

    #[test]
    fn dataflow_order_is_checked() {
        let text = r#"{"name": "d",
            "memories": [{"name": "t", "space": "on_chip", "shape": [4]}],
            "interfaces": [{"name": "x", "direction": "in", "shape": [4]},
                           {"name": "y", "direction": "out", "shape": [4]}],
            "calls": [
                {"kernel": "add", "params": {"shape": [4]}, "inputs": ["x", "t"], "outputs": ["y"]},
                {"kernel": "activation", "params": {"kind": "relu", "shape": [4]}, "inputs": ["x"], "outputs": ["t"]}]}"#;
        let cfg = parse_design_config(text).unwrap();
        let r = validate_design(&cfg, &KernelCatalog::standard());
        assert_eq!(r.diagnostics.len(), 1, "{:?}", r.messages());
        assert!(r.messages()[0].contains("reads t before"));
    }

    #[test]
    fn writing_an_input_and_arity() {
        let text = r#"{"name": "d",
            "interfaces": [{"name": "x", "direction": "in", "shape": [4]},
                           {"name": "z", "direction": "in", "shape": [4]}],
            "calls": [{"kernel": "activation", "params": {"kind": "relu", "shape": [4]}, "inputs": ["x", "x"], "outputs": ["z"]}]}"#;
        let cfg = parse_design_config(text).unwrap();
        let msgs = validate_design(&cfg, &KernelCatalog::standard()).messages();
        assert!(msgs.iter().any(|m| m.contains("expects 1 input")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("writes input-only interface z")), "{msgs:?}");
    }
}
