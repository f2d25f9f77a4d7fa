use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::writer::Src;
use super::{top_ports, CodegenError, SourceUnit};
use crate::config::{DataType, DesignConfig};
use crate::kernels::stimulus::random_bindings;
use crate::kernels::{run_design_with, LinearVariant, NormKind, OperatorSpec, RunOptions};
use crate::tensor::Tensor;

/// Input bindings and expected outputs for one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVectors {
    pub inputs: BTreeMap<String, Tensor>,
    pub outputs: BTreeMap<String, Tensor>,
}

/// Random stimulus and the oracle's outputs with storage rounded to the
/// design's data type.
pub fn golden_vectors(cfg: &DesignConfig, seed: u64) -> Result<TestVectors, CodegenError> {
    if cfg.synth.data_type.is_opaque() {
        return Err(CodegenError::Unsupported(format!(
            "oracle unavailable for opaque data type {}",
            cfg.synth.data_type
        )));
    }
    let inputs = random_bindings(cfg, seed);
    let opts = RunOptions {
        storage: Some(cfg.synth.data_type.clone()),
    };
    let outputs = run_design_with(cfg, &inputs, &opts)?;
    Ok(TestVectors { inputs, outputs })
}

/// Rounding steps an output can accumulate: one per reduction term per call.
pub fn ops_count(cfg: &DesignConfig) -> usize {
    cfg.calls
        .iter()
        .map(|c| match &c.params {
            OperatorSpec::Linear(s) => match s.variant {
                LinearVariant::Chain => s.m * s.k + s.k * s.n + s.n,
                _ => s.k,
            },
            OperatorSpec::Conv(s) => (s.in_ch / s.groups) * s.kernel * s.kernel,
            OperatorSpec::Norm(s) if s.kind != NormKind::Batchnorm => s.shape.last(),
            OperatorSpec::Attention(s) => 2 * s.hidden + s.seq_len,
            _ => 1,
        })
        .sum::<usize>()
        .max(1)
}

/// Maximum absolute error the testbench accepts per output element.
pub fn tolerance(cfg: &DesignConfig) -> Option<f64> {
    match &cfg.synth.data_type {
        DataType::Float32 => Some(1e-4),
        DataType::Fixed(t, i) => Some(ops_count(cfg) as f64 * 2f64.powi(-((t - i) as i32))),
        DataType::Opaque(_) => None,
    }
}

fn sorted<'a>(v: &[&'a str]) -> Vec<&'a str> {
    let mut v = v.to_vec();
    v.sort();
    v
}

fn embed(w: &mut Src, name: &str, t: &Tensor) {
    w.open(format!("static const double {name}[{}] = {{", t.numel()));
    for chunk in t.data().chunks(6) {
        let vals: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
        w.line(format!("{},", vals.join(", ")));
    }
    w.close_with("};");
}

/// Self-checking `main` comparing every output against embedded golden values.
pub fn emit_testbench(cfg: &DesignConfig, vectors: &TestVectors) -> Result<SourceUnit, CodegenError> {
    let tol = tolerance(cfg).ok_or_else(|| {
        CodegenError::Unsupported(format!("oracle unavailable for opaque data type {}", cfg.synth.data_type))
    })?;
    let want_in: Vec<&str> = cfg.input_interfaces().map(|i| i.name.as_str()).collect();
    let want_out: Vec<&str> = cfg.output_interfaces().map(|i| i.name.as_str()).collect();
    let have_in: Vec<&str> = vectors.inputs.keys().map(|s| s.as_str()).collect();
    let have_out: Vec<&str> = vectors.outputs.keys().map(|s| s.as_str()).collect();
    if sorted(&want_in) != have_in || sorted(&want_out) != have_out {
        return Err(CodegenError::Unsupported(format!(
            "vector set does not match interfaces: inputs {have_in:?} vs {want_in:?}, outputs {have_out:?} vs {want_out:?}"
        )));
    }
    for iface in &cfg.interfaces {
        for t in [vectors.inputs.get(&iface.name), vectors.outputs.get(&iface.name)].into_iter().flatten() {
            if t.shape() != &iface.shape {
                return Err(CodegenError::Unsupported(format!(
                    "vector {} has shape {}, interface expects {}",
                    iface.name,
                    t.shape(),
                    iface.shape
                )));
            }
        }
    }

    let mut w = Src::new();
    w.line("#include <cmath>");
    w.line("#include <cstdio>");
    w.line("");
    w.line(format!("#include \"../src/{}_kernels.h\"", cfg.name));
    w.line("");
    for name in &want_in {
        embed(&mut w, &format!("in_{name}"), &vectors.inputs[*name]);
    }
    for name in &want_out {
        embed(&mut w, &format!("gold_{name}"), &vectors.outputs[*name]);
    }
    w.line("");
    w.open("static double max_abs_err(const data_t *got, const double *want, int n) {");
    w.line("double worst = 0.0;");
    w.open("for (int i = 0; i < n; ++i) {");
    w.line("double d = std::fabs((double)got[i] - want[i]);");
    w.line("if (d != d) return INFINITY;");
    w.line("if (d > worst) worst = d;");
    w.close();
    w.line("return worst;");
    w.close();
    w.line("");
    w.open("int main() {");
    let ports = top_ports(cfg);
    for (name, len) in &ports {
        w.line(format!("static data_t {name}[{len}];"));
        if want_in.contains(name) {
            w.line(format!("for (int i = 0; i < {len}; ++i) {name}[i] = (data_t)in_{name}[i];"));
        }
    }
    let args: Vec<&str> = ports.iter().map(|(n, _)| *n).collect();
    w.line(format!("{}({});", cfg.synth.top_name, args.join(", ")));
    w.line(format!("const double tol = {tol:e};"));
    w.line("int failed = 0;");
    w.line("double err = 0.0;");
    for name in &want_out {
        let len = vectors.outputs[*name].numel();
        w.line(format!("err = max_abs_err({name}, gold_{name}, {len});"));
        w.line(format!("std::printf(\"{name} max_abs_err=%.6e\\n\", err);"));
        w.line("if (!(err <= tol)) failed = 1;");
    }
    w.line("std::printf(\"%s\\n\", failed ? \"FAIL\" : \"PASS\");");
    w.line("return failed;");
    w.close();
    Ok(SourceUnit {
        path: format!("tb/{}_tb.cpp", cfg.name),
        text: w.finish(),
    })
}
