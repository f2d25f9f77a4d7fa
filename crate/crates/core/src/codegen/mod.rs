//! C++ HLS source emission.
//!
//! A bundle for design `d` holds `src/d_kernels.h`, `src/d_kernels.cpp` (one
//! function per distinct kernel spec), `src/d_top.cpp`, `src/hls_shim.h`, an
//! optional self-checking testbench under `tb/`, and `scripts/run_hls.tcl`.
//! Emission is a pure function of the config.

mod kernel;
mod testbench;
mod writer;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{validate_design, DataType, DesignConfig, MemSpace, Stage};
use crate::kernels::{DesignError, KernelCatalog, OperatorSpec};
use crate::util::sha256_hex;
use writer::Src;

pub use testbench::{emit_testbench, golden_vectors, ops_count, tolerance, TestVectors};

/// Text of the compatibility header shipped with every bundle.
pub const SHIM_HEADER: &str = include_str!("shim.h");

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("design does not validate: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("oracle failed: {0}")]
    Oracle(#[from] DesignError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRole {
    KernelHeader,
    KernelBody,
    Top,
    Shim,
    Testbench,
    Vectors,
    BuildScript,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceBundle {
    pub design: String,
    pub top: String,
    pub units: Vec<(UnitRole, SourceUnit)>,
    /// Kernel function names in definition order.
    pub functions: Vec<String>,
}

impl SourceBundle {
    pub fn unit(&self, role: UnitRole) -> Option<&SourceUnit> {
        self.units.iter().find(|(r, _)| *r == role).map(|(_, u)| u)
    }

    pub fn set_unit(&mut self, role: UnitRole, unit: SourceUnit) {
        match self.units.iter_mut().find(|(r, _)| *r == role) {
            Some(slot) => slot.1 = unit,
            None => self.units.push((role, unit)),
        }
    }

    /// `bundle.json`: design, top and every unit's role, path and SHA-256.
    pub fn manifest(&self) -> String {
        let units: Vec<_> = self
            .units
            .iter()
            .map(|(role, u)| json!({"role": role, "path": u.path, "sha256": sha256_hex(u.text.as_bytes())}))
            .collect();
        let v = json!({"design": self.design, "top": self.top, "functions": self.functions, "units": units});
        let mut s = serde_json::to_string_pretty(&v).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Write under `<out>/<design>/` and return that directory.
    pub fn write(&self, out: &Path) -> io::Result<PathBuf> {
        let root = out.join(&self.design);
        for (_, u) in &self.units {
            let p = root.join(&u.path);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            write_if_changed(&p, u.text.as_bytes())?;
        }
        write_if_changed(&root.join("bundle.json"), self.manifest().as_bytes())?;
        Ok(root)
    }
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if fs::read(path).map(|old| old == bytes).unwrap_or(false) {
        return Ok(());
    }
    fs::write(path, bytes)
}

fn types_prelude(dt: &DataType) -> String {
    format!(
        "#include \"hls_shim.h\"\n\ntypedef {} data_t;\ntypedef double acc_t;\n",
        dt.c_type()
    )
}

/// A standalone translation unit defining one kernel, named `fb_<kernel>_<hash8>`.
pub fn emit_kernel(spec: &OperatorSpec, dt: &DataType) -> Result<SourceUnit, CodegenError> {
    emit_kernel_named(spec, dt, "fb")
}

/// Like [`emit_kernel`] with the function named `<prefix>_<kernel>_<hash8>`.
pub fn emit_kernel_named(spec: &OperatorSpec, dt: &DataType, prefix: &str) -> Result<SourceUnit, CodegenError> {
    spec.signature().map_err(|e| CodegenError::Validation(vec![e]))?;
    let name = function_name(prefix, spec);
    let text = format!(
        "{}\n{}\n{}",
        types_prelude(dt),
        kernel::KERNEL_HELPERS,
        kernel::definition(spec, &name)
    );
    Ok(SourceUnit {
        path: format!("src/{name}.cpp"),
        text,
    })
}

pub fn function_name(prefix: &str, spec: &OperatorSpec) -> String {
    format!("{prefix}_{}_{}", spec.kind().tag(), spec.hash8())
}

/// Emit header, kernel bodies, top function, shim and build script.
///
/// The build script references a testbench only once one is attached with
/// [`attach_testbench`].
pub fn emit_design(cfg: &DesignConfig) -> Result<SourceBundle, CodegenError> {
    let report = validate_design(cfg, &KernelCatalog::standard());
    if !report.is_empty() {
        return Err(CodegenError::Validation(report.messages()));
    }
    let d = &cfg.name;

    // distinct specs in order of first use
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut distinct: Vec<(&OperatorSpec, String)> = Vec::new();
    for call in &cfg.calls {
        let key = call.params.canonical_json();
        if let std::collections::btree_map::Entry::Vacant(e) = names.entry(key) {
            let name = function_name(d, &call.params);
            e.insert(name.clone());
            distinct.push((&call.params, name));
        }
    }

    let guard = format!("{}_KERNELS_H", d.to_ascii_uppercase());
    let mut h = Src::new();
    h.line(format!("#ifndef {guard}"));
    h.line(format!("#define {guard}"));
    h.line("");
    for l in types_prelude(&cfg.synth.data_type).lines() {
        h.line(l);
    }
    h.line("");
    for (spec, name) in &distinct {
        h.line(format!("{};", kernel::prototype(spec, name)));
    }
    if !distinct.is_empty() {
        h.line("");
    }
    h.line(format!("{};", top_prototype(cfg)));
    h.line("");
    h.line("#endif");

    let mut body = format!("#include \"{d}_kernels.h\"\n\n{}", kernel::KERNEL_HELPERS);
    for (spec, name) in &distinct {
        body.push('\n');
        body.push_str(&kernel::definition(spec, name));
    }

    let top = emit_top(cfg, &names);
    let mut bundle = SourceBundle {
        design: d.clone(),
        top: cfg.synth.top_name.clone(),
        units: vec![
            (
                UnitRole::KernelHeader,
                SourceUnit {
                    path: format!("src/{d}_kernels.h"),
                    text: h.finish(),
                },
            ),
            (
                UnitRole::KernelBody,
                SourceUnit {
                    path: format!("src/{d}_kernels.cpp"),
                    text: body,
                },
            ),
            (
                UnitRole::Top,
                SourceUnit {
                    path: format!("src/{d}_top.cpp"),
                    text: top,
                },
            ),
            (
                UnitRole::Shim,
                SourceUnit {
                    path: "src/hls_shim.h".to_string(),
                    text: SHIM_HEADER.to_string(),
                },
            ),
        ],
        functions: distinct.into_iter().map(|(_, n)| n).collect(),
    };
    bundle.set_unit(UnitRole::BuildScript, emit_build_script(cfg, false));
    Ok(bundle)
}

/// Add a testbench and its vectors, and point the build script at them.
pub fn attach_testbench(bundle: &mut SourceBundle, cfg: &DesignConfig, vectors: &TestVectors) -> Result<(), CodegenError> {
    let tb = emit_testbench(cfg, vectors)?;
    bundle.set_unit(UnitRole::Testbench, tb);
    let mut json = serde_json::to_string_pretty(vectors).expect("vectors serialize");
    json.push('\n');
    bundle.set_unit(
        UnitRole::Vectors,
        SourceUnit {
            path: format!("tb/{}_vectors.json", cfg.name),
            text: json,
        },
    );
    bundle.set_unit(UnitRole::BuildScript, emit_build_script(cfg, true));
    Ok(())
}

/// `emit_design` plus, for non-opaque types, oracle vectors and a testbench.
pub fn generate(cfg: &DesignConfig, with_testbench: bool, seed: u64) -> Result<SourceBundle, CodegenError> {
    let mut bundle = emit_design(cfg)?;
    if with_testbench {
        let vectors = golden_vectors(cfg, seed)?;
        attach_testbench(&mut bundle, cfg, &vectors)?;
    }
    Ok(bundle)
}

/// Top ports: interfaces in declaration order, then off-chip memories.
fn top_ports(cfg: &DesignConfig) -> Vec<(&str, usize)> {
    cfg.interfaces
        .iter()
        .map(|i| (i.name.as_str(), i.shape.numel()))
        .chain(
            cfg.memories
                .iter()
                .filter(|m| m.space == MemSpace::OffChip)
                .map(|m| (m.name.as_str(), m.shape.numel())),
        )
        .collect()
}

pub(crate) fn top_prototype(cfg: &DesignConfig) -> String {
    let ports: Vec<String> = top_ports(cfg)
        .iter()
        .map(|(n, len)| format!("data_t {n}[{len}]"))
        .collect();
    let params = if ports.is_empty() { "void".to_string() } else { ports.join(", ") };
    format!("void {}({params})", cfg.synth.top_name)
}

fn emit_top(cfg: &DesignConfig, names: &BTreeMap<String, String>) -> String {
    let mut w = Src::new();
    w.line(format!("#include \"{}_kernels.h\"", cfg.name));
    w.line("");
    w.open(format!("{} {{", top_prototype(cfg)));
    for (n, len) in top_ports(cfg) {
        w.line(format!("#pragma HLS interface m_axi port={n} offset=slave bundle=gmem_{n} depth={len}"));
    }
    w.line("#pragma HLS interface s_axilite port=return");
    for m in cfg.memories.iter().filter(|m| m.space == MemSpace::OnChip) {
        let len = m.shape.numel();
        w.line(format!("static data_t {}[{len}];", m.name));
        w.for_loop(&format!("clear_{}", m.name), "x", len, 1);
        w.line(format!("{}[x] = 0;", m.name));
        w.close();
    }
    for call in &cfg.calls {
        let name = &names[&call.params.canonical_json()];
        let args: Vec<&str> = call.inputs.iter().chain(&call.outputs).map(|s| s.as_str()).collect();
        w.line(format!("{name}({});", args.join(", ")));
    }
    w.close();
    w.finish()
}

/// Vitis HLS TCL script running the configured flow stages in order.
pub fn emit_build_script(cfg: &DesignConfig, with_testbench: bool) -> SourceUnit {
    SourceUnit {
        path: "scripts/run_hls.tcl".to_string(),
        text: build_script(cfg, with_testbench, &cfg.synth.flow, true),
    }
}

/// Script running only `stage`; the project is reset only by the flow's first stage.
pub fn emit_stage_script(cfg: &DesignConfig, with_testbench: bool, stage: Stage) -> SourceUnit {
    let first = cfg.synth.flow.iter().min() == Some(&stage);
    SourceUnit {
        path: format!("scripts/stage_{}.tcl", stage.name()),
        text: build_script(cfg, with_testbench, &[stage], first),
    }
}

/// Name of the Vitis project directory the scripts create, relative to the bundle root.
pub fn project_dir(cfg: &DesignConfig) -> String {
    format!("{}_prj", cfg.name)
}

fn build_script(cfg: &DesignConfig, with_testbench: bool, stages: &[Stage], reset: bool) -> String {
    let d = &cfg.name;
    let reset = if reset { "-reset " } else { "" };
    let mut t = Src::new();
    t.line(format!("# Vitis HLS flow for {d}: {}", flow_label(stages)));
    t.line(format!("open_project {reset}{}", project_dir(cfg)));
    t.line(format!("set_top {}", cfg.synth.top_name));
    t.line(format!("add_files src/{d}_kernels.cpp"));
    t.line(format!("add_files src/{d}_top.cpp"));
    if with_testbench {
        t.line(format!("add_files -tb tb/{d}_tb.cpp"));
    }
    t.line(format!("open_solution {reset}solution1 -flow_target vivado"));
    t.line(format!("set_part {{{}}}", cfg.synth.part));
    t.line(format!("create_clock -period {} -name default", cfg.synth.clock_period_ns));
    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        t.line(match stage {
            Stage::Csim => "csim_design",
            Stage::Synth => "csynth_design",
            Stage::Cosim => "cosim_design",
            Stage::Impl => "export_design -flow impl -rtl verilog -format ip_catalog",
        });
    }
    t.line("exit");
    t.finish()
}

fn flow_label(flow: &[Stage]) -> String {
    flow.iter().map(|s| s.name()).collect::<Vec<_>>().join(" -> ")
}
