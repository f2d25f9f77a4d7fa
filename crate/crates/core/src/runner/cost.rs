//! Synthetic resource/latency model used by the mock backend.
//!
//! Version `mock-cost-v1`. Kernels are costed once per distinct function
//! (identical specs share hardware, as they do in the generated source):
//!
//! * lanes = product of effective unroll factors (factor capped at its loop bound)
//! * DSP   = lanes × DSP per multiply-accumulate for MAC kernels (gemm, matvec,
//!           dot, chain, conv, attention); one multiplier for other arithmetic
//!           kernels; zero for relu-like, add, max-pool and data movement
//! * LUT   = 180 + 45 × labelled loops in the emitted kernel + lanes × LUT per lane
//! * FF    = 2 × LUT
//!
//! The top level adds 350 LUT per AXI port and 60 LUT per call site, and one
//! BRAM_18K per started 18 Kib of on-chip memory larger than 1 Kib.
//! Latency sums `work / lanes + 12` over call sites. The achieved clock is the
//! target scaled into [0.72, 0.92] by the design's content hash.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codegen::emit_kernel;
use crate::config::{DataType, DesignConfig, MemSpace};
use crate::kernels::{ActKind, ElementwiseOp, LinearVariant, OperatorSpec, PoolKind};
use crate::reports::{PPAReport, ReportStage};
use crate::util::sha256_hex;

pub const COST_MODEL_VERSION: &str = "mock-cost-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Resources {
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
    pub bram: u64,
}

impl std::ops::AddAssign for Resources {
    fn add_assign(&mut self, o: Self) {
        self.lut += o.lut;
        self.ff += o.ff;
        self.dsp += o.dsp;
        self.bram += o.bram;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub kernels: Resources,
    pub top: Resources,
    pub latency_cycles: u64,
}

impl CostBreakdown {
    pub fn total(&self) -> Resources {
        let mut r = self.kernels;
        r += self.top;
        r
    }
}

fn bits(dt: &DataType) -> u64 {
    match dt {
        DataType::Fixed(t, _) => *t as u64,
        _ => 32,
    }
}

fn dsp_per_mac(dt: &DataType) -> u64 {
    match dt {
        DataType::Float32 => 5,
        DataType::Fixed(t, _) => (*t as u64).div_ceil(27) * (*t as u64).div_ceil(18),
        DataType::Opaque(_) => 1,
    }
}

fn lut_per_lane(dt: &DataType) -> u64 {
    match dt {
        DataType::Float32 => 350,
        DataType::Fixed(t, _) => 2 * *t as u64,
        DataType::Opaque(_) => 64,
    }
}

fn lanes(spec: &OperatorSpec) -> u64 {
    match spec {
        OperatorSpec::Linear(s) => {
            let bounds = match s.variant {
                LinearVariant::Gemm | LinearVariant::Chain => [s.m, s.n, s.k],
                LinearVariant::Matvec => [s.m, 1, s.k],
                LinearVariant::Dot => [1, 1, s.k],
            };
            s.unroll.iter().zip(bounds).map(|(&u, b)| u.min(b) as u64).product()
        }
        OperatorSpec::Conv(s) => (s.unroll_in.min(s.in_ch / s.groups) * s.unroll_out.min(s.out_ch)) as u64,
        _ => 1,
    }
}

/// Multipliers one lane needs.
fn multipliers(spec: &OperatorSpec) -> u64 {
    match spec {
        OperatorSpec::Linear(_) | OperatorSpec::Conv(_) | OperatorSpec::Attention(_) => 1,
        OperatorSpec::Activation(a) => match a.kind {
            ActKind::Relu | ActKind::Relu6 | ActKind::HardSigmoid => 0,
            _ => 1,
        },
        OperatorSpec::Pool(p) => u64::from(p.kind == PoolKind::Avg),
        OperatorSpec::Elementwise(e) => u64::from(e.op == ElementwiseOp::Mul),
        OperatorSpec::Move(_) => 0,
        _ => 1,
    }
}

/// Scalar operations one call performs.
fn work(spec: &OperatorSpec) -> u64 {
    let out: u64 = spec
        .signature()
        .map(|s| s.outputs.iter().map(|(_, sh)| sh.numel() as u64).sum())
        .unwrap_or(1);
    match spec {
        OperatorSpec::Linear(s) => match s.variant {
            LinearVariant::Chain => (s.m * s.k + s.k * s.n + s.n) as u64,
            _ => out * s.k as u64,
        },
        OperatorSpec::Conv(s) => out * (s.in_ch / s.groups * s.kernel * s.kernel) as u64,
        OperatorSpec::Attention(s) => {
            let (l, h, kv) = (s.seq_len as u64, s.hidden as u64, s.kv_dim() as u64);
            2 * l * h * h + 2 * l * h * kv + 2 * l * l * h
        }
        _ => out,
    }
}

fn kernel_cost(spec: &OperatorSpec, dt: &DataType) -> Resources {
    let loops = emit_kernel(spec, dt)
        .map(|u| u.text.matches(": for (").count() as u64)
        .unwrap_or(0);
    let lanes = lanes(spec);
    let lut = 180 + 45 * loops + lanes * lut_per_lane(dt);
    Resources {
        lut,
        ff: 2 * lut,
        dsp: lanes * multipliers(spec) * dsp_per_mac(dt),
        bram: 0,
    }
}

pub fn breakdown(cfg: &DesignConfig) -> CostBreakdown {
    let dt = &cfg.synth.data_type;
    let mut seen = BTreeSet::new();
    let mut kernels = Resources::default();
    let mut latency = 0;
    for call in &cfg.calls {
        if seen.insert(call.params.canonical_json()) {
            kernels += kernel_cost(&call.params, dt);
        }
        latency += work(&call.params) / lanes(&call.params) + 12;
    }
    let ports = (cfg.interfaces.len() + cfg.memories.iter().filter(|m| m.space == MemSpace::OffChip).count()) as u64;
    let lut = 350 * ports + 60 * cfg.calls.len() as u64;
    let bram = cfg
        .memories
        .iter()
        .filter(|m| m.space == MemSpace::OnChip)
        .map(|m| {
            let b = m.shape.numel() as u64 * bits(m.element.as_ref().unwrap_or(dt));
            if b > 1024 {
                b.div_ceil(18 * 1024)
            } else {
                0
            }
        })
        .sum();
    CostBreakdown {
        kernels,
        top: Resources {
            lut,
            ff: 2 * lut,
            dsp: 0,
            bram,
        },
        latency_cycles: latency,
    }
}

/// The modeled synthesis report for a design.
pub fn model_report(cfg: &DesignConfig) -> PPAReport {
    let b = breakdown(cfg);
    let total = b.total();
    let hash = sha256_hex(cfg.to_json_string().as_bytes());
    let frac = u64::from_str_radix(&hash[..8], 16).expect("hex") as f64 / u32::MAX as f64;
    let clock = cfg.synth.clock_period_ns * (0.72 + 0.2 * frac);
    PPAReport {
        design: cfg.synth.top_name.clone(),
        stage: ReportStage::Synth,
        lut: total.lut,
        ff: total.ff,
        dsp: total.dsp,
        bram: total.bram,
        latency_cycles: Some(b.latency_cycles),
        clock_achieved_ns: Some((clock * 1000.0).round() / 1000.0),
        power_w: None,
    }
}

/// Post-implementation numbers derived from the synthesis model.
pub fn model_impl_report(cfg: &DesignConfig) -> PPAReport {
    let s = model_report(cfg);
    PPAReport {
        stage: ReportStage::Impl,
        lut: s.lut * 92 / 100,
        ff: s.ff * 95 / 100,
        latency_cycles: None,
        clock_achieved_ns: s.clock_achieved_ns.map(|c| (c * 1.04 * 1000.0).round() / 1000.0),
        ..s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_design_config;

    fn gemm(unroll_k: usize) -> DesignConfig {
        parse_design_config(&format!(
            r#"{{"name": "g", "interfaces": [
                {{"name": "A", "direction": "in", "shape": [8, 8]}},
                {{"name": "B", "direction": "in", "shape": [8, 8]}},
                {{"name": "C", "direction": "out", "shape": [8, 8]}}],
              "calls": [{{"kernel": "gemm", "params": {{"m": 8, "k": 8, "n": 8, "unroll": [1, 1, {unroll_k}]}},
                          "inputs": ["A", "B"], "outputs": ["C"]}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn doubling_unroll_doubles_dsp() {
        let one = model_report(&gemm(2));
        let two = model_report(&gemm(4));
        assert_eq!(two.dsp, 2 * one.dsp);
        assert_eq!(model_report(&gemm(2)), one);
    }

    #[test]
    fn empty_design_has_no_kernel_resources() {
        let cfg = DesignConfig::empty("nothing");
        let b = breakdown(&cfg);
        assert_eq!(b.kernels, Resources::default());
        assert_eq!(b.latency_cycles, 0);
    }

    #[test]
    fn repeated_calls_share_a_kernel() {
        let mut cfg = gemm(1);
        let single = breakdown(&cfg);
        cfg.interfaces.push(crate::config::InterfaceDecl {
            name: "D".into(),
            direction: crate::config::Direction::Out,
            shape: crate::shape![8, 8],
            element: None,
        });
        let mut again = cfg.calls[0].clone();
        again.outputs = vec!["D".into()];
        cfg.calls.push(again);
        let double = breakdown(&cfg);
        assert_eq!(double.kernels, single.kernels);
        assert!(double.latency_cycles > single.latency_cycles);
    }
}
