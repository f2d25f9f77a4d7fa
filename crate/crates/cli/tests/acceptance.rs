//! Acceptance gate. Prints one PASS/FAIL line per criterion, with details
//! under failures, then asserts that the only failures are the known,
//! documented ones.
//!
//! Run alone with `cargo test -p forgebench-cli --test acceptance -- --nocapture`.

#[path = "../../core/tests/common/props.rs"]
mod props;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use forgebench_core::codegen::generate;
use forgebench_core::config::{MockSettings, RunConfig};
use forgebench_core::kernels::{ConvSpec, KernelCatalog, LinearSpec, OperatorSpec};
use forgebench_core::modularize::{
    check_fidelity, dims_of, emit_modular_design, iteration_count, max_tile, min_tile, plan_shared, Policy,
};
use forgebench_core::reports::{change_percent, sum_totals, ModularSpec, UtilPercent};
use forgebench_core::runner::{execute, plan_jobs, MockBackend};
use forgebench_core::sweep::{builtin_suite, expand_grid};
use forgebench_core::{parse_design_config, validate_design, DesignConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SUITE_BUDGET: Duration = Duration::from_secs(60);
const TABLE_BUDGET: Duration = Duration::from_secs(1);
const COMPILE_BUDGET: Duration = Duration::from_secs(600);
const FIDELITY_BUDGET: Duration = Duration::from_secs(120);
const SUM_TOL: f64 = 0.05;
const CHANGE_TOL: f64 = 0.15;
const COMPILE_SAMPLES_PER_SUITE: usize = 70;
const DIM_CAP: usize = 64;
const FIDELITY_GROUPS: usize = 50;
const PROPERTY_INSTANCES: u64 = 100;

/// Table cells that cannot match because the published numbers disagree with
/// themselves. Each is reported as a failure, not hidden.
const KNOWN_TABLE_FAILURES: &[&str] = &["Vector Transpose: total LUT"];

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    summary: String,
    details: Vec<String>,
}

/// Criterion lines go straight to stdout so they show even when libtest
/// captures output.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

impl Outcome {
    fn print(&self) {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        say(&format!("[{tag}] {}. {}: {}", self.id, self.title, self.summary));
        for d in &self.details {
            say(&format!("         {d}"));
        }
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn suite_counts() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut details = Vec::new();
    let mut counts = Vec::new();
    for (suite, want) in [("gemm", 1920), ("dnn", 2304), ("llm", 1944)] {
        let out = Command::new(env!("CARGO_BIN_EXE_forgebench"))
            .args(["--json", "sweep", suite, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        let count = serde_json::from_slice::<Value>(&out.stdout)
            .ok()
            .and_then(|v| v["count"].as_u64())
            .unwrap_or(0);
        let files = fs::read_dir(dir.path().join(suite)).map(|d| d.count()).unwrap_or(0);
        // Each config must still validate when read back from disk.
        let invalid = fs::read_dir(dir.path().join(suite))
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
            .filter(|p| {
                let cfg = parse_design_config(&fs::read_to_string(p).unwrap());
                !cfg.is_ok_and(|c| validate_design(&c, &KernelCatalog::standard()).is_empty())
            })
            .count();
        if count != want || files as u64 != want + 1 || invalid != 0 || out.status.code() != Some(0) {
            details.push(format!("{suite}: printed {count}, files {files}, invalid {invalid}, want {want}"));
        }
        counts.push(format!("{suite}={count}"));
    }
    let elapsed = start.elapsed();
    if elapsed >= SUITE_BUDGET {
        details.push(format!("took {elapsed:.1?}"));
    }
    Outcome {
        id: 1,
        title: "suite counts",
        passed: details.is_empty(),
        summary: format!("{} in {:.1?} (limit {:?})", counts.join(" "), elapsed, SUITE_BUDGET),
        details,
    }
}

fn tiling_math() -> Outcome {
    let mut details = Vec::new();
    let mut expect = |what: &str, got: Vec<usize>, want: Vec<usize>| {
        if got != want {
            details.push(format!("{what}: got {got:?}, want {want:?}"));
        }
    };
    let gemm = vec![vec![96, 512, 128], vec![128, 256, 64], vec![256, 128, 192]];
    expect("gemm min tile", min_tile(&gemm).unwrap().tile, vec![32, 128, 64]);
    expect("gemm max tile", max_tile(&gemm).unwrap().tile, vec![256, 512, 192]);

    let conv = vec![vec![64, 64, 14, 14], vec![128, 128, 7, 7], vec![128, 128, 14, 14]];
    let t = min_tile(&conv).unwrap();
    expect("conv min tile", t.tile.clone(), vec![64, 64, 7, 7]);
    expect(
        "conv iterations",
        conv.iter().map(|p| iteration_count(p, &t).unwrap()).collect(),
        vec![4, 4, 16],
    );

    let heads = vec![vec![16], vec![4]];
    let t = min_tile(&heads).unwrap();
    expect(
        "attention iterations",
        heads.iter().map(|p| iteration_count(p, &t).unwrap()).collect(),
        vec![4, 1],
    );
    Outcome {
        id: 2,
        title: "tiling math",
        passed: details.is_empty(),
        summary: "gemm min/max tiles, conv (4,4,16), attention (4,1)".into(),
        details,
    }
}

fn table_arithmetic() -> (Outcome, Vec<String>) {
    let start = Instant::now();
    let spec = ModularSpec::from_json(&fs::read_to_string(root().join("fixtures/modular_rows.json")).unwrap()).unwrap();
    let mut failed_cells = Vec::new();
    let mut details = Vec::new();
    let mut checked = 0;
    for row in &spec.rows {
        let forgebench_core::reports::RowSource::Percents { programs, after, .. } = &row.source else {
            details.push(format!("{}: not a percent row", row.name));
            continue;
        };
        let (Some(total), Some(change)) = (row.published_total, row.published_change) else {
            details.push(format!("{}: missing published values", row.name));
            continue;
        };
        let pct = |p: &[f64; 2]| UtilPercent::new(p[0], p[1]);
        let sum = sum_totals(&programs.iter().map(pct).collect::<Vec<_>>());
        let got = change_percent(pct(&total), pct(after));
        let excluded = row.name == "Tiled Attention";
        let cells = [
            ("total LUT", sum.lut_pct, total[0], SUM_TOL, false),
            ("total DSP", sum.dsp_pct, total[1], SUM_TOL, excluded),
            ("change LUT", got.lut.unwrap_or(f64::NAN), change[0], CHANGE_TOL, false),
            ("change DSP", got.dsp.unwrap_or(f64::NAN), change[1], CHANGE_TOL, excluded),
        ];
        for (cell, value, want, tol, skip) in cells {
            if skip {
                continue;
            }
            checked += 1;
            if !((value - want).abs() <= tol) {
                let id = format!("{}: {cell}", row.name);
                details.push(format!("{id} computes {value:.2}, published {want} (tolerance {tol})"));
                failed_cells.push(id);
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= TABLE_BUDGET {
        details.push(format!("took {elapsed:.1?}"));
        failed_cells.push(format!("runtime {elapsed:.1?} over {TABLE_BUDGET:?}"));
    }
    if !failed_cells.is_empty() {
        details.push("excluded: Tiled Attention DSP (published operands print 1.31 on both sides)".into());
    }
    let outcome = Outcome {
        id: 3,
        title: "modularization table arithmetic",
        passed: details.is_empty(),
        summary: format!(
            "{} rows, {checked} cells, {} outside tolerance, {elapsed:.1?}",
            spec.rows.len(),
            failed_cells.len()
        ),
        details,
    };
    (outcome, failed_cells)
}

fn max_dim(cfg: &DesignConfig) -> usize {
    cfg.interfaces
        .iter()
        .flat_map(|i| i.shape.dims().to_vec())
        .chain(cfg.memories.iter().flat_map(|m| m.shape.dims().to_vec()))
        .max()
        .unwrap_or(0)
}

fn compile_and_run(root: &Path, name: &str) -> Result<(), String> {
    let exe = root.join("tb_exe");
    let cxx = std::env::var("CXX").unwrap_or_else(|_| "g++".into());
    let out = Command::new(&cxx)
        .args(["-std=c++14", "-O1", "-ffp-contract=off", "-w", "-o"])
        .arg(&exe)
        .arg(root.join(format!("src/{name}_kernels.cpp")))
        .arg(root.join(format!("src/{name}_top.cpp")))
        .arg(root.join(format!("tb/{name}_tb.cpp")))
        .output()
        .map_err(|e| format!("{cxx}: {e}"))?;
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        return Err(format!("compile: {}", err.lines().next().unwrap_or("")));
    }
    let run = Command::new(&exe).output().map_err(|e| e.to_string())?;
    if run.status.code() != Some(0) {
        let text = String::from_utf8_lossy(&run.stdout);
        return Err(format!("testbench exit {:?}: {}", run.status.code(), text.trim().replace('\n', "; ")));
    }
    Ok(())
}

fn oracle_codegen_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut total = 0;
    for suite in ["gemm", "dnn", "llm"] {
        let configs = expand_grid(&builtin_suite(suite).unwrap()).unwrap();
        let eligible: Vec<&DesignConfig> = configs.iter().filter(|c| max_dim(c) <= DIM_CAP).collect();
        for cfg in eligible.choose_multiple(&mut rng, COMPILE_SAMPLES_PER_SUITE) {
            total += 1;
            let result = generate(cfg, true, total as u64)
                .map_err(|e| e.to_string())
                .and_then(|b| b.write(dir.path()).map_err(|e| e.to_string()))
                .and_then(|root| compile_and_run(&root, &cfg.name));
            if let Err(e) = result {
                details.push(format!("{}: {e}", cfg.name));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= COMPILE_BUDGET {
        details.push(format!("took {elapsed:.1?}"));
    }
    Outcome {
        id: 4,
        title: "oracle/codegen agreement",
        passed: details.is_empty() && total >= 200,
        summary: format!(
            "{}/{total} sampled designs compiled and passed their testbench, {elapsed:.1?} (limit {COMPILE_BUDGET:?})",
            total - details.len()
        ),
        details,
    }
}

fn random_group(rng: &mut ChaCha8Rng, conv: bool) -> Vec<OperatorSpec> {
    let count = rng.gen_range(2..=3);
    if conv {
        let kernel = [1, 3][rng.gen_range(0..2)];
        let stride = rng.gen_range(1..=2);
        (0..count)
            .map(|_| {
                let hw = rng.gen_range(kernel.max(2)..=16);
                let mut s = ConvSpec::new(rng.gen_range(1..=8), rng.gen_range(1..=8), hw, hw, kernel);
                s.stride = stride;
                s.padding = kernel / 2;
                s.bias = rng.gen_bool(0.5);
                OperatorSpec::Conv(s)
            })
            .collect()
    } else {
        (0..count)
            .map(|_| {
                let mut s = LinearSpec::gemm(rng.gen_range(1..=32), rng.gen_range(1..=32), rng.gen_range(1..=32));
                s.bias = rng.gen_bool(0.5);
                OperatorSpec::Linear(s)
            })
            .collect()
    }
}

fn modular_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut details = Vec::new();
    for g in 0..FIDELITY_GROUPS {
        let specs = random_group(&mut rng, g % 2 == 1);
        let programs: Vec<(String, Vec<usize>)> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("p{i}"), dims_of(s).unwrap()))
            .collect();
        for policy in [Policy::MinGcd, Policy::MaxFit] {
            let result = plan_shared(&programs, policy)
                .map_err(|e| e.to_string())
                .and_then(|plan| {
                    let design = emit_modular_design("modular", &plan, &specs).map_err(|e| e.to_string())?;
                    check_fidelity(&design, &plan, &specs, g as u64).map_err(|e| e.to_string())
                });
            match result {
                Ok(entries) => {
                    for e in entries.iter().filter(|e| !e.bit_exact) {
                        details.push(format!("group {g} {policy} {}: differs by {:e}", e.id, e.max_abs_diff));
                    }
                }
                Err(e) => details.push(format!("group {g} {policy}: {e}")),
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= FIDELITY_BUDGET {
        details.push(format!("took {elapsed:.1?}"));
    }
    Outcome {
        id: 5,
        title: "modularized fidelity",
        passed: details.is_empty(),
        summary: format!("{FIDELITY_GROUPS} GEMM/conv groups x 2 policies bit-exact, {elapsed:.1?}"),
        details,
    }
}

fn property_suites() -> Outcome {
    let suites: [(&str, fn(u64) -> props::Check); 6] = [
        ("chain order/parenthesization (6x4 variants)", props::chain_variants),
        ("softmax row sums", props::softmax_rows),
        ("RoPE norm", props::rope_norm),
        ("grouped conv degeneracy", props::grouped_conv),
        ("attention heads = kv groups", props::attention_mha),
        ("attention single token", props::attention_single_token),
    ];
    let mut details = Vec::new();
    for (name, check) in suites {
        let failures: Vec<String> = (0..PROPERTY_INSTANCES)
            .filter_map(|seed| check(0xACCE_0000 + seed).err().map(|e| format!("seed {seed}: {e}")))
            .collect();
        if let Some(first) = failures.first() {
            details.push(format!("{name}: {} of {PROPERTY_INSTANCES} failed, {first}", failures.len()));
        }
    }
    Outcome {
        id: 6,
        title: "oracle property suites",
        passed: details.is_empty(),
        summary: format!("{} suites x {PROPERTY_INSTANCES} instances", suites.len()),
        details,
    }
}

fn runner_determinism() -> Outcome {
    let cfgs: Vec<DesignConfig> = (0..32)
        .map(|i| {
            let n = 1 + i % 5;
            parse_design_config(&format!(
                r#"{{"name": "j{i:02}", "interfaces": [
                    {{"name": "A", "direction": "in", "shape": [{n}, 4]}},
                    {{"name": "B", "direction": "in", "shape": [4, 3]}},
                    {{"name": "C", "direction": "out", "shape": [{n}, 3]}}],
                  "calls": [{{"kernel": "gemm", "params": {{"m": {n}, "k": 4, "n": 3}}, "inputs": ["A", "B"], "outputs": ["C"]}}],
                  "synth": {{"flow": ["csim", "synth", "impl"]}}}}"#
            ))
            .unwrap()
        })
        .collect();
    let mut details = Vec::new();
    let mut baseline = None;
    let mut peaks = Vec::new();
    for workers in [1, 4, 16] {
        let dir = tempfile::tempdir().unwrap();
        let run = RunConfig {
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        let jobs = plan_jobs(&cfgs, &run);
        let backend = MockBackend::new(&MockSettings {
            stage_ms: 2,
            failures: vec![],
        });
        let probe = backend.probe();
        let results = execute(&jobs, &backend, workers).unwrap();
        peaks.push(format!("{workers}->{}", probe.peak()));
        if probe.peak() > workers {
            details.push(format!("peak {} exceeds {workers} workers", probe.peak()));
        }
        let normalized: Vec<_> = results
            .iter()
            .map(|r| {
                let mut r = r.without_timing();
                let texts: Vec<String> = r.reports.iter().map(|p| fs::read_to_string(p).unwrap_or_default()).collect();
                r.reports = r.reports.iter().map(|p| p.strip_prefix(dir.path()).unwrap().to_path_buf()).collect();
                (r, texts)
            })
            .collect();
        match &baseline {
            None => baseline = Some(normalized),
            Some(b) if *b != normalized => details.push(format!("results with {workers} workers differ from 1 worker")),
            Some(_) => {}
        }
    }
    Outcome {
        id: 7,
        title: "runner determinism and cap",
        passed: details.is_empty(),
        summary: format!("32 jobs, identical for workers 1/4/16, peak {}", peaks.join(" ")),
        details,
    }
}

#[test]
fn acceptance() {
    let (table, failed_cells) = table_arithmetic();
    let outcomes = vec![
        suite_counts(),
        tiling_math(),
        table,
        oracle_codegen_agreement(),
        modular_fidelity(),
        property_suites(),
        runner_determinism(),
    ];
    say("");
    for o in &outcomes {
        o.print();
    }
    say("[N/A ] 8. absolute vendor utilization, latency and power: needs the vendor toolchain and board");
    say("");

    // Criterion 3 may fail only on the documented cells; anything else is a regression.
    let unexpected: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed && o.id != 3)
        .map(|o| format!("criterion {} failed", o.id))
        .chain(
            failed_cells
                .iter()
                .filter(|c| !KNOWN_TABLE_FAILURES.contains(&c.as_str()))
                .cloned(),
        )
        .chain(
            KNOWN_TABLE_FAILURES
                .iter()
                .filter(|k| !failed_cells.iter().any(|c| c == *k))
                .map(|k| format!("{k} now matches; drop it from the known failures")),
        )
        .collect();
    assert!(unexpected.is_empty(), "{}", unexpected.join("\n"));
}
