//! `forgebench` command-line entry point.
//!
//! Exit codes: 0 success, 1 domain failure (invalid design, failed job,
//! unsupported request), 2 environment or parse failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use forgebench_core::codegen::{generate, CodegenError};
use forgebench_core::config::{parse_design_config, parse_run_config, BackendKind, RunConfig};
use forgebench_core::modularize::{
    check_fidelity, emit_modular_design, parse_programs, plan_shared, shared_kernel_design, standalone_design,
    ModularizeError, Policy,
};
use forgebench_core::reports::{
    aggregate_suite, parse_report, render_modular_table, DeviceCapacity, ModularSpec, PPAReport, ReportFormat,
    SuiteEntry,
};
use forgebench_core::runner::{
    execute, plan_jobs, Backend, MockBackend, RunSummary, RunnerError, StageStatus, VendorBackend,
    COST_MODEL_VERSION,
};
use forgebench_core::sweep::{builtin_suite, expand_grid, parse_sweep_spec, write_suite, SweepError};
use forgebench_core::{validate_design, DesignConfig, KernelCatalog};

#[derive(Parser)]
#[command(name = "forgebench", version, about = "Generate, sweep, modularize, run and report HLS benchmark designs")]
struct Cli {
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a design config against the schema, the kernel catalog and dataflow rules.
    Validate { config: PathBuf },
    /// Emit the C++ source bundle and build script for a design.
    Generate {
        config: PathBuf,
        #[arg(long, default_value = "forgebench_out")]
        out: PathBuf,
        /// Also emit a self-checking testbench with golden vectors.
        #[arg(long)]
        with_testbench: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Expand a built-in suite (gemm, dnn, llm) or a sweep spec file into design configs.
    Sweep {
        suite: String,
        #[arg(long, default_value = "forgebench_out")]
        out: PathBuf,
    },
    /// Plan a shared tile for several programs and emit the modular design.
    Modularize {
        programs: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Min)]
        policy: PolicyArg,
        #[arg(long, default_value = "forgebench_out")]
        out: PathBuf,
        /// Compare the modular design against direct evaluation before writing.
        #[arg(long)]
        check: bool,
    },
    /// Run tool flows for a directory of design configs (or one config).
    Run {
        target: PathBuf,
        /// Run config JSON (backend, workers, timeout, command template, mock settings).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for scripts; every job always runs and any failure still exits 1.
        #[arg(long)]
        keep_going: bool,
    },
    /// Summarize a run's reports against a device, optionally with modularization rows.
    Report {
        results: PathBuf,
        #[arg(long)]
        device: PathBuf,
        /// Row spec for before/after modularization tables.
        #[arg(long)]
        modular: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Vendor,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn domain(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: e.into(),
    }
}

fn env(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

type Outcome = Result<u8, Failure>;

struct Ctx {
    json: bool,
}

impl Ctx {
    fn emit(&self, human: impl FnOnce() -> String, machine: impl FnOnce() -> serde_json::Value) {
        let text = if self.json {
            serde_json::to_string_pretty(&machine()).expect("json")
        } else {
            human().trim_end().to_string()
        };
        if text.is_empty() {
            return;
        }
        // a closed pipe (`| head`) is not worth a panic
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{text}").and_then(|_| out.flush());
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(env)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(env)?;
    }
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(env)
}

fn load_design(path: &Path) -> Result<DesignConfig, Failure> {
    parse_design_config(&read(path)?)
        .with_context(|| format!("{}", path.display()))
        .map_err(env)
}

fn cmd_validate(ctx: &Ctx, config: &Path) -> Outcome {
    let cfg = load_design(config)?;
    let report = validate_design(&cfg, &KernelCatalog::standard());
    let messages = report.messages();
    ctx.emit(
        || {
            if messages.is_empty() {
                format!("{}: ok", cfg.name)
            } else {
                messages.iter().map(|m| format!("{}: {m}\n", cfg.name)).collect()
            }
        },
        || json!({"design": cfg.name, "valid": messages.is_empty(), "diagnostics": messages}),
    );
    Ok(u8::from(!report.is_empty()))
}

fn cmd_generate(ctx: &Ctx, config: &Path, out: &Path, with_testbench: bool, seed: u64) -> Outcome {
    let cfg = load_design(config)?;
    let bundle = generate(&cfg, with_testbench, seed).map_err(|e| match e {
        CodegenError::Validation(msgs) => domain(anyhow!("{}: invalid design:\n  {}", cfg.name, msgs.join("\n  "))),
        other => domain(anyhow!("{}: {other}", cfg.name)),
    })?;
    let root = bundle
        .write(out)
        .with_context(|| format!("cannot write bundle under {}", out.display()))
        .map_err(env)?;
    let files: Vec<String> = bundle.units.iter().map(|(_, u)| u.path.clone()).collect();
    ctx.emit(
        || {
            let mut s = format!("{} -> {}\n", cfg.name, root.display());
            for f in &files {
                s += &format!("  {f}\n");
            }
            s
        },
        || json!({"design": cfg.name, "root": root, "files": files, "functions": bundle.functions}),
    );
    Ok(0)
}

fn cmd_sweep(ctx: &Ctx, suite: &str, out: &Path) -> Outcome {
    let spec = match builtin_suite(suite) {
        Some(s) => s,
        None => {
            let path = Path::new(suite);
            if !path.exists() {
                return Err(env(anyhow!("\"{suite}\" is neither a built-in suite (gemm, dnn, llm) nor a file")));
            }
            parse_sweep_spec(&read(path)?).map_err(|e| match e {
                SweepError::Spec(_) => env(e),
                other => domain(other),
            })?
        }
    };
    let configs = expand_grid(&spec).map_err(domain)?;
    let dir = out.join(&spec.suite);
    let manifest = write_suite(&spec.suite, &configs, &dir).map_err(|e| match e {
        SweepError::Io { .. } => env(e),
        other => domain(other),
    })?;
    ctx.emit(
        || format!("{}: {} configs -> {}", spec.suite, manifest.count, dir.display()),
        || json!({"suite": spec.suite, "count": manifest.count, "dir": dir}),
    );
    Ok(0)
}

fn tuple(v: &[usize]) -> String {
    format!("({})", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

fn cmd_modularize(ctx: &Ctx, programs: &Path, policy: PolicyArg, out: &Path, check: bool) -> Outcome {
    let parsed = parse_programs(&read(programs)?).map_err(|e| match e {
        ModularizeError::Spec(_) => env(e),
        other => domain(other),
    })?;
    let policy = match policy {
        PolicyArg::Min => Policy::MinGcd,
        PolicyArg::Max => Policy::MaxFit,
    };
    let plan = plan_shared(&parsed.dims, policy).map_err(domain)?;
    write(&out.join("plan.json"), &plan.to_json_string())?;

    let mut notes = Vec::new();
    let mut written = Vec::new();
    if let Some(specs) = &parsed.specs {
        match emit_modular_design(&parsed.name, &plan, specs) {
            Ok(design) => {
                if check {
                    for e in check_fidelity(&design, &plan, specs, 0).map_err(|e| domain(anyhow!(e)))? {
                        if !e.bit_exact {
                            return Err(domain(anyhow!("{}: modular output differs by {:e}", e.id, e.max_abs_diff)));
                        }
                    }
                    notes.push("fidelity: bit-exact against direct evaluation".to_string());
                }
                let dir = out.join("designs");
                let shared_name = format!("{}_shared", parsed.name);
                let mut designs = vec![design.clone(), shared_kernel_design(&shared_name, &design)];
                for ((id, _), spec) in parsed.dims.iter().zip(specs) {
                    designs.push(standalone_design(id, spec).map_err(domain)?);
                }
                for d in &designs {
                    let path = dir.join(format!("{}.json", d.name));
                    write(&path, &d.to_json_string())?;
                    written.push(path);
                }
                let rows = json!({"rows": [{
                    "name": parsed.name,
                    "before": parsed.dims.iter().map(|(id, _)| id).collect::<Vec<_>>(),
                    "shared": shared_name,
                    "after": parsed.name,
                }]});
                let path = out.join("modular.json");
                write(&path, &(serde_json::to_string_pretty(&rows).expect("json") + "\n"))?;
                written.push(path);
            }
            Err(ModularizeError::Unsupported(m)) => notes.push(format!("no modular design emitted: {m}")),
            Err(e) => return Err(domain(e)),
        }
    }
    ctx.emit(
        || {
            let mut s = format!("tile {} [{}]\n", tuple(&plan.shared.tile), plan.shared.policy);
            for p in &plan.programs {
                s += &format!(
                    "  {}: dims {} grid {} iterations {} padding {}\n",
                    p.id,
                    tuple(&p.dims),
                    tuple(&p.grid),
                    p.iterations,
                    tuple(&p.padding)
                );
            }
            for n in &notes {
                s += &format!("{n}\n");
            }
            s
        },
        || json!({"plan": plan, "notes": notes, "written": written}),
    );
    Ok(0)
}

fn load_targets(target: &Path) -> Result<Vec<DesignConfig>, Failure> {
    if target.is_file() {
        return Ok(vec![load_design(target)?]);
    }
    let entries = fs::read_dir(target)
        .with_context(|| format!("cannot read {}", target.display()))
        .map_err(env)?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_design(p)).collect()
}

fn cmd_run(
    ctx: &Ctx,
    target: &Path,
    config: Option<&Path>,
    backend: Option<BackendArg>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Outcome {
    let mut run = match config {
        Some(p) => parse_run_config(&read(p)?)
            .with_context(|| format!("{}", p.display()))
            .map_err(env)?,
        None => RunConfig::default(),
    };
    if let Some(b) = backend {
        run.backend = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Vendor => BackendKind::Vendor,
        };
    }
    if let Some(w) = workers {
        if w == 0 {
            return Err(env(anyhow!("--workers must be >= 1")));
        }
        run.workers = w;
    }
    if let Some(o) = out {
        run.output_dir = o.to_path_buf();
    }
    let configs = load_targets(target)?;
    let catalog = KernelCatalog::standard();
    for cfg in &configs {
        let report = validate_design(cfg, &catalog);
        if !report.is_empty() {
            return Err(domain(anyhow!("{}: invalid design:\n  {}", cfg.name, report.messages().join("\n  "))));
        }
    }
    let jobs = plan_jobs(&configs, &run);
    let mock;
    let vendor;
    let (backend, cost_model): (&dyn Backend, Option<String>) = match run.backend {
        BackendKind::Mock => {
            mock = MockBackend::new(&run.mock);
            (&mock, Some(COST_MODEL_VERSION.to_string()))
        }
        BackendKind::Vendor => {
            vendor = VendorBackend::from_run(&run);
            (&vendor, None)
        }
    };
    let results = execute(&jobs, backend, run.workers).map_err(|e| match e {
        RunnerError::ToolNotFound(_) | RunnerError::BackendUnavailable(_) | RunnerError::Io { .. } => env(e),
    })?;
    let summary = RunSummary {
        backend: backend.name().to_string(),
        workers: run.workers,
        cost_model,
        jobs: results,
    };
    let path = summary.write(&run.output_dir).map_err(env)?;
    ctx.emit(
        || {
            let mut s = String::new();
            for j in &summary.jobs {
                let bad = j.stages.iter().find(|s| !matches!(s.status, StageStatus::Pass));
                match bad {
                    None => s += &format!("{}: pass\n", j.id),
                    Some(st) => {
                        s += &format!(
                            "{}: {:?} at {}{}\n",
                            j.id,
                            st.status,
                            st.stage.name(),
                            st.message.as_ref().map(|m| format!(" ({m})")).unwrap_or_default()
                        )
                    }
                }
            }
            let passed = summary.jobs.iter().filter(|j| j.passed()).count();
            s + &format!("{passed}/{} passed; results in {}", summary.jobs.len(), path.display())
        },
        || serde_json::to_value(&summary).expect("json"),
    );
    Ok(u8::from(!summary.all_passed()))
}

/// The job's implementation report if present, else its synthesis report.
/// Implementation reports carry no latency, so it is taken from synthesis.
fn job_report(results: &Path, id: &str) -> Result<Option<PPAReport>, Failure> {
    let dir = results.join("jobs").join(id).join("reports");
    let load = |file: &str, format: ReportFormat| -> Result<Option<PPAReport>, Failure> {
        let path = dir.join(file);
        if !path.exists() {
            return Ok(None);
        }
        let mut r = parse_report(&read(&path)?, format)
            .with_context(|| format!("{}", path.display()))
            .map_err(env)?;
        r.design = id.to_string();
        Ok(Some(r))
    };
    let synth = load("csynth.xml", ReportFormat::CsynthXml)?;
    Ok(match load("export.rpt", ReportFormat::ImplUtil)? {
        Some(mut r) => {
            if r.latency_cycles.is_none() {
                r.latency_cycles = synth.and_then(|s| s.latency_cycles);
            }
            Some(r)
        }
        None => synth,
    })
}

fn cmd_report(ctx: &Ctx, results: &Path, device: &Path, modular: Option<&Path>, out: Option<&Path>) -> Outcome {
    let cap = DeviceCapacity::from_json(&read(device)?)
        .with_context(|| format!("{}", device.display()))
        .map_err(env)?;
    let summary: RunSummary = serde_json::from_str(&read(&results.join("run_results.json"))?)
        .context("run_results.json")
        .map_err(env)?;
    let out = out.unwrap_or(results);
    let mut reports = BTreeMap::new();
    let mut entries = Vec::new();
    for job in &summary.jobs {
        let report = job_report(results, &job.id)?;
        if let Some(r) = &report {
            reports.insert(job.id.clone(), r.clone());
        }
        entries.push(SuiteEntry {
            design: job.id.clone(),
            report,
            passed: job.passed(),
        });
    }
    let table = aggregate_suite(&entries, &cap);
    write(&out.join("summary.csv"), &table.to_csv())?;
    write(&out.join("summary.json"), &table.to_json())?;

    let mut rows = Vec::new();
    if let Some(spec_path) = modular {
        let spec = ModularSpec::from_json(&read(spec_path)?)
            .with_context(|| format!("{}", spec_path.display()))
            .map_err(env)?;
        for row in &spec.rows {
            rows.push(row.resolve(&cap, |id| reports.get(id).cloned()).map_err(|e| domain(anyhow!(e)))?);
        }
        write(&out.join("modular_table.md"), &render_modular_table(&rows))?;
        write(
            &out.join("modular_table.json"),
            &(serde_json::to_string_pretty(&rows).expect("json") + "\n"),
        )?;
    }
    ctx.emit(
        || {
            let mut s = format!("{} designs on {} -> {}\n", table.rows.len(), cap.part, out.join("summary.csv").display());
            for r in &rows {
                s += &format!("{}: before {} after {} change {}\n", r.name, r.total_before, r.total_after, r.change);
            }
            s
        },
        || json!({"summary": table, "modular": rows}),
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ctx = Ctx { json: cli.json };
    let outcome = match &cli.command {
        Command::Validate { config } => cmd_validate(&ctx, config),
        Command::Generate {
            config,
            out,
            with_testbench,
            seed,
        } => cmd_generate(&ctx, config, out, *with_testbench, *seed),
        Command::Sweep { suite, out } => cmd_sweep(&ctx, suite, out),
        Command::Modularize {
            programs,
            policy,
            out,
            check,
        } => cmd_modularize(&ctx, programs, *policy, out, *check),
        Command::Run {
            target,
            config,
            backend,
            workers,
            out,
            keep_going: _,
        } => cmd_run(&ctx, target, config.as_deref(), *backend, *workers, out.as_deref()),
        Command::Report {
            results,
            device,
            modular,
            out,
        } => cmd_report(&ctx, results, device, modular.as_deref(), out.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
