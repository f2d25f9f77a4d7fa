//! Parallel execution of HLS flows over many designs.
//!
//! Jobs are taken FIFO by a bounded pool of worker threads; results come
//! back in input order. Stages within a job run sequentially and a stage
//! that does not pass marks every later stage skipped.

mod cost;
mod mock;
mod vendor;

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{emit_design, golden_vectors, attach_testbench, SourceBundle};
use crate::config::{DataType, DesignConfig, RunConfig, Stage};

pub use cost::{model_report, CostBreakdown, Resources, COST_MODEL_VERSION};
pub use mock::{ConcurrencyProbe, MockBackend};
pub use vendor::{render_command, VendorBackend, TOOL_ENV};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("HLS tool not found: {0}")]
    ToolNotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct Job {
    pub id: String,
    pub design: DesignConfig,
    /// `<out>/jobs/<name>/`
    pub workdir: PathBuf,
    /// Source bundle root inside the work directory.
    pub bundle: PathBuf,
    /// Subset of the flow, in execution order.
    pub stages: Vec<Stage>,
    pub timeout: Duration,
}

impl Job {
    pub fn reports_dir(&self) -> PathBuf {
        self.workdir.join("reports")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.workdir.join("logs")
    }
}

/// One job per design, stages taken from each design's flow.
pub fn plan_jobs(configs: &[DesignConfig], run: &RunConfig) -> Vec<Job> {
    configs
        .iter()
        .map(|cfg| {
            let workdir = run.output_dir.join("jobs").join(&cfg.name);
            let mut stages = cfg.synth.flow.clone();
            stages.sort();
            stages.dedup();
            Job {
                id: cfg.name.clone(),
                design: cfg.clone(),
                bundle: workdir.join(&cfg.name),
                workdir,
                stages,
                timeout: Duration::from_secs(run.timeout_s),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pass,
    Fail,
    Timeout,
    Skipped,
}

/// What a backend reports for one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRun {
    pub status: StageStatus,
    pub message: Option<String>,
    pub reports: Vec<PathBuf>,
    pub log: String,
}

impl StageRun {
    pub fn pass() -> Self {
        StageRun {
            status: StageStatus::Pass,
            message: None,
            reports: Vec::new(),
            log: String::new(),
        }
    }

    pub fn failed(status: StageStatus, message: impl Into<String>) -> Self {
        StageRun {
            status,
            message: Some(message.into()),
            ..StageRun::pass()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub id: String,
    pub stages: Vec<StageOutcome>,
    pub wall_s: f64,
    pub reports: Vec<PathBuf>,
    pub log_excerpt: String,
}

impl JobResult {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Pass)
    }

    /// Copy with wall times zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> JobResult {
        let mut r = self.clone();
        r.wall_s = 0.0;
        for s in &mut r.stages {
            s.wall_s = 0.0;
        }
        r
    }
}

/// An HLS flow implementation. Must be safe to call concurrently on distinct jobs.
pub trait Backend: Sync {
    fn name(&self) -> &'static str;

    /// Checked once before any job starts.
    fn check_available(&self) -> Result<(), RunnerError> {
        Ok(())
    }

    /// Materialize whatever the stages need (sources, scripts) under the job's workdir.
    fn prepare(&self, job: &Job) -> Result<(), String> {
        write_bundle(job, true).map(|_| ())
    }

    /// Run one stage, giving up (and reporting `Timeout`) after `timeout`.
    fn run_stage(&self, job: &Job, stage: Stage, timeout: Duration) -> StageRun;
}

/// Emit the job's bundle. A testbench is included when asked for, the flow
/// simulates, and the data type has an oracle. Returns whether it was included.
pub fn write_bundle(job: &Job, want_testbench: bool) -> Result<(SourceBundle, bool), String> {
    let cfg = &job.design;
    let simulates = job.stages.iter().any(|s| matches!(s, Stage::Csim | Stage::Cosim));
    let with_tb = want_testbench && simulates && !matches!(cfg.synth.data_type, DataType::Opaque(_));
    let mut bundle = emit_design(cfg).map_err(|e| e.to_string())?;
    if with_tb {
        let vectors = golden_vectors(cfg, 0).map_err(|e| e.to_string())?;
        attach_testbench(&mut bundle, cfg, &vectors).map_err(|e| e.to_string())?;
    }
    bundle.write(&job.workdir).map_err(|e| format!("{}: {e}", job.workdir.display()))?;
    Ok((bundle, with_tb))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn run_job(job: &Job, backend: &dyn Backend) -> JobResult {
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(job.stages.len());
    let mut reports = Vec::new();
    let mut log = String::new();
    let prepared = panic::catch_unwind(AssertUnwindSafe(|| backend.prepare(job)))
        .unwrap_or_else(|p| Err(format!("backend panicked: {}", panic_message(p))));
    let mut blocked = prepared.err();
    for &stage in &job.stages {
        if let Some(reason) = blocked.take() {
            outcomes.push(StageOutcome {
                stage,
                status: StageStatus::Fail,
                wall_s: 0.0,
                message: Some(reason),
            });
            break;
        }
        let t0 = Instant::now();
        let mut run = panic::catch_unwind(AssertUnwindSafe(|| backend.run_stage(job, stage, job.timeout)))
            .unwrap_or_else(|p| StageRun::failed(StageStatus::Fail, format!("backend panicked: {}", panic_message(p))));
        let elapsed = t0.elapsed();
        if run.status == StageStatus::Pass && elapsed > job.timeout {
            run = StageRun::failed(StageStatus::Timeout, format!("exceeded {:?}", job.timeout));
        }
        reports.extend(run.reports);
        if !run.log.is_empty() {
            log = run.log;
        }
        let ok = run.status == StageStatus::Pass;
        outcomes.push(StageOutcome {
            stage,
            status: run.status,
            wall_s: elapsed.as_secs_f64(),
            message: run.message,
        });
        if !ok {
            break;
        }
    }
    for &stage in &job.stages[outcomes.len()..] {
        outcomes.push(StageOutcome {
            stage,
            status: StageStatus::Skipped,
            wall_s: 0.0,
            message: None,
        });
    }
    JobResult {
        id: job.id.clone(),
        stages: outcomes,
        wall_s: start.elapsed().as_secs_f64(),
        reports,
        log_excerpt: log,
    }
}

/// Run every job with at most `workers` in flight. Individual failures never abort the batch.
pub fn execute(jobs: &[Job], backend: &dyn Backend, workers: usize) -> Result<Vec<JobResult>, RunnerError> {
    backend.check_available()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<JobResult>>> = Mutex::new(vec![None; jobs.len()]);
    let threads = workers.max(1).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                log::debug!("job {} starting on {}", job.id, backend.name());
                let result = run_job(job, backend);
                slots.lock().expect("no poisoning: jobs run under catch_unwind")[i] = Some(result);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub backend: String,
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model: Option<String>,
    pub jobs: Vec<JobResult>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.jobs.iter().all(JobResult::passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes `<out>/run_results.json`.
    pub fn write(&self, out: &Path) -> Result<PathBuf, RunnerError> {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let path = out.join("run_results.json");
        std::fs::write(&path, self.to_json()).map_err(io_err(&path))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MockSettings;

    fn design(name: &str, flow: &[Stage]) -> DesignConfig {
        let text = format!(
            r#"{{"name": "{name}", "interfaces": [
                {{"name": "A", "direction": "in", "shape": [2, 3]}},
                {{"name": "B", "direction": "in", "shape": [3, 2]}},
                {{"name": "C", "direction": "out", "shape": [2, 2]}}],
              "calls": [{{"kernel": "gemm", "params": {{"m": 2, "k": 3, "n": 2}},
                          "inputs": ["A", "B"], "outputs": ["C"]}}],
              "synth": {{"flow": {}}}}}"#,
            serde_json::to_string(&flow.iter().map(|s| s.name()).collect::<Vec<_>>()).unwrap()
        );
        crate::config::parse_design_config(&text).unwrap()
    }

    fn run_cfg(out: &Path) -> RunConfig {
        RunConfig {
            output_dir: out.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn plan_follows_flow() {
        let dir = tempfile::tempdir().unwrap();
        let jobs = plan_jobs(
            &[design("a", &[Stage::Csim]), design("b", &Stage::ALL), design("c", &[Stage::Synth])],
            &run_cfg(dir.path()),
        );
        assert_eq!(jobs.len(), 3);
        assert_eq!(jobs[0].stages, vec![Stage::Csim]);
        assert_eq!(jobs[1].stages, Stage::ALL.to_vec());
        assert!(jobs[2].workdir.ends_with("jobs/c"));
        assert!(plan_jobs(&[], &run_cfg(dir.path())).is_empty());
    }

    #[test]
    fn failure_skips_later_stages_and_isolates_panics() {
        let dir = tempfile::tempdir().unwrap();
        let cfgs = [design("a", &Stage::ALL), design("b", &Stage::ALL), design("c", &Stage::ALL)];
        let jobs = plan_jobs(&cfgs, &run_cfg(dir.path()));
        let backend = MockBackend::new(&MockSettings {
            stage_ms: 0,
            failures: vec![crate::config::ForcedFailure {
                design: "a".into(),
                stage: Stage::Synth,
            }],
        })
        .panic_on("b");
        let results = execute(&jobs, &backend, 2).unwrap();
        let statuses: Vec<StageStatus> = results[0].stages.iter().map(|s| s.status).collect();
        assert_eq!(
            statuses,
            vec![StageStatus::Pass, StageStatus::Fail, StageStatus::Skipped, StageStatus::Skipped]
        );
        assert_eq!(results[1].stages[0].status, StageStatus::Fail);
        assert!(results[1].stages[0].message.as_deref().unwrap().contains("panicked"));
        assert!(results[2].passed());
        assert!(results[2].reports.iter().any(|p| p.ends_with("csynth.xml")));
    }

    #[test]
    fn stage_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let mut jobs = plan_jobs(&[design("slow", &[Stage::Synth, Stage::Impl])], &run_cfg(dir.path()));
        jobs[0].timeout = Duration::from_millis(1);
        let backend = MockBackend::new(&MockSettings {
            stage_ms: 100,
            failures: vec![],
        });
        let r = &execute(&jobs, &backend, 1).unwrap()[0];
        assert_eq!(r.stages[0].status, StageStatus::Timeout);
        assert_eq!(r.stages[1].status, StageStatus::Skipped);
    }
}
