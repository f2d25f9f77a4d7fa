//! Deterministic stand-in for the vendor flow.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::cost::{model_impl_report, model_report};
use super::{write_bundle, Backend, Job, StageRun, StageStatus};
use crate::config::{ForcedFailure, MockSettings, Stage};
use crate::reports::{render_csynth_xml, render_impl_util, DeviceCapacity};

/// Counts stages in flight and remembers the maximum seen.
#[derive(Debug, Default)]
pub struct ConcurrencyProbe {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ConcurrencyProbe {
    fn enter(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

type DurationFn = dyn Fn(&Job, Stage) -> Duration + Send + Sync;

pub struct MockBackend {
    stage_time: Duration,
    durations: Option<Box<DurationFn>>,
    failures: Vec<ForcedFailure>,
    panics: Vec<String>,
    probe: Arc<ConcurrencyProbe>,
    device: DeviceCapacity,
}

impl MockBackend {
    pub fn new(settings: &MockSettings) -> Self {
        MockBackend {
            stage_time: Duration::from_millis(settings.stage_ms),
            durations: None,
            failures: settings.failures.clone(),
            panics: Vec::new(),
            probe: Arc::new(ConcurrencyProbe::default()),
            device: DeviceCapacity::zcu102(),
        }
    }

    /// Per-stage durations instead of the fixed `stage_ms`.
    pub fn with_durations(mut self, f: impl Fn(&Job, Stage) -> Duration + Send + Sync + 'static) -> Self {
        self.durations = Some(Box::new(f));
        self
    }

    /// Make the backend panic inside the named design's first stage.
    pub fn panic_on(mut self, design: &str) -> Self {
        self.panics.push(design.to_string());
        self
    }

    pub fn with_device(mut self, device: DeviceCapacity) -> Self {
        self.device = device;
        self
    }

    pub fn probe(&self) -> Arc<ConcurrencyProbe> {
        Arc::clone(&self.probe)
    }

    fn write_report(&self, job: &Job, file: &str, text: String) -> Result<PathBuf, String> {
        let dir = job.reports_dir();
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let path = dir.join(file);
        fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(path)
    }

    fn stage_body(&self, job: &Job, stage: Stage, timeout: Duration) -> StageRun {
        if self.panics.contains(&job.id) {
            panic!("mock backend asked to panic on {}", job.id);
        }
        let wanted = self
            .durations
            .as_ref()
            .map_or(self.stage_time, |f| f(job, stage));
        thread::sleep(wanted.min(timeout));
        if wanted > timeout {
            return StageRun::failed(StageStatus::Timeout, format!("stage needs {wanted:?}, limit {timeout:?}"));
        }
        if self.failures.iter().any(|f| f.design == job.id && f.stage == stage) {
            return StageRun::failed(StageStatus::Fail, format!("forced {} failure", stage.name()));
        }
        let cfg = &job.design;
        let report = match stage {
            Stage::Synth => {
                let r = model_report(cfg);
                Some(("csynth.xml", render_csynth_xml(&r, &cfg.synth.part, cfg.synth.clock_period_ns, &self.device)))
            }
            Stage::Impl => {
                let r = model_impl_report(cfg);
                Some(("export.rpt", render_impl_util(&r, &cfg.synth.part, cfg.synth.clock_period_ns)))
            }
            Stage::Csim | Stage::Cosim => None,
        };
        let mut run = StageRun::pass();
        run.log = format!("{}: {} ok (mock)", job.id, stage.name());
        if let Some((file, text)) = report {
            match self.write_report(job, file, text) {
                Ok(p) => run.reports.push(p),
                Err(e) => return StageRun::failed(StageStatus::Fail, e),
            }
        }
        run
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn prepare(&self, job: &Job) -> Result<(), String> {
        // no simulation happens, so skip the oracle run a testbench would need
        write_bundle(job, false).map(|_| ())
    }

    fn run_stage(&self, job: &Job, stage: Stage, timeout: Duration) -> StageRun {
        struct Guard<'a>(&'a ConcurrencyProbe);
        impl Drop for Guard<'_> {
            fn drop(&mut self) {
                self.0.exit();
            }
        }
        self.probe.enter();
        let _guard = Guard(&self.probe);
        self.stage_body(job, stage, timeout)
    }
}
