//! External HLS tool backend (Vitis HLS by default).
//!
//! Each stage runs its own script through the configured command template in
//! a fresh process group, so a timeout can kill the tool and its children.

use std::fs::{self, File};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{write_bundle, Backend, Job, RunnerError, StageRun, StageStatus};
use crate::codegen::{emit_stage_script, project_dir};
use crate::config::{RunConfig, Stage};

/// Replaces the program (first word) of the command template when set.
pub const TOOL_ENV: &str = "FORGEBENCH_HLS_TOOL";

const LOG_TAIL_LINES: usize = 20;

pub struct VendorBackend {
    template: String,
}

/// Substitute `{script}`, `{workdir}` and `{log}` in a command template.
pub fn render_command(template: &str, script: &Path, workdir: &Path, log: &Path) -> String {
    template
        .replace("{script}", &script.display().to_string())
        .replace("{workdir}", &workdir.display().to_string())
        .replace("{log}", &log.display().to_string())
}

fn find_program(program: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        use std::os::unix::fs::PermissionsExt;
        p.metadata().map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0).unwrap_or(false)
    };
    if program.contains('/') {
        let p = PathBuf::from(program);
        return is_exec(&p).then_some(p);
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(program))
            .find(|p| is_exec(p))
    })
}

fn tail(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

impl VendorBackend {
    /// Uses the run config's template, with the program overridden by `FORGEBENCH_HLS_TOOL`.
    pub fn from_run(run: &RunConfig) -> Self {
        Self::with_override(&run.command, std::env::var(TOOL_ENV).ok().as_deref())
    }

    pub fn with_override(template: &str, tool: Option<&str>) -> Self {
        let template = match tool.filter(|t| !t.is_empty()) {
            Some(tool) => {
                let rest = template.trim_start();
                let args = rest.find(char::is_whitespace).map_or("", |i| &rest[i..]);
                format!("{tool}{args}")
            }
            None => template.to_string(),
        };
        VendorBackend { template }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    fn program(&self) -> &str {
        self.template.split_whitespace().next().unwrap_or("")
    }

    fn collect_reports(&self, job: &Job, stage: Stage) -> Vec<PathBuf> {
        let sol = job.bundle.join(project_dir(&job.design)).join("solution1");
        let (from, name) = match stage {
            Stage::Synth => (sol.join("syn/report/csynth.xml"), "csynth.xml"),
            Stage::Impl => (sol.join("impl/report/verilog/export_impl.rpt"), "export.rpt"),
            _ => return Vec::new(),
        };
        let to = job.reports_dir().join(name);
        match fs::create_dir_all(job.reports_dir()).and_then(|_| fs::copy(&from, &to)) {
            Ok(_) => vec![to],
            Err(_) => Vec::new(),
        }
    }
}

fn kill_group(pid: u32) {
    // SAFETY: kill(2) with a negative pid signals the process group we created.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

impl Backend for VendorBackend {
    fn name(&self) -> &'static str {
        "vendor"
    }

    fn check_available(&self) -> Result<(), RunnerError> {
        match find_program(self.program()) {
            Some(_) => Ok(()),
            None => Err(RunnerError::ToolNotFound(self.program().to_string())),
        }
    }

    fn prepare(&self, job: &Job) -> Result<(), String> {
        let (_, with_tb) = write_bundle(job, true)?;
        for &stage in &job.stages {
            let unit = emit_stage_script(&job.design, with_tb, stage);
            let path = job.bundle.join(&unit.path);
            fs::write(&path, unit.text).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        fs::create_dir_all(job.logs_dir()).map_err(|e| format!("{}: {e}", job.logs_dir().display()))
    }

    fn run_stage(&self, job: &Job, stage: Stage, timeout: Duration) -> StageRun {
        let abs = |p: PathBuf| std::path::absolute(&p).unwrap_or(p);
        let bundle = abs(job.bundle.clone());
        let script = bundle.join(format!("scripts/stage_{}.tcl", stage.name()));
        let log = abs(job.logs_dir().join(format!("{}.log", stage.name())));
        let out_path = abs(job.logs_dir().join(format!("{}.out", stage.name())));
        let cmd = render_command(&self.template, &script, &bundle, &log);
        let spawned = File::create(&out_path).and_then(|out| {
            let err = out.try_clone()?;
            Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .current_dir(&bundle)
                .stdin(Stdio::null())
                .stdout(out)
                .stderr(err)
                .process_group(0)
                .spawn()
        });
        let mut child = match spawned {
            Ok(c) => c,
            Err(e) => return StageRun::failed(StageStatus::Fail, format!("cannot start `{cmd}`: {e}")),
        };
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= timeout => {
                    kill_group(child.id());
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => thread::sleep(Duration::from_millis(20)),
                Err(e) => return StageRun::failed(StageStatus::Fail, format!("wait failed: {e}")),
            }
        };
        let captured = fs::read_to_string(&log)
            .or_else(|_| fs::read_to_string(&out_path))
            .unwrap_or_default();
        let mut run = match status {
            None => StageRun::failed(StageStatus::Timeout, format!("killed after {timeout:?}")),
            Some(s) if s.success() => StageRun::pass(),
            Some(s) => StageRun::failed(
                StageStatus::Fail,
                match s.code() {
                    Some(c) => format!("exit code {c}"),
                    None => "terminated by signal".to_string(),
                },
            ),
        };
        run.log = tail(&captured, LOG_TAIL_LINES);
        if run.status == StageStatus::Pass {
            run.reports = self.collect_reports(job, stage);
        }
        run
    }
}
