use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::time::{Duration, Instant};

use forgebench_core::config::{MockSettings, RunConfig};
use forgebench_core::reports::{parse_report, ReportFormat};
use forgebench_core::runner::{execute, model_report, plan_jobs, MockBackend, StageStatus, VendorBackend};
use forgebench_core::sweep::{builtin_suite, expand_grid};
use forgebench_core::{parse_design_config, DesignConfig};

fn gemm(name: &str, n: usize, flow: &str) -> DesignConfig {
    parse_design_config(&format!(
        r#"{{"name": "{name}", "interfaces": [
            {{"name": "A", "direction": "in", "shape": [{n}, 3]}},
            {{"name": "B", "direction": "in", "shape": [3, 2]}},
            {{"name": "C", "direction": "out", "shape": [{n}, 2]}}],
          "calls": [{{"kernel": "gemm", "params": {{"m": {n}, "k": 3, "n": 2, "unroll": [1, 1, {u}]}},
                      "inputs": ["A", "B"], "outputs": ["C"]}}],
          "synth": {{"flow": {flow}}}}}"#,
        u = 1 + n % 3
    ))
    .unwrap()
}

fn designs(count: usize) -> Vec<DesignConfig> {
    (0..count)
        .map(|i| gemm(&format!("d{i:02}"), 1 + i % 7, r#"["csim", "synth", "impl"]"#))
        .collect()
}

fn run_cfg(out: &Path) -> RunConfig {
    RunConfig {
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn mock_results_do_not_depend_on_worker_count() {
    let cfgs = designs(12);
    let mut baseline = None;
    for workers in [1, 4, 16] {
        let dir = tempfile::tempdir().unwrap();
        let jobs = plan_jobs(&cfgs, &run_cfg(dir.path()));
        let backend = MockBackend::new(&MockSettings::default());
        let results: Vec<_> = execute(&jobs, &backend, workers)
            .unwrap()
            .iter()
            .map(|r| {
                let mut r = r.without_timing();
                r.reports = r.reports.iter().map(|p| p.strip_prefix(dir.path()).unwrap().to_path_buf()).collect();
                let texts: Vec<String> = r.reports.iter().map(|p| fs::read_to_string(dir.path().join(p)).unwrap()).collect();
                (r, texts)
            })
            .collect();
        match &baseline {
            None => baseline = Some(results),
            Some(b) => assert_eq!(b, &results, "workers={workers}"),
        }
    }
}

#[test]
fn concurrency_never_exceeds_the_worker_cap() {
    let cfgs = designs(32);
    for workers in [1, 2, 4, 8] {
        let dir = tempfile::tempdir().unwrap();
        let jobs = plan_jobs(&cfgs, &run_cfg(dir.path()));
        let backend = MockBackend::new(&MockSettings {
            stage_ms: 3,
            failures: vec![],
        });
        let probe = backend.probe();
        let results = execute(&jobs, &backend, workers).unwrap();
        assert!(results.iter().all(|r| r.passed()));
        assert!(probe.peak() <= workers, "peak {} > {workers}", probe.peak());
        if workers > 1 {
            assert!(probe.peak() > 1, "expected overlap with {workers} workers");
        }
    }
}

#[test]
fn order_is_input_order_under_shuffled_durations() {
    let cfgs = designs(16);
    let dir = tempfile::tempdir().unwrap();
    let jobs = plan_jobs(&cfgs, &run_cfg(dir.path()));
    let backend = MockBackend::new(&MockSettings::default()).with_durations(|job, _| {
        let h = job.id.bytes().fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
        Duration::from_millis(h % 17)
    });
    let results = execute(&jobs, &backend, 4).unwrap();
    let ids: Vec<&str> = results.iter().map(|r| r.id.as_str()).collect();
    let want: Vec<&str> = cfgs.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(ids, want);
}

#[test]
fn mock_report_parses_back_to_the_model() {
    let cfg = &expand_grid(&builtin_suite("dnn").unwrap()).unwrap()[77];
    let dir = tempfile::tempdir().unwrap();
    let jobs = plan_jobs(std::slice::from_ref(cfg), &run_cfg(dir.path()));
    let r = &execute(&jobs, &MockBackend::new(&MockSettings::default()), 1).unwrap()[0];
    let xml = fs::read_to_string(&r.reports[0]).unwrap();
    assert_eq!(parse_report(&xml, ReportFormat::CsynthXml).unwrap(), model_report(cfg));
}

fn fake_tool(dir: &Path, body: &str) -> String {
    let path = dir.join("fake_hls");
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path.display().to_string()
}

#[test]
fn vendor_backend_records_exit_codes_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    // fails synthesis with exit 2, passes everything else
    let tool = fake_tool(
        dir.path(),
        r#"script="$2"; log="$4"
echo "running $script" > "$log"
if grep -q csynth_design "$script"; then exit 2; fi
exit 0"#,
    );
    let backend = VendorBackend::with_override("vitis_hls -f {script} -l {log}", Some(&tool));
    let cfgs = vec![gemm("v", 2, r#"["csim", "synth", "impl"]"#)];
    let jobs = plan_jobs(&cfgs, &run_cfg(&dir.path().join("out")));
    let r = &execute(&jobs, &backend, 1).unwrap()[0];
    let statuses: Vec<StageStatus> = r.stages.iter().map(|s| s.status).collect();
    assert_eq!(statuses, vec![StageStatus::Pass, StageStatus::Fail, StageStatus::Skipped]);
    assert_eq!(r.stages[1].message.as_deref(), Some("exit code 2"));
    assert!(r.log_excerpt.contains("stage_synth.tcl"));
    let csim = fs::read_to_string(jobs[0].bundle.join("scripts/stage_csim.tcl")).unwrap();
    assert!(csim.contains("open_project -reset v_prj") && csim.contains("add_files -tb tb/v_tb.cpp"));
    let synth = fs::read_to_string(jobs[0].bundle.join("scripts/stage_synth.tcl")).unwrap();
    assert!(synth.contains("open_project v_prj") && !synth.contains("-reset"));
}

#[test]
fn vendor_timeout_kills_the_process_group() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("survived");
    // the child outlives its parent unless the whole group is killed
    let tool = fake_tool(dir.path(), &format!("(sleep 2; touch {}) &\nsleep 5", marker.display()));
    let backend = VendorBackend::with_override("hls -f {script}", Some(&tool));
    let cfgs = vec![gemm("t", 2, r#"["synth", "impl"]"#)];
    let mut jobs = plan_jobs(&cfgs, &run_cfg(&dir.path().join("out")));
    jobs[0].timeout = Duration::from_millis(300);
    let start = Instant::now();
    let r = &execute(&jobs, &backend, 1).unwrap()[0];
    assert!(start.elapsed() < Duration::from_secs(2));
    assert_eq!(r.stages[0].status, StageStatus::Timeout);
    assert_eq!(r.stages[1].status, StageStatus::Skipped);
    std::thread::sleep(Duration::from_millis(2300));
    assert!(!marker.exists(), "background child was not killed");
}

#[test]
fn vendor_without_tool_fails_before_any_job() {
    let dir = tempfile::tempdir().unwrap();
    let backend = VendorBackend::with_override("no-such-hls-binary -f {script}", None);
    let jobs = plan_jobs(&designs(2), &run_cfg(dir.path()));
    assert!(execute(&jobs, &backend, 2).is_err());
    assert!(!dir.path().join("jobs").exists());
}
