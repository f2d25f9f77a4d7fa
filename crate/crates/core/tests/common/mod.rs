#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use forgebench_core::codegen::{generate, SourceBundle};
use forgebench_core::config::DesignConfig;

/// Name of the C++ compiler used for testbench runs.
pub fn cxx() -> String {
    std::env::var("CXX").unwrap_or_else(|_| "g++".to_string())
}

pub fn have_cxx() -> bool {
    Command::new(cxx()).arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
}

/// Compile a written bundle's sources and testbench, run it, return stdout.
pub fn compile_and_run(root: &Path, design: &str) -> Result<String, String> {
    let exe = root.join("tb_exe");
    let out = Command::new(cxx())
        .args(["-std=c++14", "-O1", "-ffp-contract=off", "-w", "-o"])
        .arg(&exe)
        .arg(root.join(format!("src/{design}_kernels.cpp")))
        .arg(root.join(format!("src/{design}_top.cpp")))
        .arg(root.join(format!("tb/{design}_tb.cpp")))
        .output()
        .map_err(|e| format!("cannot start compiler: {e}"))?;
    if !out.status.success() {
        return Err(format!("compile failed:\n{}", String::from_utf8_lossy(&out.stderr)));
    }
    let run = Command::new(&exe).output().map_err(|e| format!("cannot run testbench: {e}"))?;
    let stdout = String::from_utf8_lossy(&run.stdout).to_string();
    if run.status.code() == Some(0) {
        Ok(stdout)
    } else {
        Err(format!("testbench exited {:?}:\n{stdout}", run.status.code()))
    }
}

/// Generate with testbench, write under `dir`, compile and run.
pub fn check_design(cfg: &DesignConfig, dir: &Path, seed: u64) -> Result<String, String> {
    let bundle: SourceBundle = generate(cfg, true, seed).map_err(|e| e.to_string())?;
    let root = bundle.write(dir).map_err(|e| e.to_string())?;
    compile_and_run(&root, &cfg.name)
}
