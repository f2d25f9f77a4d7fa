//! Config-driven generation of HLS kernel designs.
//!
//! A [`config::DesignConfig`] describes buffers, ports and an ordered list of
//! kernel calls. From it this crate can evaluate a float64 golden model
//! ([`kernels`]), emit C++ sources with a testbench and a Vitis TCL script
//! ([`codegen`]), enumerate benchmark suites ([`sweep`]), plan shared-tile
//! architectures ([`modularize`]), run tool flows in parallel ([`runner`]) and
//! summarize resource reports ([`reports`]).

pub mod codegen;
pub mod config;
pub mod kernels;
pub mod modularize;
pub mod reports;
pub mod runner;
pub mod sweep;
pub mod tensor;
pub mod util;

pub use config::{
    parse_design_config, parse_run_config, validate_design, ConfigError, DataType, DesignConfig, RunConfig,
    ValidationReport,
};
pub use codegen::{generate, CodegenError, SourceBundle};
pub use kernels::{run_design, KernelCatalog, OperatorSpec};
pub use modularize::{emit_modular_design, max_tile, min_tile, plan_shared, ModularPlan, Policy};
pub use reports::{parse_report, DeviceCapacity, PPAReport, UtilPercent};
pub use runner::{execute, plan_jobs, Backend, Job, JobResult};
pub use sweep::{builtin_suites, expand_grid, SweepSpec};
pub use tensor::{Tensor, TensorShape};
