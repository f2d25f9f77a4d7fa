//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use forgebench_core::{parse_design_config, DesignConfig};

/// Example configs shipped under `designs/` that the benches exercise.
pub const EXAMPLES: [&str; 4] = ["gpt_block", "llama_block", "resnet18_block", "vgg_block"];

pub fn example(name: &str) -> DesignConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../designs")
        .join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_design_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
