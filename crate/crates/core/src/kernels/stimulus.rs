//! Deterministic random input bindings for designs.
//!
//! Values lie on a `2^-8` grid so they are exact in `float32` and in any
//! fixed-point format with at least 8 fractional bits.

use std::collections::BTreeMap;

use super::misc::splitmix64;
use crate::config::DesignConfig;
use crate::tensor::{Tensor, TensorShape};

const GRID: f64 = 256.0;

/// Uniform values in `[lo, hi]` snapped to the stimulus grid.
pub fn random_tensor(shape: TensorShape, seed: u64, lo: f64, hi: f64) -> Tensor {
    let steps = ((hi - lo) * GRID).floor() as u64 + 1;
    let base = (lo * GRID).ceil();
    Tensor::from_fn(shape, |i| {
        let r = splitmix64(seed ^ splitmix64(i as u64));
        (base + (r % steps) as f64) / GRID
    })
}

/// Value range for an operand role. Variances and scales stay positive.
fn role_range(role: &str) -> (f64, f64) {
    match role {
        "var" => (0.25, 2.0),
        "gamma" => (0.5, 1.5),
        _ => (-1.0, 1.0),
    }
}

/// One tensor per `in`/`inout` interface, ranged by the first role it plays.
pub fn random_bindings(cfg: &DesignConfig, seed: u64) -> BTreeMap<String, Tensor> {
    let mut roles: BTreeMap<&str, &str> = BTreeMap::new();
    for call in &cfg.calls {
        if let Ok(sig) = call.params.signature() {
            for (name, (role, _)) in call.inputs.iter().zip(&sig.inputs) {
                roles.entry(name.as_str()).or_insert(role);
            }
        }
    }
    cfg.input_interfaces()
        .enumerate()
        .map(|(k, iface)| {
            let (lo, hi) = role_range(roles.get(iface.name.as_str()).copied().unwrap_or("x"));
            let s = splitmix64(seed.wrapping_add(k as u64));
            (iface.name.clone(), random_tensor(iface.shape.clone(), s, lo, hi))
        })
        .collect()
}
