//! Operator semantics and the float64 golden model.
//!
//! Every kernel the generator can emit has an `eval_*` function here. The
//! oracle accumulates in `f64` regardless of the design's data type, and
//! rejects any non-finite result.

mod activation;
mod attention;
mod conv;
mod exec;
mod linear;
mod misc;
mod norm;
pub mod spec;
pub mod stimulus;

use std::collections::BTreeSet;

use thiserror::Error;

pub use activation::{eval_activation, gelu, hard_sigmoid, sigmoid};
pub use attention::{eval_attention, eval_rope, rope_theta};
pub use conv::eval_conv;
pub use exec::{eval_operator, round_to_storage, run_design, run_design_with, DesignError, RunOptions};
pub use linear::eval_linear;
pub use misc::{dropout_keep, eval_dropout, eval_elementwise, eval_move, eval_pool, splitmix64};
pub use norm::eval_norm;
pub use spec::*;

use crate::tensor::{Tensor, TensorShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("group error: {0}")]
    Group(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

pub(crate) fn expect_shape(what: &str, t: &Tensor, want: &[usize]) -> Result<(), KernelError> {
    if t.shape().dims() != want {
        return Err(KernelError::Shape(format!(
            "{what}: expected {}, got {}",
            TensorShape::new(want.to_vec())
                .map(|s| s.to_string())
                .unwrap_or_else(|_| format!("{want:?}")),
            t.shape()
        )));
    }
    Ok(())
}

pub(crate) fn finite(what: &str, t: Tensor) -> Result<Tensor, KernelError> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(KernelError::NonFinite(what.to_string()))
    }
}

/// Set of kernel kinds a generator build knows how to emit and evaluate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelCatalog {
    kinds: BTreeSet<KernelKind>,
}

impl KernelCatalog {
    pub fn standard() -> Self {
        KernelCatalog {
            kinds: KernelKind::ALL.into_iter().collect(),
        }
    }

    pub fn only(kinds: impl IntoIterator<Item = KernelKind>) -> Self {
        KernelCatalog {
            kinds: kinds.into_iter().collect(),
        }
    }

    pub fn contains(&self, kind: KernelKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = KernelKind> + '_ {
        self.kinds.iter().copied()
    }
}

impl Default for KernelCatalog {
    fn default() -> Self {
        Self::standard()
    }
}
