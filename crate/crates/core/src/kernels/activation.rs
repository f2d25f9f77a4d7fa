use super::spec::ActKind;
use super::{finite, KernelError};
use crate::tensor::Tensor;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn hard_sigmoid(x: f64) -> f64 {
    (x / 6.0 + 0.5).clamp(0.0, 1.0)
}

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn scalar(kind: ActKind, x: f64) -> f64 {
    match kind {
        ActKind::Relu => x.max(0.0),
        ActKind::Relu6 => x.max(0.0).min(6.0),
        ActKind::Sigmoid => sigmoid(x),
        ActKind::Tanh => x.tanh(),
        ActKind::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp() - 1.0
            }
        }
        ActKind::Silu => x * sigmoid(x),
        ActKind::Gelu => gelu(x),
        ActKind::HardSigmoid => hard_sigmoid(x),
        ActKind::HardSwish => x * hard_sigmoid(x),
        ActKind::Exp => x.exp(),
        ActKind::Softmax => unreachable!("softmax is row-wise"),
    }
}

/// Elementwise activation; softmax acts on rows of the last axis with the
/// row maximum subtracted before exponentiation.
pub fn eval_activation(kind: ActKind, x: &Tensor) -> Result<Tensor, KernelError> {
    let out = if kind == ActKind::Softmax {
        let n = x.shape().last();
        let mut data = Vec::with_capacity(x.numel());
        for row in x.data().chunks(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let mut sum = 0.0;
            for &e in &exps {
                sum += e;
            }
            data.extend(exps.iter().map(|e| e / sum));
        }
        Tensor::new(x.shape().clone(), data).expect("sized")
    } else {
        x.map(|v| scalar(kind, v))
    };
    finite(kind.name(), out)
}
