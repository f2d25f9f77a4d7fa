use super::spec::{NormKind, NormSpec};
use super::{expect_shape, finite, KernelError};
use crate::tensor::Tensor;

/// BatchNorm (inference form, channel axis 0), LayerNorm and RMSNorm (last axis).
///
/// `stats` carries the running `(mean, var)` and is required for BatchNorm only.
pub fn eval_norm(
    spec: &NormSpec,
    x: &Tensor,
    gamma: Option<&Tensor>,
    beta: Option<&Tensor>,
    stats: Option<(&Tensor, &Tensor)>,
) -> Result<Tensor, KernelError> {
    expect_shape("norm input", x, spec.shape.dims())?;
    let eps = spec.epsilon;
    let out = match spec.kind {
        NormKind::Batchnorm => {
            let c = x.shape().dims()[0];
            let (mean, var) =
                stats.ok_or_else(|| KernelError::Shape("batchnorm requires running stats".into()))?;
            expect_shape("batchnorm mean", mean, &[c])?;
            expect_shape("batchnorm var", var, &[c])?;
            check_affine(spec, gamma, beta, c, true)?;
            let per = x.numel() / c;
            let mut out = Vec::with_capacity(x.numel());
            for (idx, &v) in x.data().iter().enumerate() {
                let ch = idx / per;
                let mut y = (v - mean.data()[ch]) / (var.data()[ch] + eps).sqrt();
                if let (Some(g), Some(b)) = (gamma, beta) {
                    y = y * g.data()[ch] + b.data()[ch];
                }
                out.push(y);
            }
            out
        }
        NormKind::Layernorm => {
            let n = x.shape().last();
            check_affine(spec, gamma, beta, n, true)?;
            let mut out = Vec::with_capacity(x.numel());
            for row in x.data().chunks(n) {
                let mut sum = 0.0;
                for &v in row {
                    sum += v;
                }
                let mean = sum / n as f64;
                let mut sq = 0.0;
                for &v in row {
                    sq += (v - mean) * (v - mean);
                }
                let inv = 1.0 / (sq / n as f64 + eps).sqrt();
                for (j, &v) in row.iter().enumerate() {
                    let mut y = (v - mean) * inv;
                    if let (Some(g), Some(b)) = (gamma, beta) {
                        y = y * g.data()[j] + b.data()[j];
                    }
                    out.push(y);
                }
            }
            out
        }
        NormKind::Rmsnorm => {
            let n = x.shape().last();
            check_affine(spec, gamma, beta, n, false)?;
            let mut out = Vec::with_capacity(x.numel());
            for row in x.data().chunks(n) {
                let mut sq = 0.0;
                for &v in row {
                    sq += v * v;
                }
                let inv = 1.0 / (sq / n as f64 + eps).sqrt();
                for (j, &v) in row.iter().enumerate() {
                    let mut y = v * inv;
                    if let Some(g) = gamma {
                        y *= g.data()[j];
                    }
                    out.push(y);
                }
            }
            out
        }
    };
    let what = match spec.kind {
        NormKind::Batchnorm => "batchnorm",
        NormKind::Layernorm => "layernorm",
        NormKind::Rmsnorm => "rmsnorm",
    };
    finite(what, Tensor::new(x.shape().clone(), out).expect("sized"))
}

fn check_affine(
    spec: &NormSpec,
    gamma: Option<&Tensor>,
    beta: Option<&Tensor>,
    len: usize,
    wants_beta: bool,
) -> Result<(), KernelError> {
    let ok = gamma.is_some() == spec.affine
        && if wants_beta {
            beta.is_some() == spec.affine
        } else {
            beta.is_none()
        };
    if !ok {
        return Err(KernelError::Shape(
            "affine parameters must be supplied exactly when affine=true".into(),
        ));
    }
    if let Some(g) = gamma {
        expect_shape("gamma", g, &[len])?;
    }
    if let Some(b) = beta {
        expect_shape("beta", b, &[len])?;
    }
    Ok(())
}
