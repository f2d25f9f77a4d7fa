use super::spec::{LinearSpec, LinearVariant};
use super::{expect_shape, finite, KernelError};
use crate::tensor::Tensor;

/// Evaluate a dot / matvec / GEMM / `x·A·B·y` chain.
///
/// The result is the exact product accumulated in `f64` with the reduction
/// index increasing; loop order, unroll factors, inline multiplies and the
/// chain parenthesization are implementation choices that do not change it.
pub fn eval_linear(spec: &LinearSpec, operands: &[&Tensor]) -> Result<Tensor, KernelError> {
    let sig = super::OperatorSpec::Linear(spec.clone())
        .signature()
        .map_err(KernelError::Shape)?;
    if operands.len() != sig.inputs.len() {
        return Err(KernelError::Shape(format!(
            "{} expects {} operands, got {}",
            spec.kind(),
            sig.inputs.len(),
            operands.len()
        )));
    }
    for ((role, shape), t) in sig.inputs.iter().zip(operands) {
        expect_shape(role, t, shape.dims())?;
    }
    let out_shape = sig.outputs[0].1.clone();
    let (m, k, n) = (spec.m, spec.k, spec.n);
    let acc_in = spec.accumulate.then(|| operands[2].data());
    let bias = spec.bias.then(|| operands[operands.len() - 1].data());

    let out = match spec.variant {
        LinearVariant::Gemm => {
            let (a, b) = (operands[0].data(), operands[1].data());
            let mut c = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    let mut acc = acc_in.map_or(0.0, |s| s[i * n + j]);
                    for kk in 0..k {
                        acc += a[i * k + kk] * b[kk * n + j];
                    }
                    if let Some(bias) = bias {
                        acc += bias[j];
                    }
                    c[i * n + j] = acc;
                }
            }
            c
        }
        LinearVariant::Matvec => {
            let (a, x) = (operands[0].data(), operands[1].data());
            (0..m)
                .map(|i| {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        acc += a[i * k + kk] * x[kk];
                    }
                    acc + bias.map_or(0.0, |b| b[i])
                })
                .collect()
        }
        LinearVariant::Dot => {
            let (x, y) = (operands[0].data(), operands[1].data());
            let mut acc = 0.0;
            for kk in 0..k {
                acc += x[kk] * y[kk];
            }
            vec![acc + bias.map_or(0.0, |b| b[0])]
        }
        LinearVariant::Chain => {
            let (x, a, b, y) = (
                operands[0].data(),
                operands[1].data(),
                operands[2].data(),
                operands[3].data(),
            );
            let mut xa = vec![0.0; k];
            for (kk, slot) in xa.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += x[i] * a[i * k + kk];
                }
                *slot = acc;
            }
            let mut xab = vec![0.0; n];
            for (j, slot) in xab.iter_mut().enumerate() {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += xa[kk] * b[kk * n + j];
                }
                *slot = acc;
            }
            let mut acc = 0.0;
            for j in 0..n {
                acc += xab[j] * y[j];
            }
            vec![acc + bias.map_or(0.0, |b| b[0])]
        }
    };
    finite(spec.kind().tag(), Tensor::new(out_shape, out).expect("sized"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape;

    #[test]
    fn gemm_of_ones_sums_to_k() {
        let a = Tensor::filled(shape![4, 6], 1.0);
        let b = Tensor::filled(shape![6, 2], 1.0);
        let c = eval_linear(&LinearSpec::gemm(4, 6, 2), &[&a, &b]).unwrap();
        assert_eq!(c.shape(), &shape![4, 2]);
        assert!(c.data().iter().all(|&v| v == 6.0));
    }

    #[test]
    fn gemm_with_identity_returns_a() {
        let a = Tensor::from_fn(shape![3, 4], |i| i as f64 * 0.5 - 2.0);
        let eye = Tensor::from_fn(shape![4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        let c = eval_linear(&LinearSpec::gemm(3, 4, 4), &[&a, &eye]).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn dot_brute_force() {
        let x = Tensor::new(shape![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = Tensor::new(shape![3], vec![4.0, 5.0, 6.0]).unwrap();
        let d = eval_linear(&LinearSpec::dot(3), &[&x, &y]).unwrap();
        assert_eq!(d.data(), &[32.0]);
    }

    #[test]
    fn gemm_bias_and_accumulate() {
        let mut spec = LinearSpec::gemm(1, 2, 2);
        spec.bias = true;
        spec.accumulate = true;
        let a = Tensor::new(shape![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(shape![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let acc = Tensor::new(shape![1, 2], vec![10.0, 20.0]).unwrap();
        let bias = Tensor::new(shape![2], vec![0.5, 0.25]).unwrap();
        let c = eval_linear(&spec, &[&a, &b, &acc, &bias]).unwrap();
        assert_eq!(c.data(), &[11.5, 22.25]);
    }

    #[test]
    fn wrong_inner_dimension_is_shape_error() {
        let a = Tensor::filled(shape![4, 6], 1.0);
        let b = Tensor::filled(shape![5, 2], 1.0);
        let err = eval_linear(&LinearSpec::gemm(4, 6, 2), &[&a, &b]).unwrap_err();
        assert!(matches!(err, KernelError::Shape(_)));
    }
}
