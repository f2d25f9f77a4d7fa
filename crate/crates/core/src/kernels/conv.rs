use super::spec::ConvSpec;
use super::{expect_shape, finite, KernelError};
use crate::tensor::{Tensor, TensorShape};

/// Grouped 2-D cross-correlation with zero padding.
///
/// Each output accumulates over its group's input channels (outermost), then
/// kernel rows, then kernel columns; bias is added last. `acc_in` seeds the
/// accumulator when the spec carries partial sums from a previous channel tile.
pub fn eval_conv(
    spec: &ConvSpec,
    input: &Tensor,
    weights: &Tensor,
    acc_in: Option<&Tensor>,
    bias: Option<&Tensor>,
) -> Result<Tensor, KernelError> {
    if spec.groups == 0 || !spec.in_ch.is_multiple_of(spec.groups) || !spec.out_ch.is_multiple_of(spec.groups) {
        return Err(KernelError::Group(format!(
            "in_ch {} / out_ch {} not divisible by groups {}",
            spec.in_ch, spec.out_ch, spec.groups
        )));
    }
    let (oh, ow) = spec
        .out_hw()
        .ok_or_else(|| KernelError::Shape("conv window does not fit the input".into()))?;
    let cin_g = spec.in_ch / spec.groups;
    let cout_g = spec.out_ch / spec.groups;
    let ks = spec.kernel;
    expect_shape("conv input", input, &[spec.in_ch, spec.h, spec.w])?;
    expect_shape("conv weights", weights, &[spec.out_ch, cin_g, ks, ks])?;
    if spec.accumulate != acc_in.is_some() {
        return Err(KernelError::Shape("accumulator operand presence must match spec".into()));
    }
    if let Some(acc) = acc_in {
        expect_shape("conv accumulator", acc, &[spec.out_ch, oh, ow])?;
    }
    if spec.bias != bias.is_some() {
        return Err(KernelError::Shape("bias operand presence must match spec".into()));
    }
    if let Some(b) = bias {
        expect_shape("conv bias", b, &[spec.out_ch])?;
    }

    let (x, wt) = (input.data(), weights.data());
    let (h, w, pad, stride) = (spec.h as isize, spec.w as isize, spec.padding as isize, spec.stride);
    let mut out = vec![0.0; spec.out_ch * oh * ow];
    for co in 0..spec.out_ch {
        let g = co / cout_g;
        for y in 0..oh {
            for xo in 0..ow {
                let idx = (co * oh + y) * ow + xo;
                let mut acc = acc_in.map_or(0.0, |a| a.data()[idx]);
                for cl in 0..cin_g {
                    let ci = g * cin_g + cl;
                    for kh in 0..ks {
                        let ih = (y * stride + kh) as isize - pad;
                        if ih < 0 || ih >= h {
                            continue;
                        }
                        for kw in 0..ks {
                            let iw = (xo * stride + kw) as isize - pad;
                            if iw < 0 || iw >= w {
                                continue;
                            }
                            let xv = x[(ci * spec.h + ih as usize) * spec.w + iw as usize];
                            let wv = wt[((co * cin_g + cl) * ks + kh) * ks + kw];
                            acc += xv * wv;
                        }
                    }
                }
                if let Some(b) = bias {
                    acc += b.data()[co];
                }
                out[idx] = acc;
            }
        }
    }
    let shape = TensorShape::new(vec![spec.out_ch, oh, ow]).expect("positive dims");
    finite("conv", Tensor::new(shape, out).expect("sized"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape;

    #[test]
    fn one_by_one_identity() {
        let spec = ConvSpec::new(1, 1, 3, 4, 1);
        let x = Tensor::from_fn(shape![1, 3, 4], |i| i as f64 - 5.0);
        let w = Tensor::filled(shape![1, 1, 1, 1], 1.0);
        assert_eq!(eval_conv(&spec, &x, &w, None, None).unwrap(), x);
    }

    #[test]
    fn depthwise_window_sum() {
        let mut spec = ConvSpec::new(3, 3, 5, 5, 3);
        spec.groups = 3;
        let x = Tensor::filled(shape![3, 5, 5], 1.0);
        let w = Tensor::filled(shape![3, 1, 3, 3], 1.0);
        let y = eval_conv(&spec, &x, &w, None, None).unwrap();
        assert_eq!(y.shape(), &shape![3, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn padding_and_stride_output_dims() {
        let mut spec = ConvSpec::new(1, 2, 7, 7, 3);
        spec.padding = 1;
        spec.stride = 2;
        spec.bias = true;
        let x = Tensor::filled(shape![1, 7, 7], 1.0);
        let w = Tensor::filled(shape![2, 1, 3, 3], 1.0);
        let b = Tensor::new(shape![2], vec![0.5, -0.5]).unwrap();
        let y = eval_conv(&spec, &x, &w, None, Some(&b)).unwrap();
        assert_eq!(y.shape(), &shape![2, 4, 4]);
        // corner window sees 2x2 of the image, center sees 3x3
        assert_eq!(y.data()[0], 4.5);
        assert_eq!(y.data()[5], 9.5);
        assert_eq!(y.data()[16], 3.5);
    }

    #[test]
    fn group_mismatch_is_group_error() {
        let mut spec = ConvSpec::new(3, 4, 5, 5, 3);
        spec.groups = 2;
        let x = Tensor::filled(shape![3, 5, 5], 1.0);
        let w = Tensor::filled(shape![4, 1, 3, 3], 1.0);
        assert!(matches!(
            eval_conv(&spec, &x, &w, None, None),
            Err(KernelError::Group(_))
        ));
    }
}
