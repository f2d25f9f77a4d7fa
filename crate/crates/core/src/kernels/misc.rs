use super::spec::{check_region, ElementwiseOp, MoveDirection, MoveSpec, PoolKind, PoolSpec};
use super::{expect_shape, finite, KernelError};
use crate::tensor::{Tensor, TensorShape};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to one counter value.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether element `index` survives dropout with probability `p` under `seed`.
pub fn dropout_keep(seed: u64, index: u64, p: f64) -> bool {
    let r = splitmix64(seed.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)));
    let u = (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    u >= p
}

pub fn eval_dropout(x: &Tensor, p: f64, seed: u64) -> Result<Tensor, KernelError> {
    if !(0.0..1.0).contains(&p) {
        return Err(KernelError::Shape(format!("dropout probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(x.clone());
    }
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if dropout_keep(seed, i as u64, p) {
                v / (1.0 - p)
            } else {
                0.0
            }
        })
        .collect();
    finite("dropout", Tensor::new(x.shape().clone(), data).expect("sized"))
}

/// Per-channel max or average pooling without padding.
pub fn eval_pool(spec: &PoolSpec, input: &Tensor) -> Result<Tensor, KernelError> {
    let (oh, ow) = spec
        .out_hw()
        .ok_or_else(|| KernelError::Shape("pool window does not fit the input".into()))?;
    expect_shape("pool input", input, &[spec.channels, spec.h, spec.w])?;
    let x = input.data();
    let ks = spec.kernel;
    let mut out = Vec::with_capacity(spec.channels * oh * ow);
    for c in 0..spec.channels {
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = match spec.kind {
                    PoolKind::Max => f64::NEG_INFINITY,
                    PoolKind::Avg => 0.0,
                };
                for kh in 0..ks {
                    for kw in 0..ks {
                        let v = x[(c * spec.h + y * spec.stride + kh) * spec.w + xo * spec.stride + kw];
                        acc = match spec.kind {
                            PoolKind::Max => acc.max(v),
                            PoolKind::Avg => acc + v,
                        };
                    }
                }
                if spec.kind == PoolKind::Avg {
                    acc /= (ks * ks) as f64;
                }
                out.push(acc);
            }
        }
    }
    let shape = TensorShape::new(vec![spec.channels, oh, ow]).expect("positive dims");
    finite("pool", Tensor::new(shape, out).expect("sized"))
}

pub fn eval_elementwise(op: ElementwiseOp, a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    if a.shape() != b.shape() {
        return Err(KernelError::Shape(format!(
            "elementwise operands {} and {} differ",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| match op {
            ElementwiseOp::Add => x + y,
            ElementwiseOp::Mul => x * y,
        })
        .collect();
    finite("elementwise", Tensor::new(a.shape().clone(), data).expect("sized"))
}

/// Visit every element of a region as (outer flat index, region flat index).
fn for_each_region(outer: &TensorShape, offset: &[usize], region: &TensorShape, mut f: impl FnMut(usize, usize)) {
    let ostrides = outer.strides();
    let rdims = region.dims();
    let mut idx = vec![0usize; rdims.len()];
    for r in 0..region.numel() {
        let flat: usize = idx
            .iter()
            .zip(offset)
            .zip(&ostrides)
            .map(|((&i, &o), &s)| (i + o) * s)
            .sum();
        f(flat, r);
        for axis in (0..rdims.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < rdims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Region copy between an array and a tile.
///
/// `load` returns the `spec.shape` region of `src` (shaped `spec.outer`).
/// `store` returns `dst` (zeros when absent) with that region replaced by `src`.
pub fn eval_move(spec: &MoveSpec, src: &Tensor, dst: Option<&Tensor>) -> Result<Tensor, KernelError> {
    check_region(&spec.outer, &spec.offset, &spec.shape).map_err(KernelError::Bounds)?;
    match spec.direction {
        MoveDirection::Load => {
            expect_shape("load source", src, spec.outer.dims())?;
            let mut out = Tensor::zeros(spec.shape.clone());
            let data = out.data_mut();
            for_each_region(&spec.outer, &spec.offset, &spec.shape, |o, r| {
                data[r] = src.data()[o];
            });
            Ok(out)
        }
        MoveDirection::Store => {
            expect_shape("store tile", src, spec.shape.dims())?;
            let mut out = match dst {
                Some(d) => {
                    expect_shape("store destination", d, spec.outer.dims())?;
                    d.clone()
                }
                None => Tensor::zeros(spec.outer.clone()),
            };
            let data = out.data_mut();
            for_each_region(&spec.outer, &spec.offset, &spec.shape, |o, r| {
                data[o] = src.data()[r];
            });
            Ok(out)
        }
    }
}
