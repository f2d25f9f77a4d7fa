use super::spec::AttnSpec;
use super::{expect_shape, finite, KernelError};
use crate::tensor::{Tensor, TensorShape};

/// Rotation frequency of pair `i` for a head of width `head_dim`.
pub fn rope_theta(i: usize, head_dim: usize, base: f64) -> f64 {
    base.powf(-2.0 * i as f64 / head_dim as f64)
}

fn rotate_row(row: &mut [f64], pos: usize, head_dim: usize, base: f64) {
    for head in row.chunks_mut(head_dim) {
        for i in 0..head_dim / 2 {
            let angle = pos as f64 * rope_theta(i, head_dim, base);
            let (s, c) = angle.sin_cos();
            let (a, b) = (head[2 * i], head[2 * i + 1]);
            head[2 * i] = a * c - b * s;
            head[2 * i + 1] = a * s + b * c;
        }
    }
}

/// Rotary position embedding over interleaved pairs `(x[2i], x[2i+1])`.
///
/// Row `r` of `x` is rotated for position `positions[r]`; rows wider than
/// `head_dim` are treated as consecutive heads.
pub fn eval_rope(
    x: &Tensor,
    positions: &[usize],
    head_dim: usize,
    base: f64,
) -> Result<Tensor, KernelError> {
    if head_dim == 0 || !head_dim.is_multiple_of(2) {
        return Err(KernelError::Shape(format!("head_dim {head_dim} must be even")));
    }
    let width = x.shape().last();
    if !width.is_multiple_of(head_dim) {
        return Err(KernelError::Shape(format!(
            "row width {width} not a multiple of head_dim {head_dim}"
        )));
    }
    let rows = x.numel() / width;
    if positions.len() != rows {
        return Err(KernelError::Shape(format!(
            "{} positions for {rows} rows",
            positions.len()
        )));
    }
    let mut out = x.clone();
    for (row, &pos) in out.data_mut().chunks_mut(width).zip(positions) {
        rotate_row(row, pos, head_dim, base);
    }
    finite("rope", out)
}

fn project(x: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for t in 0..inner {
                acc += x[i * inner + t] * w[t * cols + j];
            }
            out[i * cols + j] = acc;
        }
    }
    out
}

/// Whether query `i` may attend to key `j`: causal, optionally windowed.
pub fn attends(i: usize, j: usize, window: Option<usize>) -> bool {
    j <= i && window.is_none_or(|w| j + w > i)
}

/// Grouped multi-head causal attention with optional sliding window and RoPE.
///
/// Query head `h` reads key/value head `h / (heads / kv_groups)`. Heads are
/// concatenated and projected by `wo`.
#[allow(clippy::too_many_arguments)]
pub fn eval_attention(
    spec: &AttnSpec,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    wo: &Tensor,
) -> Result<Tensor, KernelError> {
    if spec.heads == 0 || !spec.hidden.is_multiple_of(spec.heads) {
        return Err(KernelError::Shape(format!(
            "hidden {} not divisible by heads {}",
            spec.hidden, spec.heads
        )));
    }
    if spec.kv_groups == 0 || !spec.heads.is_multiple_of(spec.kv_groups) {
        return Err(KernelError::Group(format!(
            "heads {} not divisible by kv_groups {}",
            spec.heads, spec.kv_groups
        )));
    }
    let (l, d, hd) = (spec.seq_len, spec.hidden, spec.head_dim());
    if spec.with_rope && hd % 2 != 0 {
        return Err(KernelError::Shape(format!("head_dim {hd} must be even with RoPE")));
    }
    let kvd = spec.kv_dim();
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        expect_shape(name, t, &[l, d])?;
    }
    expect_shape("wq", wq, &[d, d])?;
    expect_shape("wk", wk, &[d, kvd])?;
    expect_shape("wv", wv, &[d, kvd])?;
    expect_shape("wo", wo, &[d, d])?;

    let mut qp = project(q.data(), l, d, wq.data(), d);
    let mut kp = project(k.data(), l, d, wk.data(), kvd);
    let vp = project(v.data(), l, d, wv.data(), kvd);
    if spec.with_rope {
        for i in 0..l {
            rotate_row(&mut qp[i * d..(i + 1) * d], i, hd, spec.rope_base);
            rotate_row(&mut kp[i * kvd..(i + 1) * kvd], i, hd, spec.rope_base);
        }
    }

    let per_group = spec.heads / spec.kv_groups;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut ctx = vec![0.0; l * d];
    let mut scores = vec![0.0; l];
    for h in 0..spec.heads {
        let kvh = h / per_group;
        for i in 0..l {
            let mut max = f64::NEG_INFINITY;
            for j in 0..l {
                if !attends(i, j, spec.window) {
                    continue;
                }
                let mut acc = 0.0;
                for t in 0..hd {
                    acc += qp[i * d + h * hd + t] * kp[j * kvd + kvh * hd + t];
                }
                scores[j] = acc * scale;
                max = max.max(scores[j]);
            }
            let mut sum = 0.0;
            for j in 0..l {
                if attends(i, j, spec.window) {
                    scores[j] = (scores[j] - max).exp();
                    sum += scores[j];
                }
            }
            for t in 0..hd {
                let mut acc = 0.0;
                for j in 0..l {
                    if attends(i, j, spec.window) {
                        acc += scores[j] / sum * vp[j * kvd + kvh * hd + t];
                    }
                }
                ctx[i * d + h * hd + t] = acc;
            }
        }
    }
    let out = project(&ctx, l, d, wo.data(), d);
    let shape = TensorShape::new(vec![l, d]).expect("positive dims");
    finite("attention", Tensor::new(shape, out).expect("sized"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape;

    #[test]
    fn rope_position_zero_is_identity() {
        let x = Tensor::from_fn(shape![1, 8], |i| i as f64 - 3.0);
        assert_eq!(eval_rope(&x, &[0], 8, 10000.0).unwrap(), x);
    }

    #[test]
    fn rope_unit_vector_rotates_by_one_radian() {
        let x = Tensor::new(shape![1, 2], vec![1.0, 0.0]).unwrap();
        let y = eval_rope(&x, &[1], 2, 10000.0).unwrap();
        assert_eq!(y.data(), &[1f64.cos(), 1f64.sin()]);
    }

    #[test]
    fn rope_odd_head_dim_rejected() {
        let x = Tensor::zeros(shape![1, 3]);
        assert!(eval_rope(&x, &[0], 3, 10000.0).is_err());
    }

    #[test]
    fn window_mask() {
        assert!(attends(3, 3, Some(1)));
        assert!(!attends(3, 2, Some(1)));
        assert!(attends(3, 1, Some(3)));
        assert!(!attends(3, 0, Some(3)));
        assert!(!attends(1, 2, None));
    }

    #[test]
    fn grouped_attention_rejects_bad_groups() {
        let spec = AttnSpec::new(2, 4, 2, 3);
        let t = Tensor::zeros(shape![2, 4]);
        let w = Tensor::zeros(shape![4, 4]);
        assert!(matches!(
            eval_attention(&spec, &t, &t, &t, &w, &w, &w, &w),
            Err(KernelError::Group(_))
        ));
    }
}
