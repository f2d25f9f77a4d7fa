//! Seeded oracle property checks, shared by the proptest suite and the
//! acceptance target. Each check builds one random instance from its seed and
//! compares the oracle against an independent computation.

#![allow(dead_code)]

use forgebench_core::kernels::{
    eval_activation, eval_attention, eval_conv, eval_linear, eval_rope, ActKind, Assoc, AttnSpec, ConvSpec,
    LinearSpec, LoopAxis, LoopOrder,
};
use forgebench_core::shape;
use forgebench_core::tensor::{Tensor, TensorShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values on the 2^-8 grid in [-1, 1]; products of four stay exact in f64.
fn grid(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-256i32..=256) as f64 / 256.0).collect()
}

fn tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let shape = TensorShape::new(dims.to_vec()).unwrap();
    let data = grid(rng, shape.numel());
    Tensor::new(shape, data).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.data()[0]
}

/// `C = A·B` with the three loops nested in `order`.
fn gemm_in_order(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, order: LoopOrder) -> Vec<f64> {
    let bound = [m, n, k];
    let mut c = vec![0.0; m * n];
    let mut idx = [0usize; 3];
    let [o0, o1, o2] = order.0;
    for x in 0..bound[o0.index()] {
        idx[o0.index()] = x;
        for y in 0..bound[o1.index()] {
            idx[o1.index()] = y;
            for z in 0..bound[o2.index()] {
                idx[o2.index()] = z;
                let (i, j, kk) = (idx[LoopAxis::I.index()], idx[LoopAxis::J.index()], idx[LoopAxis::K.index()]);
                c[i * n + j] += a[i * k + kk] * b[kk * n + j];
            }
        }
    }
    c
}

fn vec_mat(x: &[f64], a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..cols).map(|c| (0..rows).map(|r| x[r] * a[r * cols + c]).sum()).collect()
}

fn mat_vec(a: &[f64], y: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows).map(|r| (0..cols).map(|c| a[r * cols + c] * y[c]).sum()).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `x·A·B·y` evaluated with the given parenthesization and GEMM loop order.
fn chain_direct(x: &[f64], a: &[f64], b: &[f64], y: &[f64], m: usize, k: usize, n: usize, assoc: Assoc, order: LoopOrder) -> f64 {
    match assoc {
        Assoc::LeftToRight => dot(&vec_mat(&vec_mat(x, a, m, k), b, k, n), y),
        Assoc::Split => dot(&vec_mat(x, a, m, k), &mat_vec(b, y, k, n)),
        Assoc::MatrixFirst => dot(x, &mat_vec(&gemm_in_order(a, b, m, k, n, order), y, m, n)),
        Assoc::RightToLeft => dot(x, &mat_vec(a, &mat_vec(b, y, k, n), m, k)),
    }
}

/// Every (loop order, parenthesization) variant of the chain, oracle and
/// direct, is bit-identical; so is GEMM under every loop order.
pub fn chain_variants(seed: u64) -> Check {
    let mut r = rng(seed);
    let (m, k, n) = (r.gen_range(1..=8), r.gen_range(1..=8), r.gen_range(1..=8));
    let x = tensor(&mut r, &[m]);
    let a = tensor(&mut r, &[m, k]);
    let b = tensor(&mut r, &[k, n]);
    let y = tensor(&mut r, &[n]);
    let mut first = None;
    for order in LoopOrder::all() {
        for assoc in Assoc::ALL {
            let mut spec = LinearSpec::chain(m, k, n, assoc);
            spec.loop_order = order;
            let oracle = scalar(&eval_linear(&spec, &[&x, &a, &b, &y]).map_err(|e| e.to_string())?);
            let direct = chain_direct(x.data(), a.data(), b.data(), y.data(), m, k, n, assoc, order);
            let want = *first.get_or_insert(oracle);
            if oracle.to_bits() != want.to_bits() || direct.to_bits() != want.to_bits() {
                return Err(format!(
                    "({m},{k},{n}) {order:?} {}: oracle {oracle:e} direct {direct:e} first {want:e}",
                    assoc.label()
                ));
            }
        }
    }
    let reference = gemm_in_order(a.data(), b.data(), m, k, n, LoopOrder::IJK);
    for order in LoopOrder::all() {
        let mut spec = LinearSpec::gemm(m, k, n);
        spec.loop_order = order;
        let oracle = eval_linear(&spec, &[&a, &b]).map_err(|e| e.to_string())?;
        let direct = gemm_in_order(a.data(), b.data(), m, k, n, order);
        let same = |v: &[f64]| v.iter().zip(&reference).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(oracle.data()) || !same(&direct) {
            return Err(format!("gemm ({m},{k},{n}) differs under {order:?}"));
        }
    }
    Ok(())
}

/// Softmax rows sum to one for logits up to ±50.
pub fn softmax_rows(seed: u64) -> Check {
    let mut r = rng(seed);
    let (rows, cols) = (r.gen_range(1..=8), r.gen_range(1..=64));
    let data: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-50.0..50.0)).collect();
    let x = Tensor::new(shape![rows, cols], data).unwrap();
    let s = eval_activation(ActKind::Softmax, &x).map_err(|e| e.to_string())?;
    for (i, row) in s.data().chunks(cols).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|v| *v < 0.0) {
            return Err(format!("row {i} of {rows}x{cols} sums to {sum}"));
        }
    }
    Ok(())
}

/// RoPE preserves the norm of every head slice.
pub fn rope_norm(seed: u64) -> Check {
    let mut r = rng(seed);
    let head_dim = 2 * r.gen_range(1..=8);
    let heads = r.gen_range(1..=4);
    let rows = r.gen_range(1..=16);
    let x = tensor(&mut r, &[rows, heads * head_dim]);
    let positions: Vec<usize> = (0..rows).map(|_| r.gen_range(0..4096)).collect();
    let base = [10_000.0, 500_000.0][r.gen_range(0..2)];
    let y = eval_rope(&x, &positions, head_dim, base).map_err(|e| e.to_string())?;
    let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
    for (a, b) in x.data().chunks(head_dim).zip(y.data().chunks(head_dim)) {
        if (norm(a) - norm(b)).abs() > 1e-6 {
            return Err(format!("norm {} became {} (head_dim {head_dim})", norm(a), norm(b)));
        }
    }
    Ok(())
}

fn conv_direct(spec: &ConvSpec, x: &Tensor, w: &Tensor) -> Vec<f64> {
    let (oh, ow) = spec.out_hw().unwrap();
    let (ks, s, p) = (spec.kernel, spec.stride, spec.padding);
    let mut out = vec![0.0; spec.out_ch * oh * ow];
    for co in 0..spec.out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..spec.in_ch {
                    for ky in 0..ks {
                        for kx in 0..ks {
                            let (iy, ix) = ((oy * s + ky) as isize - p as isize, (ox * s + kx) as isize - p as isize);
                            if iy < 0 || ix < 0 || iy >= spec.h as isize || ix >= spec.w as isize {
                                continue;
                            }
                            let xi = (ci * spec.h + iy as usize) * spec.w + ix as usize;
                            acc += x.data()[xi] * w.data()[((co * spec.in_ch + ci) * ks + ky) * ks + kx];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// A g-group conv equals g independent single-group convs on channel slices,
/// and single-group conv equals the direct nested-loop definition.
pub fn grouped_conv(seed: u64) -> Check {
    let mut r = rng(seed);
    let g = [1, 2, 4][r.gen_range(0..3)];
    let (cin_g, cout_g) = (r.gen_range(1..=3), r.gen_range(1..=3));
    let ks = [1, 3][r.gen_range(0..2)];
    let (h, w) = (r.gen_range(ks..=8), r.gen_range(ks..=8));
    let mut spec = ConvSpec::new(g * cin_g, g * cout_g, h, w, ks);
    spec.groups = g;
    spec.stride = r.gen_range(1..=2);
    spec.padding = r.gen_range(0..=ks / 2);
    let x = tensor(&mut r, &[spec.in_ch, h, w]);
    let wt = tensor(&mut r, &[spec.out_ch, cin_g, ks, ks]);
    let got = eval_conv(&spec, &x, &wt, None, None).map_err(|e| e.to_string())?;

    let mut sub = spec.clone();
    sub.groups = 1;
    sub.in_ch = cin_g;
    sub.out_ch = cout_g;
    let (oh, ow) = spec.out_hw().unwrap();
    let plane = oh * ow;
    for gi in 0..g {
        let xs = Tensor::new(
            shape![cin_g, h, w],
            x.data()[gi * cin_g * h * w..(gi + 1) * cin_g * h * w].to_vec(),
        )
        .unwrap();
        let wlen = cout_g * cin_g * ks * ks;
        let ws = Tensor::new(shape![cout_g, cin_g, ks, ks], wt.data()[gi * wlen..(gi + 1) * wlen].to_vec()).unwrap();
        let single = eval_conv(&sub, &xs, &ws, None, None).map_err(|e| e.to_string())?;
        let direct = conv_direct(&sub, &xs, &ws);
        let slice = &got.data()[gi * cout_g * plane..(gi + 1) * cout_g * plane];
        if single.data() != slice || direct != slice {
            return Err(format!("group {gi} of {g} differs ({cin_g}->{cout_g}, k{ks}, s{}, p{})", spec.stride, spec.padding));
        }
    }
    Ok(())
}

fn project(x: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = (0..inner).map(|t| x[i * inner + t] * w[t * cols + j]).sum();
        }
    }
    out
}

struct AttnInputs {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
}

impl AttnInputs {
    fn random(r: &mut ChaCha8Rng, spec: &AttnSpec) -> Self {
        let (l, d, kvd) = (spec.seq_len, spec.hidden, spec.kv_dim());
        AttnInputs {
            q: tensor(r, &[l, d]),
            k: tensor(r, &[l, d]),
            v: tensor(r, &[l, d]),
            wq: tensor(r, &[d, d]),
            wk: tensor(r, &[d, kvd]),
            wv: tensor(r, &[d, kvd]),
            wo: tensor(r, &[d, d]),
        }
    }

    fn eval(&self, spec: &AttnSpec) -> Result<Tensor, String> {
        eval_attention(spec, &self.q, &self.k, &self.v, &self.wq, &self.wk, &self.wv, &self.wo).map_err(|e| e.to_string())
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// With one kv head per query head, grouped attention is textbook causal
/// multi-head attention.
pub fn attention_mha(seed: u64) -> Check {
    let mut r = rng(seed);
    let heads = [1, 2, 4][r.gen_range(0..3)];
    let hd = r.gen_range(1..=4);
    let (l, d) = (r.gen_range(1..=6), heads * hd);
    let spec = AttnSpec::new(l, d, heads, heads);
    let io = AttnInputs::random(&mut r, &spec);
    let got = io.eval(&spec)?;

    let q = project(io.q.data(), l, d, io.wq.data(), d);
    let k = project(io.k.data(), l, d, io.wk.data(), d);
    let v = project(io.v.data(), l, d, io.wv.data(), d);
    let mut ctx = vec![0.0; l * d];
    for h in 0..heads {
        for i in 0..l {
            let s: Vec<f64> = (0..=i)
                .map(|j| (0..hd).map(|t| q[i * d + h * hd + t] * k[j * d + h * hd + t]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for t in 0..hd {
                ctx[i * d + h * hd + t] = (0..=i).map(|j| e[j] / z * v[j * d + h * hd + t]).sum();
            }
        }
    }
    let want = project(&ctx, l, d, io.wo.data(), d);
    if close(got.data(), &want, 1e-12) {
        Ok(())
    } else {
        Err(format!("mha L={l} heads={heads} hd={hd}: max diff {}", max_diff(got.data(), &want)))
    }
}

/// A single token attends only to itself: output is the value projection,
/// routed through each query head's kv head, times `wo`. RoPE at position 0
/// is the identity, so it must not matter.
pub fn attention_single_token(seed: u64) -> Check {
    let mut r = rng(seed);
    let heads = [1, 2, 4, 8][r.gen_range(0..4)];
    let divisors: Vec<usize> = (1..=heads).filter(|g| heads % g == 0).collect();
    let groups = divisors[r.gen_range(0..divisors.len())];
    let hd = 2 * r.gen_range(1..=3);
    let d = heads * hd;
    let mut spec = AttnSpec::new(1, d, heads, groups);
    spec.with_rope = r.gen_bool(0.5);
    let io = AttnInputs::random(&mut r, &spec);
    let got = io.eval(&spec)?;
    let kvd = spec.kv_dim();
    let vp = project(io.v.data(), 1, d, io.wv.data(), kvd);
    let per = heads / groups;
    let ctx: Vec<f64> = (0..d).map(|c| vp[(c / hd / per) * hd + c % hd]).collect();
    let want = project(&ctx, 1, d, io.wo.data(), d);
    if close(got.data(), &want, 1e-12) {
        Ok(())
    } else {
        Err(format!("L=1 heads={heads} groups={groups}: max diff {}", max_diff(got.data(), &want)))
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
