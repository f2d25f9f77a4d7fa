//! C++ definitions for single kernel instances.
//!
//! Every body computes in `acc_t` and mirrors the oracle's accumulation order,
//! so float32 results differ from the golden vectors only by the final
//! rounding into `data_t`.

use super::writer::{lit, Src};
use crate::kernels::{
    ActKind, AttnSpec, ConvSpec, DropoutSpec, ElementwiseOp, LinearSpec, LinearVariant, LoopAxis, MoveDirection,
    MoveSpec, NormKind, NormSpec, OperatorSpec, PoolKind, PoolSpec, RopeSpec,
};

/// Helpers shared by every kernel body; defined once per translation unit.
pub(crate) const KERNEL_HELPERS: &str = r#"static inline acc_t fb_mul(acc_t x, acc_t y) {
    return x * y;
}

static inline acc_t fb_sigmoid(acc_t x) {
    return 1.0 / (1.0 + std::exp(-x));
}

static inline acc_t fb_hard_sigmoid(acc_t x) {
    acc_t y = x / 6.0 + 0.5;
    return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
}

static inline acc_t fb_gelu(acc_t x) {
    const acc_t c = std::sqrt(2.0 / 3.141592653589793);
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

static inline uint64_t fb_splitmix64(uint64_t state) {
    uint64_t z = state + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

static inline bool fb_dropout_keep(uint64_t seed, uint64_t index, acc_t p) {
    uint64_t r = fb_splitmix64(seed + index * 0x9E3779B97F4A7C15ULL);
    acc_t u = (acc_t)(r >> 11) * (1.0 / 9007199254740992.0);
    return u >= p;
}

static inline void fb_rope_row(acc_t *row, int width, int pos, int head_dim, acc_t base) {
    for (int h = 0; h < width; h += head_dim) {
        for (int p = 0; p < head_dim / 2; ++p) {
            acc_t angle = (acc_t)pos * std::pow(base, -2.0 * (acc_t)p / (acc_t)head_dim);
            acc_t s = std::sin(angle);
            acc_t c = std::cos(angle);
            acc_t a = row[h + 2 * p];
            acc_t b = row[h + 2 * p + 1];
            row[h + 2 * p] = a * c - b * s;
            row[h + 2 * p + 1] = a * s + b * c;
        }
    }
}
"#;

/// Parameter list of the kernel function, in signature order.
pub(crate) fn parameter_list(spec: &OperatorSpec) -> String {
    let sig = spec.signature().expect("validated spec");
    let ins = sig
        .inputs
        .iter()
        .map(|(r, s)| format!("const data_t {r}[{}]", s.numel()));
    let outs = sig.outputs.iter().map(|(r, s)| format!("data_t {r}[{}]", s.numel()));
    ins.chain(outs).collect::<Vec<_>>().join(", ")
}

pub(crate) fn prototype(spec: &OperatorSpec, name: &str) -> String {
    format!("void {name}({})", parameter_list(spec))
}

/// Full definition of one kernel function.
pub(crate) fn definition(spec: &OperatorSpec, name: &str) -> String {
    let mut w = Src::new();
    w.line(format!("// {}", spec.canonical_json()));
    w.open(format!("{} {{", prototype(spec, name)));
    match spec {
        OperatorSpec::Linear(s) => match s.variant {
            LinearVariant::Gemm => gemm(&mut w, s),
            LinearVariant::Matvec => matvec(&mut w, s),
            LinearVariant::Dot => dot(&mut w, s),
            LinearVariant::Chain => chain(&mut w, s),
        },
        OperatorSpec::Conv(s) => conv(&mut w, s),
        OperatorSpec::Norm(s) => norm(&mut w, s),
        OperatorSpec::Activation(s) => activation(&mut w, s.kind, s.shape.numel(), s.shape.last()),
        OperatorSpec::Attention(s) => attention(&mut w, s),
        OperatorSpec::Rope(s) => rope(&mut w, s),
        OperatorSpec::Dropout(s) => dropout(&mut w, s),
        OperatorSpec::Pool(s) => pool(&mut w, s),
        OperatorSpec::Elementwise(s) => {
            let op = if s.op == ElementwiseOp::Add { "+" } else { "*" };
            w.for_loop("ew", "x", s.shape.numel(), 1);
            w.line(format!("c[x] = (data_t)((acc_t)a[x] {op} (acc_t)b[x]);"));
            w.close();
        }
        OperatorSpec::Move(s) => data_move(&mut w, s),
    }
    w.close();
    w.finish()
}

fn bound(s: &LinearSpec, axis: LoopAxis) -> usize {
    match axis {
        LoopAxis::I => s.m,
        LoopAxis::J => s.n,
        LoopAxis::K => s.k,
    }
}

/// Emit the given loops nested in the spec's loop order around `body`.
fn nest(w: &mut Src, s: &LinearSpec, prefix: &str, axes: &[LoopAxis], body: &[String]) {
    let ordered: Vec<LoopAxis> = s.loop_order.0.iter().copied().filter(|a| axes.contains(a)).collect();
    for a in &ordered {
        w.for_loop(&format!("{prefix}_{}", a.var()), a.var(), bound(s, *a), s.unroll[a.index()]);
    }
    for line in body {
        w.line(line);
    }
    for _ in &ordered {
        w.close();
    }
}

fn mul(s: &LinearSpec, x: &str, y: &str) -> String {
    if s.inline_mul {
        format!("(acc_t){x} * (acc_t){y}")
    } else {
        format!("fb_mul({x}, {y})")
    }
}

fn partition(w: &mut Src, var: &str, factor: usize) {
    if factor > 1 {
        w.line(format!("#pragma HLS array_partition variable={var} cyclic factor={factor} dim=1"));
    }
}

fn zero_fill(w: &mut Src, label: &str, var: &str, n: usize) {
    w.for_loop(label, "x", n, 1);
    w.line(format!("{var}[x] = 0;"));
    w.close();
}

fn gemm(w: &mut Src, s: &LinearSpec) {
    let (m, k, n) = (s.m, s.k, s.n);
    let [_, uj, uk] = s.unroll;
    w.line(format!("acc_t acc[{}];", m * n));
    partition(w, "a", uk);
    partition(w, "b", uj);
    partition(w, "acc", uj);
    w.for_loop("gemm_init", "x", m * n, 1);
    if s.accumulate {
        w.line("acc[x] = (acc_t)acc_in[x];");
    } else {
        w.line("acc[x] = 0;");
    }
    w.close();
    let body = format!(
        "acc[i * {n} + j] += {};",
        mul(s, &format!("a[i * {k} + k]"), &format!("b[k * {n} + j]"))
    );
    nest(w, s, "gemm", &[LoopAxis::I, LoopAxis::J, LoopAxis::K], &[body]);
    w.for_loop("gemm_out", "x", m * n, 1);
    if s.bias {
        w.line(format!("out[x] = (data_t)(acc[x] + (acc_t)bias[x % {n}]);"));
    } else {
        w.line("out[x] = (data_t)acc[x];");
    }
    w.close();
}

fn matvec(w: &mut Src, s: &LinearSpec) {
    let (m, k) = (s.m, s.k);
    w.line(format!("acc_t acc[{m}];"));
    partition(w, "a", s.unroll[2]);
    zero_fill(w, "matvec_init", "acc", m);
    let body = format!("acc[i] += {};", mul(s, &format!("a[i * {k} + k]"), "x[k]"));
    nest(w, s, "matvec", &[LoopAxis::I, LoopAxis::K], &[body]);
    w.for_loop("matvec_out", "i", m, 1);
    if s.bias {
        w.line("out[i] = (data_t)(acc[i] + (acc_t)bias[i]);");
    } else {
        w.line("out[i] = (data_t)acc[i];");
    }
    w.close();
}

fn finish_scalar(w: &mut Src, s: &LinearSpec) {
    if s.bias {
        w.line("out[0] = (data_t)(acc + (acc_t)bias[0]);");
    } else {
        w.line("out[0] = (data_t)acc;");
    }
}

fn dot(w: &mut Src, s: &LinearSpec) {
    partition(w, "x", s.unroll[2]);
    partition(w, "y", s.unroll[2]);
    w.line("acc_t acc = 0;");
    nest(w, s, "dot", &[LoopAxis::K], &[format!("acc += {};", mul(s, "x[k]", "y[k]"))]);
    finish_scalar(w, s);
}

fn chain(w: &mut Src, s: &LinearSpec) {
    use crate::kernels::Assoc;
    let (m, k, n) = (s.m, s.k, s.n);
    let (i, j, kk) = (LoopAxis::I, LoopAxis::J, LoopAxis::K);
    // returns the name of the length-`len` vector dotted with the final operand
    let xa = |w: &mut Src| {
        w.line(format!("acc_t xa[{k}];"));
        zero_fill(w, "xa_init", "xa", k);
        nest(w, s, "xa", &[i, kk], &[format!("xa[k] += {};", mul(s, "x[i]", &format!("a[i * {k} + k]")))]);
    };
    let by = |w: &mut Src| {
        w.line(format!("acc_t by[{k}];"));
        zero_fill(w, "by_init", "by", k);
        nest(w, s, "by", &[kk, j], &[format!("by[k] += {};", mul(s, &format!("b[k * {n} + j]"), "y[j]"))]);
    };
    w.line("acc_t acc = 0;");
    match s.assoc_order {
        Assoc::LeftToRight => {
            xa(w);
            w.line(format!("acc_t xab[{n}];"));
            zero_fill(w, "xab_init", "xab", n);
            nest(w, s, "xab", &[kk, j], &[format!("xab[j] += {};", mul(s, "xa[k]", &format!("b[k * {n} + j]")))]);
            nest(w, s, "dot", &[j], &[format!("acc += {};", mul(s, "xab[j]", "y[j]"))]);
        }
        Assoc::Split => {
            xa(w);
            by(w);
            nest(w, s, "dot", &[kk], &[format!("acc += {};", mul(s, "xa[k]", "by[k]"))]);
        }
        Assoc::MatrixFirst => {
            w.line(format!("acc_t ab[{}];", m * n));
            zero_fill(w, "ab_init", "ab", m * n);
            nest(
                w,
                s,
                "ab",
                &[i, j, kk],
                &[format!("ab[i * {n} + j] += {};", mul(s, &format!("a[i * {k} + k]"), &format!("b[k * {n} + j]")))],
            );
            w.line(format!("acc_t aby[{m}];"));
            zero_fill(w, "aby_init", "aby", m);
            nest(w, s, "aby", &[i, j], &[format!("aby[i] += {};", mul(s, &format!("ab[i * {n} + j]"), "y[j]"))]);
            nest(w, s, "dot", &[i], &[format!("acc += {};", mul(s, "x[i]", "aby[i]"))]);
        }
        Assoc::RightToLeft => {
            by(w);
            w.line(format!("acc_t aby[{m}];"));
            zero_fill(w, "aby_init", "aby", m);
            nest(w, s, "aby", &[i, kk], &[format!("aby[i] += {};", mul(s, &format!("a[i * {k} + k]"), "by[k]"))]);
            nest(w, s, "dot", &[i], &[format!("acc += {};", mul(s, "x[i]", "aby[i]"))]);
        }
    }
    finish_scalar(w, s);
}

fn conv(w: &mut Src, s: &ConvSpec) {
    let (oh, ow) = s.out_hw().expect("validated conv");
    let cin_g = s.in_ch / s.groups;
    let cout_g = s.out_ch / s.groups;
    let ks = s.kernel;
    partition(w, "weights", s.unroll_out);
    w.for_loop("conv_co", "co", s.out_ch, s.unroll_out);
    w.for_loop("conv_oy", "oy", oh, 1);
    w.for_loop("conv_ox", "ox", ow, 1);
    w.line(format!("int idx = (co * {oh} + oy) * {ow} + ox;"));
    if s.accumulate {
        w.line("acc_t acc = (acc_t)acc_in[idx];");
    } else {
        w.line("acc_t acc = 0;");
    }
    w.for_loop("conv_ci", "cl", cin_g, s.unroll_in);
    w.line(format!("int ci = (co / {cout_g}) * {cin_g} + cl;"));
    w.for_loop("conv_kh", "kh", ks, 1);
    w.line(format!("int ih = oy * {} + kh - {};", s.stride, s.padding));
    w.line(format!("if (ih < 0 || ih >= {}) continue;", s.h));
    w.for_loop("conv_kw", "kw", ks, 1);
    w.line(format!("int iw = ox * {} + kw - {};", s.stride, s.padding));
    w.line(format!("if (iw < 0 || iw >= {}) continue;", s.w));
    w.line(format!(
        "acc += (acc_t)x[(ci * {} + ih) * {} + iw] * (acc_t)weights[((co * {cin_g} + cl) * {ks} + kh) * {ks} + kw];",
        s.h, s.w
    ));
    w.close();
    w.close();
    w.close();
    if s.bias {
        w.line("acc += (acc_t)bias[co];");
    }
    w.line("y[idx] = (data_t)acc;");
    w.close();
    w.close();
    w.close();
}

fn norm(w: &mut Src, s: &NormSpec) {
    let eps = lit(s.epsilon);
    match s.kind {
        NormKind::Batchnorm => {
            let per = s.shape.numel() / s.shape.dims()[0];
            w.for_loop("bn", "x_i", s.shape.numel(), 1);
            w.line(format!("int ch = x_i / {per};"));
            w.line(format!(
                "acc_t v = ((acc_t)x[x_i] - (acc_t)mean[ch]) / std::sqrt((acc_t)var[ch] + {eps});"
            ));
            if s.affine {
                w.line("v = v * (acc_t)gamma[ch] + (acc_t)beta[ch];");
            }
            w.line("y[x_i] = (data_t)v;");
            w.close();
        }
        NormKind::Layernorm | NormKind::Rmsnorm => {
            let n = s.shape.last();
            let rows = s.shape.numel() / n;
            let layer = s.kind == NormKind::Layernorm;
            w.for_loop("norm_row", "r", rows, 1);
            w.line(format!("const int base = r * {n};"));
            if layer {
                w.line("acc_t sum = 0;");
                w.for_loop("norm_sum", "c", n, 1);
                w.line("sum += (acc_t)x[base + c];");
                w.close();
                w.line(format!("acc_t mean = sum / {};", lit(n as f64)));
                w.line("acc_t sq = 0;");
                w.for_loop("norm_var", "c", n, 1);
                w.line("acc_t d = (acc_t)x[base + c] - mean;");
                w.line("sq += d * d;");
                w.close();
            } else {
                w.line("acc_t sq = 0;");
                w.for_loop("norm_sq", "c", n, 1);
                w.line("acc_t v = (acc_t)x[base + c];");
                w.line("sq += v * v;");
                w.close();
            }
            w.line(format!("acc_t inv = 1.0 / std::sqrt(sq / {} + {eps});", lit(n as f64)));
            w.for_loop("norm_out", "c", n, 1);
            if layer {
                w.line("acc_t v = ((acc_t)x[base + c] - mean) * inv;");
                if s.affine {
                    w.line("v = v * (acc_t)gamma[c] + (acc_t)beta[c];");
                }
            } else {
                w.line("acc_t v = (acc_t)x[base + c] * inv;");
                if s.affine {
                    w.line("v *= (acc_t)gamma[c];");
                }
            }
            w.line("y[base + c] = (data_t)v;");
            w.close();
            w.close();
        }
    }
}

fn activation(w: &mut Src, kind: ActKind, numel: usize, last: usize) {
    if kind == ActKind::Softmax {
        let rows = numel / last;
        w.line(format!("acc_t e[{last}];"));
        w.for_loop("softmax_row", "r", rows, 1);
        w.line(format!("const int base = r * {last};"));
        w.line("acc_t mx = -INFINITY;");
        w.for_loop("softmax_max", "c", last, 1);
        w.line("acc_t v = (acc_t)x[base + c];");
        w.line("if (v > mx) mx = v;");
        w.close();
        w.for_loop("softmax_exp", "c", last, 1);
        w.line("e[c] = std::exp((acc_t)x[base + c] - mx);");
        w.close();
        w.line("acc_t sum = 0;");
        w.for_loop("softmax_sum", "c", last, 1);
        w.line("sum += e[c];");
        w.close();
        w.for_loop("softmax_out", "c", last, 1);
        w.line("y[base + c] = (data_t)(e[c] / sum);");
        w.close();
        w.close();
        return;
    }
    let expr = match kind {
        ActKind::Relu => "v > 0.0 ? v : 0.0",
        ActKind::Relu6 => "v > 0.0 ? (v < 6.0 ? v : 6.0) : 0.0",
        ActKind::Sigmoid => "fb_sigmoid(v)",
        ActKind::Tanh => "std::tanh(v)",
        ActKind::Elu => "v > 0.0 ? v : std::exp(v) - 1.0",
        ActKind::Silu => "v * fb_sigmoid(v)",
        ActKind::Gelu => "fb_gelu(v)",
        ActKind::HardSigmoid => "fb_hard_sigmoid(v)",
        ActKind::HardSwish => "v * fb_hard_sigmoid(v)",
        ActKind::Exp => "std::exp(v)",
        ActKind::Softmax => unreachable!(),
    };
    w.for_loop("act", "x_i", numel, 1);
    w.line("acc_t v = (acc_t)x[x_i];");
    w.line(format!("y[x_i] = (data_t)({expr});"));
    w.close();
}

fn project(w: &mut Src, label: &str, dst: &str, src: &str, src_is_data: bool, weight: &str, l: usize, inner: usize, cols: usize, final_store: bool) {
    w.for_loop(&format!("{label}_i"), "i", l, 1);
    w.for_loop(&format!("{label}_j"), "j", cols, 1);
    w.line("acc_t acc = 0;");
    w.for_loop(&format!("{label}_t"), "t", inner, 1);
    let s = if src_is_data {
        format!("(acc_t){src}[i * {inner} + t]")
    } else {
        format!("{src}[i * {inner} + t]")
    };
    w.line(format!("acc += {s} * (acc_t){weight}[t * {cols} + j];"));
    w.close();
    if final_store {
        w.line(format!("{dst}[i * {cols} + j] = (data_t)acc;"));
    } else {
        w.line(format!("{dst}[i * {cols} + j] = acc;"));
    }
    w.close();
    w.close();
}

fn attention(w: &mut Src, s: &AttnSpec) {
    let (l, d, hd, kvd) = (s.seq_len, s.hidden, s.head_dim(), s.kv_dim());
    let per_group = s.heads / s.kv_groups;
    let attends = match s.window {
        Some(win) => format!("(j <= i && j + {win} > i)"),
        None => "(j <= i)".to_string(),
    };
    w.line(format!("acc_t qp[{}];", l * d));
    w.line(format!("acc_t kp[{}];", l * kvd));
    w.line(format!("acc_t vp[{}];", l * kvd));
    w.line(format!("acc_t ctx[{}];", l * d));
    w.line(format!("acc_t scores[{l}];"));
    project(w, "proj_q", "qp", "q", true, "wq", l, d, d, false);
    project(w, "proj_k", "kp", "k", true, "wk", l, d, kvd, false);
    project(w, "proj_v", "vp", "v", true, "wv", l, d, kvd, false);
    if s.with_rope {
        let base = lit(s.rope_base);
        w.for_loop("rope", "i", l, 1);
        w.line(format!("fb_rope_row(&qp[i * {d}], {d}, i, {hd}, {base});"));
        w.line(format!("fb_rope_row(&kp[i * {kvd}], {kvd}, i, {hd}, {base});"));
        w.close();
    }
    w.line(format!("const acc_t scale = 1.0 / std::sqrt({});", lit(hd as f64)));
    w.for_loop("attn_head", "h", s.heads, 1);
    w.line(format!("const int kvh = h / {per_group};"));
    w.for_loop("attn_row", "i", l, 1);
    w.line("acc_t mx = -INFINITY;");
    w.for_loop("attn_score", "j", l, 1);
    w.line(format!("if (!{attends}) continue;"));
    w.line("acc_t acc = 0;");
    w.for_loop("attn_dot", "t", hd, 1);
    w.line(format!("acc += qp[i * {d} + h * {hd} + t] * kp[j * {kvd} + kvh * {hd} + t];"));
    w.close();
    w.line("scores[j] = acc * scale;");
    w.line("if (scores[j] > mx) mx = scores[j];");
    w.close();
    w.line("acc_t sum = 0;");
    w.for_loop("attn_exp", "j", l, 1);
    w.open(format!("if {attends} {{"));
    w.line("scores[j] = std::exp(scores[j] - mx);");
    w.line("sum += scores[j];");
    w.close();
    w.close();
    w.for_loop("attn_ctx", "t", hd, 1);
    w.line("acc_t acc = 0;");
    w.for_loop("attn_mix", "j", l, 1);
    w.open(format!("if {attends} {{"));
    w.line(format!("acc += scores[j] / sum * vp[j * {kvd} + kvh * {hd} + t];"));
    w.close();
    w.close();
    w.line(format!("ctx[i * {d} + h * {hd} + t] = acc;"));
    w.close();
    w.close();
    w.close();
    project(w, "proj_o", "out", "ctx", false, "wo", l, d, d, true);
}

fn rope(w: &mut Src, s: &RopeSpec) {
    let d = s.dim;
    w.line(format!("acc_t row[{d}];"));
    w.for_loop("rope_row", "i", s.seq_len, 1);
    w.for_loop("rope_load", "c", d, 1);
    w.line(format!("row[c] = (acc_t)x[i * {d} + c];"));
    w.close();
    w.line(format!("fb_rope_row(row, {d}, i, {}, {});", s.head_dim, lit(s.base)));
    w.for_loop("rope_store", "c", d, 1);
    w.line(format!("y[i * {d} + c] = (data_t)row[c];"));
    w.close();
    w.close();
}

fn dropout(w: &mut Src, s: &DropoutSpec) {
    let p = lit(s.p);
    w.for_loop("dropout", "x_i", s.shape.numel(), 1);
    w.open(format!("if (fb_dropout_keep({}ULL, (uint64_t)x_i, {p})) {{", s.seed));
    w.line(format!("y[x_i] = (data_t)((acc_t)x[x_i] / (1.0 - {p}));"));
    w.reopen("} else {");
    w.line("y[x_i] = (data_t)0.0;");
    w.close();
    w.close();
}

fn pool(w: &mut Src, s: &PoolSpec) {
    let (oh, ow) = s.out_hw().expect("validated pool");
    let ks = s.kernel;
    w.for_loop("pool_c", "c", s.channels, 1);
    w.for_loop("pool_oy", "oy", oh, 1);
    w.for_loop("pool_ox", "ox", ow, 1);
    match s.kind {
        PoolKind::Max => w.line("acc_t acc = -INFINITY;"),
        PoolKind::Avg => w.line("acc_t acc = 0;"),
    }
    w.for_loop("pool_kh", "kh", ks, 1);
    w.for_loop("pool_kw", "kw", ks, 1);
    w.line(format!(
        "acc_t v = (acc_t)x[(c * {} + oy * {} + kh) * {} + ox * {} + kw];",
        s.h, s.stride, s.w, s.stride
    ));
    match s.kind {
        PoolKind::Max => w.line("if (v > acc) acc = v;"),
        PoolKind::Avg => w.line("acc += v;"),
    }
    w.close();
    w.close();
    if s.kind == PoolKind::Avg {
        w.line(format!("acc /= {};", lit((ks * ks) as f64)));
    }
    w.line(format!("y[(c * {oh} + oy) * {ow} + ox] = (data_t)acc;"));
    w.close();
    w.close();
    w.close();
}

fn data_move(w: &mut Src, s: &MoveSpec) {
    let dims = s.shape.dims();
    let ostrides = s.outer.strides();
    let tstrides = s.shape.strides();
    for (a, &n) in dims.iter().enumerate() {
        w.for_loop(&format!("move_d{a}"), &format!("r{a}"), n, 1);
    }
    let outer: Vec<String> = (0..dims.len())
        .map(|a| format!("(r{a} + {}) * {}", s.offset[a], ostrides[a]))
        .collect();
    let tile: Vec<String> = (0..dims.len()).map(|a| format!("r{a} * {}", tstrides[a])).collect();
    let (outer, tile) = (outer.join(" + "), tile.join(" + "));
    match s.direction {
        MoveDirection::Load => w.line(format!("dst[{tile}] = src[{outer}];")),
        MoveDirection::Store => w.line(format!("dst[{outer}] = src[{tile}];")),
    }
    for _ in dims {
        w.close();
    }
}
