use criterion::{black_box, criterion_group, criterion_main, Criterion};
use forgebench_bench::{example, EXAMPLES};
use forgebench_core::codegen::{emit_design, generate};
use forgebench_core::kernels::{LinearSpec, OperatorSpec};
use forgebench_core::modularize::{emit_modular_design, plan_shared, Policy};
use forgebench_core::sweep::{builtin_suite, expand_grid};

fn emit(c: &mut Criterion) {
    let mut g = c.benchmark_group("emit");
    for name in EXAMPLES {
        let cfg = example(name);
        g.bench_function(name, |b| b.iter(|| emit_design(black_box(&cfg)).unwrap()));
    }
    let cfg = example("gpt_block");
    g.bench_function("gpt_block_with_testbench", |b| b.iter(|| generate(black_box(&cfg), true, 0).unwrap()));
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("expand_grid");
    g.sample_size(10);
    for suite in ["gemm", "dnn", "llm"] {
        let spec = builtin_suite(suite).unwrap();
        g.bench_function(suite, |b| b.iter(|| expand_grid(black_box(&spec)).unwrap()));
    }
    g.finish();
}

fn modular(c: &mut Criterion) {
    let dims = [[24, 32, 16], [16, 48, 8], [32, 16, 24]];
    let specs: Vec<OperatorSpec> = dims
        .iter()
        .map(|&[m, k, n]| OperatorSpec::Linear(LinearSpec::gemm(m, k, n)))
        .collect();
    let programs: Vec<(String, Vec<usize>)> = dims.iter().enumerate().map(|(i, d)| (format!("p{i}"), d.to_vec())).collect();
    let mut g = c.benchmark_group("modularize");
    for policy in [Policy::MinGcd, Policy::MaxFit] {
        g.bench_function(policy.to_string(), |b| {
            b.iter(|| {
                let plan = plan_shared(black_box(&programs), policy).unwrap();
                emit_modular_design("bench", &plan, &specs).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, emit, sweep, modular);
criterion_main!(benches);
