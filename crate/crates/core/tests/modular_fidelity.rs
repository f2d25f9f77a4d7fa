mod common;

use forgebench_core::kernels::{ConvSpec, KernelCatalog, LinearSpec, OperatorSpec};
use forgebench_core::modularize::{check_fidelity, dims_of, emit_modular_design, plan_shared, Policy};
use forgebench_core::validate_design;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plan_and_check(specs: &[OperatorSpec], policy: Policy, seed: u64) {
    let programs: Vec<(String, Vec<usize>)> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("p{i}"), dims_of(s).unwrap()))
        .collect();
    let plan = plan_shared(&programs, policy).unwrap();
    let design = emit_modular_design("modular", &plan, specs).unwrap();
    let report = validate_design(&design, &KernelCatalog::standard());
    assert!(report.is_empty(), "{:?}", report.messages());
    for e in check_fidelity(&design, &plan, specs, seed).unwrap() {
        assert!(e.bit_exact, "{policy} {specs:?}: {} differs by {}", e.id, e.max_abs_diff);
    }
}

#[test]
fn random_gemm_groups_are_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..20 {
        let count = rng.gen_range(2..=3);
        let specs: Vec<OperatorSpec> = (0..count)
            .map(|_| {
                let mut s = LinearSpec::gemm(rng.gen_range(1..=12), rng.gen_range(1..=12), rng.gen_range(1..=12));
                s.bias = rng.gen_bool(0.5);
                OperatorSpec::Linear(s)
            })
            .collect();
        for policy in [Policy::MinGcd, Policy::MaxFit] {
            plan_and_check(&specs, policy, round);
        }
    }
}

#[test]
fn random_conv_groups_are_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for round in 0..12 {
        let kernel = [1, 3][rng.gen_range(0..2)];
        let stride = rng.gen_range(1..=2);
        let count = rng.gen_range(2..=3);
        let specs: Vec<OperatorSpec> = (0..count)
            .map(|_| {
                let hw = rng.gen_range(kernel.max(2)..=8);
                let mut s = ConvSpec::new(rng.gen_range(1..=4), rng.gen_range(1..=4), hw, hw, kernel);
                s.stride = stride;
                s.padding = kernel / 2;
                s.bias = rng.gen_bool(0.5);
                OperatorSpec::Conv(s)
            })
            .collect();
        for policy in [Policy::MinGcd, Policy::MaxFit] {
            plan_and_check(&specs, policy, round);
        }
    }
}

#[test]
fn modular_gemm_compiles_and_passes_testbench() {
    if !common::have_cxx() {
        eprintln!("skipping: no C++ compiler");
        return;
    }
    let specs = [
        OperatorSpec::Linear(LinearSpec::gemm(4, 6, 2)),
        OperatorSpec::Linear({
            let mut s = LinearSpec::gemm(2, 3, 4);
            s.bias = true;
            s
        }),
    ];
    let programs = vec![("p1".to_string(), vec![4, 6, 2]), ("p2".to_string(), vec![2, 3, 4])];
    let dir = tempfile::tempdir().unwrap();
    for policy in [Policy::MinGcd, Policy::MaxFit] {
        let plan = plan_shared(&programs, policy).unwrap();
        let mut design = emit_modular_design("modular", &plan, &specs).unwrap();
        design.name = format!("modular_{policy}");
        design.synth.top_name = design.name.clone();
        let out = common::check_design(&design, dir.path(), 5).unwrap();
        assert!(out.contains("PASS"), "{out}");
    }
}
