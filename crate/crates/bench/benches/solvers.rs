use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use vsg_bench::{crowd, differential, random_game};
use vsg_core::mean_field::{run_mf_bayesian_q, MfConfig};
use vsg_core::oracle::exploitability;
use vsg_core::soft_eval::{soft_policy_evaluation, uniform_state_policy, ConditionedPolicy, EvalMode, EvalOptions, OpponentModel};
use vsg_core::vpg::{run_vpg, OpponentMode, VpgConfig};

fn soft_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("soft_policy_evaluation");
    for states in [4, 16, 64] {
        let g = random_game(states);
        let marginals: Vec<_> = (0..2).map(|i| uniform_state_policy(&g, i)).collect();
        let pi = ConditionedPolicy::uniform(&g, 0);
        let rho = OpponentModel::from_marginals(0, &marginals);
        group.bench_with_input(BenchmarkId::from_parameter(states), &g, |b, g| {
            b.iter(|| {
                soft_policy_evaluation(g, 0, &pi, &rho, EvalMode::ModeledOpponent, None, &EvalOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn exploitability_bench(c: &mut Criterion) {
    let g = random_game(32);
    let marginals: Vec<_> = (0..2).map(|i| uniform_state_policy(&g, i)).collect();
    c.bench_function("exploitability/32_states", |b| b.iter(|| exploitability(black_box(&g), &marginals).unwrap()));
}

fn vpg(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_vpg");
    group.sample_size(10);
    let g = differential();
    for (name, mode) in [("oracle", OpponentMode::Oracle), ("variational", OpponentMode::Variational)] {
        let mut cfg = VpgConfig::for_game(&g);
        cfg.opponent_mode = mode;
        cfg.max_iters = 500;
        cfg.policy_tol = 1e-6;
        cfg.track_values = false;
        group.bench_function(BenchmarkId::new("differential", name), |b| b.iter(|| run_vpg(&g, &cfg).unwrap()));
    }
    group.finish();
}

fn mean_field(c: &mut Criterion) {
    let g = crowd(1.0);
    let cfg = MfConfig::default();
    c.bench_function("mean_field/crowd_ring", |b| b.iter(|| run_mf_bayesian_q(&g, &cfg).unwrap()));
}

criterion_group!(benches, soft_eval, exploitability_bench, vpg, mean_field);
criterion_main!(benches);
