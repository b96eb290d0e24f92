//! Benchmarks for the numerical kernels: closed-form mask moments and
//! their enumeration oracle, the second-moment operators, the fixed-point
//! solves, the exact recursions, and the Monte Carlo driver.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dropout_dynamics::dropout::{e_dadbd, enumerate_mask_expectation};
use dropout_dynamics::{
    exact_chain_moments, run_ensemble, EnsembleConfig, Matrix, SOperator, TOperator, Vector,
};
use dropout_dynamics_bench::{
    certificate_alpha, dropout_config, gaussian_model, random_symmetric, random_vector,
    reference_model, safe_alpha,
};

const P: f64 = 0.5;

fn bench_mask_moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("mask_moments");
    for d in [4usize, 16, 64] {
        let a = random_symmetric(d, 7);
        let b = random_symmetric(d, 8);
        group.bench_with_input(BenchmarkId::new("closed_form", d), &d, |bench, _| {
            bench.iter(|| e_dadbd(&a, &b, P).unwrap());
        });
    }
    for d in [8usize, 12] {
        let a = random_symmetric(d, 7);
        let b = random_symmetric(d, 8);
        group.bench_with_input(BenchmarkId::new("enumerated", d), &d, |bench, _| {
            bench.iter(|| {
                enumerate_mask_expectation(
                    |mask| {
                        let dm = Matrix::from_diag(mask.as_slice());
                        &(&dm * &a) * &(&dm * &(&b * &dm))
                    },
                    d,
                    P,
                )
                .unwrap()
            });
        });
    }
    group.finish();
}

fn bench_operator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_apply");
    for d in [2usize, 8, 32] {
        let m = gaussian_model(2 * d, d, 100 + d as u64);
        let alpha = safe_alpha(&m, P);
        let s = SOperator::new(&m, alpha, P).unwrap();
        let t = TOperator::new(&m, alpha, P).unwrap();
        let a = random_symmetric(d, 9);
        group.bench_with_input(BenchmarkId::new("dropout_map", d), &d, |bench, _| {
            bench.iter(|| s.apply(&a).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("simplified_map", d), &d, |bench, _| {
            bench.iter(|| t.apply(&a).unwrap());
        });
    }
    group.finish();
}

fn bench_fixed_point(c: &mut Criterion) {
    let mut group = c.benchmark_group("fixed_point");
    group.sample_size(20);
    for d in [2usize, 4, 8] {
        let m = gaussian_model(2 * d, d, 200 + d as u64);
        let s = SOperator::new(&m, certificate_alpha(&m, P), P).unwrap();
        group.bench_with_input(BenchmarkId::new("excess_covariance", d), &d, |bench, _| {
            bench.iter(|| s.fixed_point_excess_cov(1e-12).unwrap());
        });
    }
    group.finish();
}

fn bench_moment_recursion(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment_recursion");
    for d in [2usize, 8, 32] {
        let m = gaussian_model(2 * d, d, 300 + d as u64);
        let s = SOperator::new(&m, safe_alpha(&m, P), P).unwrap();
        let beta0 = random_vector(d, 10);
        group.bench_with_input(BenchmarkId::new("sequence_to_200", d), &d, |bench, _| {
            bench.iter(|| s.moment_sequence(&beta0, 200).unwrap());
        });
    }
    group.finish();
}

fn bench_chain_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("chain_enumeration");
    group.sample_size(10);
    let m = reference_model();
    let beta0 = Vector::new(vec![0.3, -0.2]).unwrap();
    for k in [4usize, 8] {
        group.bench_with_input(BenchmarkId::new("mask_sequences", k), &k, |bench, &k| {
            bench.iter(|| exact_chain_moments(&m, 0.05, P, &beta0, k).unwrap());
        });
    }
    group.finish();
}

fn bench_ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    let m = gaussian_model(8, 4, 400);
    for replicas in [16usize, 64] {
        let scheme = dropout_config(&m, P, 50, 17);
        let cfg = EnsembleConfig::new(replicas, scheme, true, 99).unwrap();
        group.bench_with_input(
            BenchmarkId::new("replicas", replicas),
            &replicas,
            |bench, _| {
                bench.iter(|| run_ensemble(&m, &cfg).unwrap());
            },
        );
    }
    group.finish();
}

fn bench_sym_eig(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for d in [4usize, 16, 64] {
        let gram = gaussian_model(2 * d, d, 500 + d as u64).gram();
        group.bench_with_input(BenchmarkId::new("gram", d), &d, |bench, _| {
            bench.iter(|| gram.sym_eig().unwrap());
        });
    }
    group.finish();
}

criterion_group!(
    kernels,
    bench_mask_moments,
    bench_operator_apply,
    bench_fixed_point,
    bench_moment_recursion,
    bench_chain_enumeration,
    bench_ensemble,
    bench_sym_eig
);
criterion_main!(kernels);
