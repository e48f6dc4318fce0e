use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pomdp_ope::data::{generate_tabular_dataset, population_sample, GenerationMode};
use pomdp_ope::diagnostics::condition_report;
use pomdp_ope::dynamics::{population_dynamics_moments, spectral_joint_probability, DynamicsScale};
use pomdp_ope::estimators::{compute_moments, minimax_linear, minimax_rkhs, EstimatorConfig, RkhsKernels};
use pomdp_ope::features::{Kernel, OneHotFbar, OneHotHistory};
use pomdp_ope::model::MemoryPolicy;
use pomdp_ope_bench::fixture;

fn population(c: &mut Criterion) {
    let mut g = c.benchmark_group("population_minimax");
    g.sample_size(10);
    for memory in [0usize, 1] {
        let f = fixture(4, memory, 1);
        let ab = f.model.alphabet();
        let ff = OneHotFbar::new(ab, memory, 2).unwrap();
        let fh = OneHotHistory::new(ab, memory + 2).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(memory), &memory, |b, _| {
            b.iter(|| {
                let pop = population_sample(&f.model, &f.behavior, f.window).unwrap();
                let m = compute_moments(&pop.view(), &ff, &fh, &f.evaluation, &f.behavior, 0.9).unwrap();
                black_box(minimax_linear(&m, &EstimatorConfig::default()).unwrap().j_hat)
            })
        });
    }
    g.finish();
}

fn empirical(c: &mut Criterion) {
    let f = fixture(3, 0, 2);
    let ab = f.model.alphabet();
    let ff = OneHotFbar::new(ab, 0, 2).unwrap();
    let fh = OneHotHistory::new(ab, 2).unwrap();
    let pb: MemoryPolicy = f.behavior.clone().into();
    let ds = generate_tabular_dataset(&f.model, &pb, 10_000, 1_000, f.window, GenerationMode::IidPerTuple, 3).unwrap();
    c.bench_function("generate_10k", |b| {
        b.iter(|| generate_tabular_dataset(&f.model, &pb, 10_000, 1_000, f.window, GenerationMode::IidPerTuple, 3).unwrap())
    });
    c.bench_function("moments_and_linear_10k", |b| {
        b.iter(|| {
            let m = compute_moments(&ds.view(), &ff, &fh, &f.evaluation, &f.behavior, 0.9).unwrap();
            black_box(minimax_linear(&m, &EstimatorConfig::default()).unwrap().j_hat)
        })
    });
    let small = generate_tabular_dataset(&f.model, &pb, 500, 100, f.window, GenerationMode::IidPerTuple, 4).unwrap();
    let cfg = EstimatorConfig {
        lambda: 1.0,
        alpha: 1e-3,
        alpha_prime: 1e-3,
    };
    let k = RkhsKernels {
        fbar: Kernel::Gaussian { bandwidth: None },
        history: Kernel::Gaussian { bandwidth: None },
    };
    c.bench_function("rkhs_gaussian_500", |b| {
        b.iter(|| black_box(minimax_rkhs(&small.view(), &ff, &fh, k, &f.evaluation, &f.behavior, 0.9, &cfg).unwrap().j_hat))
    });
}

fn diagnostics_and_dynamics(c: &mut Criterion) {
    let f = fixture(4, 0, 5);
    c.bench_function("condition_report", |b| {
        b.iter(|| black_box(condition_report(&f.model, &f.behavior, &f.evaluation, f.window).unwrap()))
    });
    let ab = f.model.alphabet();
    let w = pomdp_ope::data::WindowConfig::new(0, 1, 1).unwrap();
    let ff = OneHotFbar::new(ab, 0, 1).unwrap();
    let fh = OneHotHistory::new(ab, 1).unwrap();
    let mo = population_dynamics_moments(&f.model, &f.behavior, &f.evaluation, w, &ff, &fh, DynamicsScale::Joint).unwrap();
    let seq = [(0, 1), (2, 0), (3, 1), (1, 0)];
    c.bench_function("spectral_joint_len4", |b| b.iter(|| black_box(spectral_joint_probability(&mo, &seq).unwrap())));
}

criterion_group!(benches, population, empirical, diagnostics_and_dynamics);
criterion_main!(benches);
