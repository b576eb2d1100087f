use std::hint::black_box;

use colored_drift::estimators::{estimate_path, Checkpoints, Variant};
use colored_drift::linalg::solve_lyapunov;
use colored_drift::noise::GaussianStream;
use colored_drift::sgdct::LearningRate;
use colored_drift::simulate::{drive_colored, InitialState};
use colored_drift::{DriftBasis, Matrix, TimeGrid};
use colored_drift_bench::{stable_drift, unit_model, unit_path};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const STEPS: usize = 100_000;

fn simulation(c: &mut Criterion) {
    let model = unit_model();
    let grid = TimeGrid::new(1e-3, STEPS).unwrap();
    let mut group = c.benchmark_group("simulate");
    group.throughput(Throughput::Elements(STEPS as u64));
    group.bench_function("colored_1d", |b| {
        b.iter(|| {
            let mut noise = GaussianStream::new(black_box(7));
            drive_colored(&model, &grid, &mut noise, &InitialState::default(), &mut ()).unwrap()
        })
    });
    group.finish();
}

fn lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    for n in [2, 4, 8] {
        let a = stable_drift(n);
        let q = Matrix::identity(n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_lyapunov(black_box(&a), black_box(&q)).unwrap())
        });
    }
    group.finish();
}

fn estimation(c: &mut Criterion) {
    let path = unit_path(STEPS, 3);
    let basis = DriftBasis::NegIdentity(1);
    let checkpoints = Checkpoints::final_only(STEPS);
    let lr = Some(LearningRate::new(4.0, 1.0).unwrap());
    let mut group = c.benchmark_group("estimate");
    group.throughput(Throughput::Elements(STEPS as u64));
    for variant in [Variant::MleFiltered, Variant::SgdctFiltered] {
        group.bench_function(variant.name(), |b| {
            b.iter(|| estimate_path(black_box(&path), &basis, &[variant], lr, None, None, &checkpoints).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simulation, lyapunov, estimation);
criterion_main!(benches);
