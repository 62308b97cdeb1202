//! Rayon vs sequential comparisons for the three data-parallel hot paths:
//! the trajectory batch, the adaptive pool scan, and the statevector
//! rotation kernel. The sequential arm runs the same code inside a
//! one-thread rayon pool; the batch additionally has a plain-iterator twin.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use avqds::adaptive::{adaptive_step_unrestricted, build_pool, AdaptiveConfig, PoolKind};
use avqds::models::{make_dephasing, vectorized_effective, AnnealingModel};
use avqds::pauli::PauliString;
use avqds::solvers::{run_trajectory_batch, run_trajectory_batch_seq, Integrator, SolverConfig};
use avqds::state::StateVector;
use avqds::variational::Ansatz;

fn small_cfg() -> SolverConfig {
    SolverConfig {
        dt: 0.01,
        t_f: 0.5,
        lambda: 1e-8,
        pool: PoolKind::P2,
        adaptive: AdaptiveConfig::unrestricted(1e-4),
        record_stride: 10,
        snapshot_stride: 0,
        integrator: Integrator::Euler,
        record_mclachlan: false,
    }
}

fn one_thread() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn bench_trajectory_batch(c: &mut Criterion) {
    let model = AnnealingModel::new(3, 1, 1.0, 0.5, 0.5).unwrap();
    let lm = make_dephasing(&model, 0.01).unwrap();
    let cfg = small_cfg();
    let n = 8;

    let mut group = c.benchmark_group("trajectory_batch");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(run_trajectory_batch_seq(&lm, &cfg, 7, n)))
    });
    group.bench_function("rayon_1_thread", |b| {
        let pool = one_thread();
        b.iter(|| pool.install(|| black_box(run_trajectory_batch(&lm, &cfg, 7, n))))
    });
    group.bench_function("rayon", |b| {
        b.iter(|| black_box(run_trajectory_batch(&lm, &cfg, 7, n)))
    });
    group.finish();
}

fn bench_adaptive_scan(c: &mut Criterion) {
    // doubled register of a 3-spin model: 6 qubits, P3 pool (153 candidates)
    let model = AnnealingModel::default_chain(3).unwrap();
    let lm = make_dephasing(&model, 0.01).unwrap();
    let h = vectorized_effective(&lm, 5.0).unwrap();
    let pool = build_pool(PoolKind::P3, 6).unwrap();

    let mut group = c.benchmark_group("adaptive_scan");
    group.sample_size(10);
    group.bench_function("rayon_1_thread", |b| {
        let p = one_thread();
        b.iter(|| {
            p.install(|| {
                let mut a = Ansatz::new(StateVector::plus_state(6));
                black_box(adaptive_step_unrestricted(&mut a, &h, &pool, 1e-4, 1e-8, 8).unwrap())
            })
        })
    });
    group.bench_function("rayon", |b| {
        b.iter(|| {
            let mut a = Ansatz::new(StateVector::plus_state(6));
            black_box(adaptive_step_unrestricted(&mut a, &h, &pool, 1e-4, 1e-8, 8).unwrap())
        })
    });
    group.finish();
}

fn bench_rotation_kernel(c: &mut Criterion) {
    let n = 16;
    let psi = StateVector::plus_state(n);
    let op = PauliString::from_label("XYZXYZXYZXYZXYZX").unwrap();

    let mut group = c.benchmark_group("exp_rotation_16q");
    group.sample_size(20);
    group.bench_function("rayon_1_thread", |b| {
        let p = one_thread();
        b.iter(|| p.install(|| black_box(psi.apply_exp_rotation(0.3, &op).unwrap())))
    });
    group.bench_function("rayon", |b| {
        b.iter(|| black_box(psi.apply_exp_rotation(0.3, &op).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_trajectory_batch, bench_adaptive_scan, bench_rotation_kernel);
criterion_main!(benches);
