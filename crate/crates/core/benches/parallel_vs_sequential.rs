use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modecal_core::gp::{gp_fit, KernelParams, QBatch, QeiContext};
use modecal_core::par::ExecPolicy;
use modecal_core::rng;
use modecal_core::sim::{Scenario, Simulator, BUNDLED_GROUND_TRUTH};
use rand::Rng;

const POLICIES: [(&str, ExecPolicy); 2] = [("sequential", ExecPolicy::Sequential), ("parallel", ExecPolicy::Parallel)];

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_10k_agents_7_iterations");
    group.sample_size(10);
    for (name, policy) in POLICIES {
        let sim = Simulator::new(Scenario::bundled()).unwrap().with_policy(policy);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sim.run(&BUNDLED_GROUND_TRUTH, 7, 1).unwrap())
        });
    }
    group.finish();
}

fn qei(c: &mut Criterion) {
    let mut r = rng::stream(3, &[]);
    let data: Vec<(Vec<f64>, f64)> = (0..60)
        .map(|_| {
            let x: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
            let y = x.iter().map(|v| (4.0 * v).sin()).sum();
            (x, y)
        })
        .collect();
    let gp = gp_fit(&data, KernelParams::isotropic(8, 1.0, 0.3, 1e-3)).unwrap();
    let batch = QBatch::new((0..4).map(|_| (0..8).map(|_| r.random::<f64>()).collect()).collect()).unwrap();
    let ctx = QeiContext::new(&gp, &batch, 0.0).unwrap();

    let mut group = c.benchmark_group("qei_100k_draws_q4");
    group.sample_size(10);
    for (name, policy) in POLICIES {
        group.bench_function(BenchmarkId::new("value", name), |b| b.iter(|| ctx.estimate(7, 100_000, policy)));
        group.bench_function(BenchmarkId::new("gradient", name), |b| {
            b.iter(|| ctx.mean_gradient(7, 100_000, policy))
        });
    }
    group.finish();
}

criterion_group!(benches, simulation, qei);
criterion_main!(benches);
