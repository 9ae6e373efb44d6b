use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use noma_lpwa::allocator::{allocate, cccp_power, AllocatorFlags, CccpSettings};
use noma_lpwa::energy::EhSource;
use noma_lpwa::{InterferenceScenario, Receiver, Scenario, ScenarioConfig, SlotProblem};

fn scenario(density: f64) -> Scenario {
    let cfg = ScenarioConfig {
        eh_source: EhSource::solar(),
        interference: InterferenceScenario::CoSfInterSf { cross: 0.1 },
        rng_seed: 7,
        ..ScenarioConfig::default()
    }
    .with_density(density);
    Scenario::build(cfg).expect("valid scenario")
}

fn bench_allocate(c: &mut Criterion) {
    let mut group = c.benchmark_group("allocate");
    group.sample_size(10);
    for density in [300.0, 1000.0] {
        let s = scenario(density);
        group.bench_with_input(BenchmarkId::new("optimal", density), &s, |b, s| {
            b.iter(|| allocate(black_box(s), &AllocatorFlags::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("baseline", density), &s, |b, s| {
            b.iter(|| allocate(black_box(s), &AllocatorFlags::baseline()).unwrap())
        });
    }
    group.finish();
}

fn bench_cccp(c: &mut Criterion) {
    let mut group = c.benchmark_group("cccp_power");
    for n in [8usize, 32, 128] {
        let gains: Vec<f64> = (0..n).map(|i| 1e6 / (1.0 + i as f64).powi(2)).collect();
        let coupling = |i: usize, j: usize| if (i + j).is_multiple_of(3) { 0.8 } else { 0.05 };
        let problem = SlotProblem::new(gains, vec![0.01; n], coupling, Receiver::Sic);
        let upper = vec![0.025; n];
        group.bench_with_input(BenchmarkId::from_parameter(n), &problem, |b, p| {
            b.iter(|| cccp_power(black_box(p), &upper, None, &CccpSettings::default()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_allocate, bench_cccp);
criterion_main!(benches);
