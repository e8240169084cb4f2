use std::hint::black_box;

use attnscale_core::pipeline::{synth_features, FeatureStats};
use attnscale_core::{Mechanism, MechanismConfig, MechanismKind, Rng};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn forward(c: &mut Criterion) {
    let dim = 64;
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    for kind in MechanismKind::ALL {
        let mech = Mechanism::new(kind, MechanismConfig::new(dim, 4).with_slots(16)).unwrap();
        for len in [128, 512, 2048] {
            let u = synth_features(&mut Rng::new(len as u64), len, &FeatureStats::standard(dim)).unwrap();
            group.throughput(Throughput::Elements(len as u64));
            group.bench_with_input(BenchmarkId::new(kind.id(), len), &u, |b, u| {
                b.iter(|| mech.forward(black_box(u), kind.default_mode()).unwrap())
            });
        }
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let dim = 256;
    let mut group = c.benchmark_group("step");
    for kind in MechanismKind::BOUNDED {
        let mech = Mechanism::new(kind, MechanismConfig::new(dim, 4)).unwrap();
        let u = synth_features(&mut Rng::new(1), 1, &FeatureStats::standard(dim)).unwrap();
        let mut state = mech.fresh_state().unwrap();
        group.bench_function(kind.id(), |b| b.iter(|| mech.step(&mut state, black_box(u.row(0))).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, forward, step);
criterion_main!(benches);
