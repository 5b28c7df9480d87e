use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rpcmi::objectives::objective_with_grad;
use rpcmi::{baseline_value, invert_critic, optimal_critic, rpc_value, ObjectiveKind, RelativeParams};
use rpcmi_eval::score_batch;

fn values(c: &mut Criterion) {
    let params = RelativeParams::default();
    let mut group = c.benchmark_group("value");
    for n in [64, 1024] {
        let batch = score_batch(n, n, 1);
        group.bench_with_input(BenchmarkId::new("rpc", n), &batch, |b, s| {
            b.iter(|| rpc_value(black_box(s), &params).unwrap())
        });
        for kind in [ObjectiveKind::Dv, ObjectiveKind::Nwj, ObjectiveKind::Js] {
            group.bench_with_input(BenchmarkId::new(kind.name(), n), &batch, |b, s| {
                b.iter(|| baseline_value(kind, black_box(s)).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("rpc_grad", n), &batch, |b, s| {
            b.iter(|| objective_with_grad(ObjectiveKind::Rpc, black_box(s), &params).unwrap())
        });
    }
    group.finish();
}

fn critic_map(c: &mut Criterion) {
    let params = RelativeParams::default();
    let ratios: Vec<f64> = (0..1000).map(|i| 10f64.powf(-5.0 + i as f64 * 0.01)).collect();
    c.bench_function("optimal_critic_1000", |b| {
        b.iter(|| {
            ratios
                .iter()
                .map(|&r| optimal_critic(black_box(r), &params).unwrap())
                .sum::<f64>()
        })
    });
    let scores: Vec<f64> = ratios.iter().map(|&r| optimal_critic(r, &params).unwrap()).collect();
    c.bench_function("invert_critic_1000", |b| {
        b.iter(|| {
            scores
                .iter()
                .map(|&f| invert_critic(black_box(f), &params).unwrap().ratio)
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, values, critic_map);
criterion_main!(benches);
