use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rpcmi::{CriticConfig, CriticState, ObjectiveKind, OptimizerConfig, RelativeParams, Rng};
use rpcmi_eval::pair_batch;

// One optimisation step of the default 20-d staircase critic.
fn training_step(c: &mut Criterion) {
    let params = RelativeParams::default();
    let opt = OptimizerConfig::default();
    let batch = pair_batch(20, 2.0, 64, 3);
    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    for kind in [ObjectiveKind::Rpc, ObjectiveKind::Nwj, ObjectiveKind::Cpc] {
        let mut critic = CriticState::new(CriticConfig::new(40), &mut Rng::seed_from_u64(0)).unwrap();
        group.bench_function(BenchmarkId::from_parameter(kind.name()), |b| {
            b.iter(|| {
                let mut out = critic.backward(&batch, kind, &params).unwrap();
                out.grads.scale(-1.0);
                critic.step(&out.grads, &opt).unwrap();
            })
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let critic = CriticState::new(CriticConfig::new(40), &mut Rng::seed_from_u64(0)).unwrap();
    let batch = pair_batch(20, 2.0, 64, 4);
    c.bench_function("score_pairs_64", |b| {
        b.iter(|| critic.score_pairs(batch.joint_x.view(), batch.joint_y.view()).unwrap())
    });
    c.bench_function("score_matrix_64", |b| {
        b.iter(|| critic.score_matrix(batch.joint_x.view(), batch.joint_y.view()).unwrap())
    });
}

criterion_group!(benches, training_step, scoring);
criterion_main!(benches);
