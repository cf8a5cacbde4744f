use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use irlplan::features::compute_features;
use irlplan::generation::generate_proposals;
use irlplan::prediction::{predict, predict_batch, CmpModelParams};
use irlplan::scenario::Template;
use irlplan::{Backend, FeatureConfig, PredictorConfig};
use irlplan_bench::scene;

fn prediction(c: &mut Criterion) {
    let s = scene(Template::CutIn, 2);
    let plans = s.plans();
    let mut group = c.benchmark_group("prediction");
    for backend in [Backend::Ctrv, Backend::IdmReactive, Backend::Learned] {
        let cfg = PredictorConfig::with_backend(backend);
        let params = (backend == Backend::Learned).then(|| CmpModelParams::init(&cfg));
        let name = format!("{backend:?}");
        group.bench_function(BenchmarkId::new("batch", &name), |b| {
            b.iter(|| predict_batch(black_box(&s.ctx), black_box(&plans), &cfg, params.as_ref()).unwrap())
        });
        group.bench_function(BenchmarkId::new("single", &name), |b| {
            b.iter(|| {
                plans
                    .iter()
                    .map(|p| predict(black_box(&s.ctx), black_box(p), &cfg, params.as_ref()).unwrap())
                    .collect::<Vec<_>>()
            })
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let s = scene(Template::LaneChange, 1);
    c.bench_function("generate_proposals", |b| {
        b.iter(|| generate_proposals(black_box(&s.scenario), black_box(&s.ego)).unwrap())
    });
}

fn features(c: &mut Criterion) {
    let s = scene(Template::CutIn, 2);
    let cfg = PredictorConfig::with_backend(Backend::IdmReactive);
    let futures = predict_batch(&s.ctx, &s.plans(), &cfg, None).unwrap();
    let fcfg = FeatureConfig::default();
    c.bench_function("compute_features/all_proposals", |b| {
        b.iter(|| {
            s.proposals
                .iter()
                .zip(&futures)
                .map(|(p, f)| compute_features(black_box(p), &s.ego.path, &s.ctx, f, &fcfg))
                .collect::<Vec<_>>()
        })
    });
}

criterion_group!(benches, prediction, generation, features);
criterion_main!(benches);
