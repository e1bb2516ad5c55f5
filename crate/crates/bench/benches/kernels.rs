//! Hot-path kernels at default experiment scale: batched forward/backward,
//! prediction re-weighting, neighbor aggregation over the full bank,
//! prototype selection, and one full objective evaluation.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sfadapt_bench::{default_scene, random_simplexes};
use sfadapt_core::harness::select_proxy;
use sfadapt_core::mixadapt::{total_loss, AdaptPlan};
use sfadapt_core::numkit::Rng;
use sfadapt_core::proxy::build_proxy;
use sfadapt_core::pseudo::{aggregate, frequency_weight};
use sfadapt_core::source::SmoothingConfig;

fn bench_model(c: &mut Criterion) {
    let (config, train, model, _) = default_scene();
    let batch = config.adapt.batch_size;
    let xs: Vec<&[f64]> = train
        .samples()
        .iter()
        .take(batch)
        .map(|s| s.x.as_slice())
        .collect();
    c.bench_function("forward_batch_64", |b| {
        b.iter(|| model.forward_batch(black_box(&xs)).unwrap())
    });

    let cache = model.forward_batch(&xs).unwrap();
    let k = model.num_classes();
    let dlogits: Vec<Vec<f64>> = cache
        .probs()
        .iter()
        .map(|p| p.probs().iter().map(|&v| v - 1.0 / k as f64).collect())
        .collect();
    c.bench_function("backward_batch_64", |b| {
        b.iter(|| model.backward(black_box(&cache), black_box(&dlogits)).unwrap())
    });
}

fn bench_pseudo(c: &mut Criterion) {
    let (config, _, _, bank) = default_scene();
    let mut rng = Rng::with_stream(1, 60);
    let batch = random_simplexes(&mut rng, config.adapt.batch_size, 4);
    c.bench_function("frequency_weight_64x4", |b| {
        b.iter(|| frequency_weight(black_box(&batch)).unwrap())
    });

    c.bench_function("aggregate_m5_bank1600", |b| {
        let mut i = 0usize;
        b.iter(|| {
            i = (i + 1) % bank.len();
            aggregate(black_box(i), &bank, &config.pseudo).unwrap()
        })
    });
}

fn bench_proxy(c: &mut Criterion) {
    let (config, train, model, _) = default_scene();
    let xs: Vec<&[f64]> = train.samples().iter().map(|s| s.x.as_slice()).collect();
    let cache = model.forward_batch(&xs).unwrap();
    c.bench_function("build_proxy_n40_k4_1600", |b| {
        b.iter(|| {
            build_proxy(
                black_box(cache.features()),
                &model.classifier,
                &config.proxy,
            )
            .unwrap()
        })
    });
}

fn bench_objective(c: &mut Criterion) {
    let (config, train, model, bank) = default_scene();
    let batch = config.adapt.batch_size;
    let mut rng = Rng::with_stream(2, 61);
    let proxy = select_proxy(&model, &train, config.selector, &config.proxy, &mut rng).unwrap();
    let proxy_xs: Vec<&[f64]> = proxy.entries()[..batch]
        .iter()
        .map(|e| train.sample(e.target_index).x.as_slice())
        .collect();
    let proxy_classes: Vec<usize> = proxy.entries()[..batch]
        .iter()
        .map(|e| e.assigned_class)
        .collect();
    let target_indices: Vec<usize> = (0..batch).collect();
    let view = train.unlabeled();
    let plan = AdaptPlan {
        smoothing: SmoothingConfig::new(config.source.smoothing_alpha, 4).unwrap(),
        pseudo: config.pseudo,
        mixup: config.mixup,
        adapt: config.adapt,
        toggles: config.toggles,
    };
    c.bench_function("total_loss_batch64", |b| {
        b.iter(|| {
            let mut mix_rng = Rng::with_stream(3, 62);
            total_loss(
                black_box(&model),
                &proxy_xs,
                &proxy_classes,
                &view,
                &target_indices,
                &bank,
                &plan,
                0.5,
                0.1,
                &mut mix_rng,
            )
            .unwrap()
        })
    });
}

criterion_group!(kernels, bench_model, bench_pseudo, bench_proxy, bench_objective);
criterion_main!(kernels);
