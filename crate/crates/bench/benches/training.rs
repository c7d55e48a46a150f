use criterion::{criterion_group, criterion_main, Criterion};
use raman_bench::small_dataset;
use raman_core::dataset::NormStats;
use raman_core::model;
use raman_core::nn::{RmsProp, RmsPropState};
use raman_core::Scheme;

fn training_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    for scheme in [Scheme::Counter2, Scheme::Bidir4] {
        let batch = 128;
        let ds = small_dataset(scheme, batch);
        let norm = NormStats::fit(&ds).unwrap();
        let x: Vec<f32> = ds
            .samples
            .iter()
            .flat_map(|s| norm.normalize_x(s.x.values()))
            .map(|v| v as f32)
            .collect();
        let y: Vec<f32> = ds.samples.iter().flat_map(|s| norm.normalize_y(&s.y)).map(|v| v as f32).collect();
        let mut net = model::build(scheme, &ds.grid, 1).unwrap();
        let opt = RmsProp::default();
        let mut state = RmsPropState::new(net.params().len());
        g.bench_function(format!("{scheme}-batch{batch}"), |b| {
            b.iter(|| {
                let (_, grads) = net.loss_and_gradients(&x, &y, batch).unwrap();
                opt.step(net.params_mut(), &grads, &mut state);
            })
        });
        g.bench_function(format!("{scheme}-predict{batch}"), |b| b.iter(|| net.forward(&x, batch).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, training_step);
criterion_main!(benches);
