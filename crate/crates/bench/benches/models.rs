use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use octdenoise::models::{Autoencoder, AutoencoderConfig, Classifier, ClassifierConfig};
use octdenoise::training::combined_loss;
use octdenoise::Tape;
use octdenoise_bench::noisy_batch;

fn forward(c: &mut Criterion) {
    let ae = Autoencoder::<f32>::new(AutoencoderConfig::default(), 1).unwrap();
    let clf = Classifier::<f32>::new(ClassifierConfig::default(), 1).unwrap();
    let mut group = c.benchmark_group("forward");
    for n in [1, 16] {
        let batch = noisy_batch(n, 32);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("autoencoder", n), &batch, |b, x| {
            b.iter(|| ae.reconstruct(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("classifier", n), &batch, |b, x| {
            b.iter(|| clf.predict(black_box(x)).unwrap())
        });
    }
    group.finish();
}

/// One regularized training step's forward and backward pass, without the update.
fn training_step(c: &mut Criterion) {
    let ae = Autoencoder::<f32>::new(AutoencoderConfig::default(), 1).unwrap();
    let mut clf = Classifier::<f32>::new(ClassifierConfig::default(), 1).unwrap();
    clf.freeze();
    let noisy = noisy_batch(16, 32);
    let labels: Vec<usize> = (0..16).map(|i| i % 4).collect();
    let mut tape = Tape::new();
    for alpha in [0.0f32, 0.1] {
        c.bench_function(&format!("ae_backward_alpha_{alpha}"), |b| {
            b.iter(|| {
                tape.reset();
                let clean = tape.constant(noisy.clone());
                let input = tape.constant(noisy.clone());
                let fwd = ae.forward(&mut tape, input).unwrap();
                let loss = if alpha == 0.0 {
                    tape.mse(fwd.output, clean).unwrap()
                } else {
                    combined_loss(&mut tape, clean, fwd.output, &labels, &clf, alpha)
                        .unwrap()
                        .total
                };
                tape.backward(loss).unwrap();
            })
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = forward, training_step
}
criterion_main!(benches);
