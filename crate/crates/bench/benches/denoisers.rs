use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use octdenoise::denoise::{
    anisotropic_diffusion, dwt2, tv_denoise, wavelet_denoise, DiffusionParams, TvParams, WaveletBasis, WaveletParams,
};
use octdenoise::metrics::psnr;
use octdenoise_bench::noisy_step;

fn classical(c: &mut Criterion) {
    let mut group = c.benchmark_group("denoise");
    for size in [64, 128, 256] {
        let image = noisy_step(size);
        group.bench_with_input(BenchmarkId::new("tv", size), &image, |b, img| {
            b.iter(|| tv_denoise(black_box(img), &TvParams::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("wavelet", size), &image, |b, img| {
            b.iter(|| wavelet_denoise(black_box(img), &WaveletParams::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ad", size), &image, |b, img| {
            b.iter(|| anisotropic_diffusion(black_box(img), &DiffusionParams::default()).unwrap())
        });
    }
    group.finish();
}

fn transforms(c: &mut Criterion) {
    let image = noisy_step(256);
    let reference = noisy_step(256);
    for (name, basis) in [("haar", WaveletBasis::Haar), ("db4", WaveletBasis::Daubechies4)] {
        c.bench_function(&format!("dwt2_{name}_256"), |b| {
            b.iter(|| dwt2(black_box(&image), 3, basis).unwrap())
        });
    }
    c.bench_function("psnr_256", |b| {
        b.iter(|| psnr(black_box(&reference), black_box(&image)).unwrap())
    });
}

criterion_group!(benches, classical, transforms);
criterion_main!(benches);
