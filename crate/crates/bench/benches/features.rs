use criterion::{criterion_group, criterion_main, Criterion};
use mvrd_core::corpus::synthetic_image;
use mvrd_core::features::{FeatureProvider, Vgg11Features};
use mvrd_core::frame::BlockRegion;
use mvrd_core::msfd::{msfd, MultiScaleConfig};
use std::hint::black_box;

fn features(c: &mut Criterion) {
    let net = Vgg11Features::builtin(0);
    let mut g = c.benchmark_group("vgg11_extract");
    g.sample_size(20);
    for side in [16u32, 32, 64] {
        let patch = synthetic_image(2, side, side);
        g.bench_function(format!("{side}x{side}"), |b| b.iter(|| net.extract(black_box(&patch))));
    }
    g.finish();

    let orig = synthetic_image(3, 128, 128);
    let recon = synthetic_image(4, 128, 128);
    let cfg = MultiScaleConfig::default();
    let cu = BlockRegion { x: 48, y: 48, w: 32, h: 32 };
    let mut g = c.benchmark_group("msfd");
    g.sample_size(10);
    g.bench_function("cu32_three_windows", |b| {
        b.iter(|| msfd(black_box(&orig), &recon, &cu, &cfg, &net))
    });
    g.finish();
}

criterion_group!(benches, features);
criterion_main!(benches);
