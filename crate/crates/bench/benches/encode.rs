use criterion::{criterion_group, criterion_main, Criterion};
use mvrd_core::codec::{decode, encode_frame, EncoderConfig, RateMode};
use mvrd_core::corpus::synthetic_image;
use mvrd_core::features::{Vgg11Features, ZeroFeatures};
use mvrd_core::frame::CtuGrid;
use mvrd_core::roim::RoimMap;
use std::hint::black_box;

fn encode(c: &mut Criterion) {
    let frame = synthetic_image(5, 64, 64);
    let roim = RoimMap::empty(&CtuGrid::new(64, 64, 32).unwrap());
    let cfg = EncoderConfig { ctu_size: 32, rate: RateMode::ConstantQp(34), ..EncoderConfig::default() };
    let net = Vgg11Features::builtin(0);

    let mut g = c.benchmark_group("encode_64x64_qp34");
    g.sample_size(10);
    g.bench_function("mse_only", |b| {
        b.iter(|| encode_frame(black_box(&frame), &roim, &cfg, &ZeroFeatures).unwrap())
    });
    g.bench_function("msfd_vgg11", |b| {
        b.iter(|| encode_frame(black_box(&frame), &roim, &cfg, &net).unwrap())
    });
    g.finish();

    let stream = encode_frame(&frame, &roim, &cfg, &ZeroFeatures).unwrap().bitstream;
    c.bench_function("decode_64x64", |b| b.iter(|| decode(black_box(&stream)).unwrap()));
}

criterion_group!(benches, encode);
criterion_main!(benches);
