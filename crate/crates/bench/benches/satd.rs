use criterion::{criterion_group, criterion_main, Criterion};
use mvrd_core::corpus::synthetic_image;
use mvrd_core::frame::CtuGrid;
use mvrd_core::satd::{block_satd, SatdReport};
use std::hint::black_box;

fn satd(c: &mut Criterion) {
    let mut block = [[0i32; 8]; 8];
    for (i, row) in block.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ((i * 37 + j * 11) % 255) as i32;
        }
    }
    c.bench_function("block_satd_8x8", |b| b.iter(|| block_satd(black_box(&block))));

    let frame = synthetic_image(1, 512, 512);
    let grid = CtuGrid::new(512, 512, 64).unwrap();
    c.bench_function("satd_pre_analysis_512", |b| {
        b.iter(|| SatdReport::analyze(black_box(&frame), &grid))
    });
}

criterion_group!(benches, satd);
criterion_main!(benches);
