use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meshmotion::anim::forward_kinematics;
use meshmotion::converter::{convert_edit, kde_density};
use meshmotion::retarget::{fit_part_transforms, transfer_clip};
use meshmotion::ConverterConfig;
use meshmotion_bench::{cloud, demo};

fn converter(c: &mut Criterion) {
    let d = demo(1);
    let config = ConverterConfig::default();
    c.bench_function("convert_edit/fixture_fix", |b| {
        b.iter(|| convert_edit(&d.target.mesh, &d.target.weights, black_box(&d.target.fix), &config).unwrap())
    });

    let mut group = c.benchmark_group("kde_density");
    for n in [100, 1_000, 10_000] {
        let points = cloud(n);
        let query = points[n / 2];
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, points| {
            b.iter(|| kde_density(points, black_box(&query), &config, 2.0).unwrap())
        });
    }
    group.finish();
}

fn motion(c: &mut Criterion) {
    let d = demo(48);
    let pose = d.human.clip.frame(10);
    c.bench_function("forward_kinematics/human", |b| {
        b.iter(|| forward_kinematics(&d.human.skeleton, black_box(pose)).unwrap())
    });
    c.bench_function("skin_clip/48_frames", |b| {
        b.iter(|| meshmotion::anim::skin_clip(&d.human.clip, &d.human.mesh, &d.human.skeletal_weights).unwrap())
    });
    c.bench_function("fit_part_transforms/one_frame", |b| {
        b.iter(|| fit_part_transforms(&d.human.mesh, black_box(&d.source_frames[10]), &d.human.part_weights).unwrap())
    });
    let mut group = c.benchmark_group("transfer_clip");
    group.sample_size(20);
    group.bench_function("48_frames", |b| b.iter(|| transfer_clip(&d.session, black_box(&d.source_frames)).unwrap()));
    group.finish();
}

criterion_group!(benches, converter, motion);
criterion_main!(benches);
