use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sketchvox_bench::document;
use sketchvox_core::canvas::{NoImages, RegionSelection, RenderCache};

fn rasterize(c: &mut Criterion) {
    let mut g = c.benchmark_group("rasterize");
    for n in [10, 100, 400] {
        let doc = document(n, 40);
        g.bench_with_input(BenchmarkId::new("pixmap", n), &doc, |b, doc| {
            b.iter(|| doc.render_pixmap(1.0, &NoImages).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("png", n), &doc, |b, doc| {
            b.iter(|| doc.rasterize(1.0, &NoImages).unwrap())
        });
    }
    g.finish();
}

fn crop(c: &mut Criterion) {
    let doc = document(100, 40);
    let region = RegionSelection::new(200.0, 150.0, 600.0, 450.0);
    c.bench_function("crop_region/fresh", |b| {
        b.iter(|| doc.crop_region(&region, 1.0, &NoImages).unwrap())
    });
    let mut cache = RenderCache::default();
    c.bench_function("crop_region/cached", |b| {
        b.iter(|| doc.crop_cached(&region, 1.0, &NoImages, &mut cache).unwrap())
    });
}

/// One stroke added on top of an already rendered frame.
fn incremental(c: &mut Criterion) {
    let base = document(200, 40);
    let mut next = base.clone();
    let mut extra = sketchvox_bench::strokes(1, 40, 7).pop().unwrap();
    extra.id = "extra".into();
    next.apply(
        sketchvox_core::canvas::CanvasAction::AddStroke { stroke: extra },
        &NoImages,
    )
    .unwrap();
    c.bench_function("render_cached/one_more_stroke", |b| {
        b.iter_batched(
            || {
                let mut cache = RenderCache::default();
                base.render_cached(1.0, &NoImages, &mut cache).unwrap();
                cache
            },
            |mut cache| {
                next.render_cached(1.0, &NoImages, &mut cache).unwrap();
            },
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, rasterize, crop, incremental);
criterion_main!(benches);
