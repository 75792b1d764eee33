use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use sde_bench::{full_scene, vectors, ABSTRACT};
use sde_core::composition::builtin_template;
use sde_core::pipeline::{Backends, MemorySessionStore, Pipeline, PipelineConfig};
use sde_core::prompt_compiler::{compile_prompt, scene_hash, serialize_scene};
use sde_core::theme_extraction::{cluster_vectors, Linkage};

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("cluster");
    for n in [8, 32, 128] {
        let vs = vectors(n, 16);
        let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        for linkage in [Linkage::Single, Linkage::Average] {
            let id = BenchmarkId::new(format!("{linkage:?}").to_lowercase(), n);
            group.bench_with_input(id, &refs, |b, refs| {
                b.iter(|| cluster_vectors(black_box(refs), linkage, 3).unwrap())
            });
        }
    }
    group.finish();
}

fn canonical(c: &mut Criterion) {
    let scene = full_scene();
    let template = builtin_template(&scene.template_id).unwrap();
    c.bench_function("serialize_scene", |b| {
        b.iter(|| serialize_scene(black_box(&scene)).unwrap())
    });
    c.bench_function("scene_hash", |b| b.iter(|| scene_hash(black_box(&scene)).unwrap()));
    c.bench_function("compile_prompt", |b| {
        b.iter(|| compile_prompt(black_box(&scene), &template).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(
        Arc::new(MemorySessionStore::new()),
        Backends::stub(),
        PipelineConfig::new(dir.path()),
    );
    c.bench_function("stub_pipeline", |b| {
        b.iter(|| p.art_image_creation(black_box(ABSTRACT), None, 7).unwrap())
    });
}

criterion_group!(benches, clustering, canonical, pipeline);
criterion_main!(benches);
