use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use droptune_core::exec::{lower, run_native, TensorSet};
use droptune_core::ir::{generate_sketches, Applied};
use droptune_core::search::SKETCH_DEPTH;
use droptune_core::{Target, Workload};

/// Naive schedule against the default annotation of every sketch.
fn matmul_sketches(c: &mut Criterion) {
    let w = Workload::matmul(128, 128, 128);
    let data: TensorSet<f32> = TensorSet::generate(&w, 1);
    let mut out = vec![0f32; data.output_len];
    let mut group = c.benchmark_group("matmul_128");
    group.sample_size(20);
    for sk in generate_sketches(&w, SKETCH_DEPTH, Target::host()) {
        let coord = sk.initialize_annotation(0);
        let Applied::Schedule(schedule) = sk.apply(&coord).expect("valid coordinate") else {
            continue;
        };
        let plan = lower(&schedule);
        group.bench_function(BenchmarkId::from_parameter(sk.name()), |b| {
            b.iter(|| run_native(&plan, &w.body, &data, &mut out))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul_sketches);
criterion_main!(benches);
