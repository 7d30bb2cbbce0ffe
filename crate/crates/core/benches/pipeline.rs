//! End-to-end capture + reconstruction throughput at different worker
//! counts. With the `parallel` feature (default) the per-step and
//! per-column loops run on the installed rayon pool, so one worker
//! approximates the sequential fallback; without the feature the pool
//! size is irrelevant and the numbers coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pushframe::forward::{simulate, OpticsConfig};
use pushframe::pattern::{HadamardMatrix, PatternSpec};
use pushframe::recon::{reconstruct, Synthesis};
use pushframe::scene::{SceneImage, SyntheticKind};

fn bench_pipeline(c: &mut Criterion) {
    let n = 128;
    let w = 160;
    let pattern = PatternSpec::scramble(
        HadamardMatrix::sylvester(n).unwrap(),
        1,
        PatternSpec::default_run_limit(n),
    )
    .unwrap();
    let scene = SceneImage::synthetic(SyntheticKind::Checkerboard { period: 8 }, n, w, 1).unwrap();
    let cfg = OpticsConfig {
        blur_sigma: 0.6,
        read_noise: 0.05,
        supersample: 2,
        ..OpticsConfig::default()
    };

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for workers in [1usize, 0] {
        let pool = {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if workers > 0 {
                builder = builder.num_threads(workers);
            }
            builder.build().unwrap()
        };
        let label = if workers == 0 { "all-cores".to_string() } else { format!("{workers}-worker") };

        group.bench_with_input(BenchmarkId::new("simulate", &label), &label, |b, _| {
            b.iter(|| {
                pool.install(|| {
                    let (stream, _) =
                        simulate(black_box(&scene), &pattern, &cfg, false).unwrap();
                    black_box(stream)
                })
            })
        });

        group.bench_with_input(BenchmarkId::new("reconstruct", &label), &label, |b, _| {
            let (stream, _) = simulate(&scene, &pattern, &cfg, false).unwrap();
            b.iter(|| {
                pool.install(|| {
                    let img = reconstruct(
                        black_box(&stream),
                        &pattern,
                        None,
                        Synthesis::Debiased,
                        true,
                    )
                    .unwrap();
                    black_box(img)
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
