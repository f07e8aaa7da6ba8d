//! Batch throughput: the data-parallel batch entry points against an
//! explicit sequential loop over the single-record operations.
//!
//! With the default `parallel` feature the batch APIs fan out over rayon;
//! the per-record loops below are the sequential baseline. Building with
//! `--no-default-features` makes the batch APIs sequential too, which is
//! useful for checking that the fallback matches the baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use embedmark::attack::{gaussian_perturb, NoiseConfig};
use embedmark::codec::{inject, inject_batch, recover, EmbeddingRecord};
use embedmark::corpus::synthetic_unit_corpus;
use embedmark::keygen::{generate_key, seeded_rng, KeyParams};
use embedmark::linalg::cosine;
use embedmark::verifier::verify;

fn bench_inject_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("inject_batch");
    for &(n, count) in &[(256usize, 512usize), (1024, 256)] {
        let key = generate_key(&KeyParams::new(n, 25, n, 1).unwrap()).unwrap();
        let records = synthetic_unit_corpus(n, count, 7, "b").unwrap();
        group.bench_with_input(
            BenchmarkId::new("batch", format!("n{n}x{count}")),
            &records,
            |b, records| b.iter(|| black_box(inject_batch(&key, records).unwrap())),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("n{n}x{count}")),
            &records,
            |b, records| {
                b.iter(|| {
                    let out: Vec<EmbeddingRecord> = records
                        .iter()
                        .map(|r| {
                            EmbeddingRecord::new(r.id.clone(), inject(&key, &r.vector).unwrap())
                        })
                        .collect();
                    black_box(out)
                })
            },
        );
    }
    group.finish();
}

fn bench_verify(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    let n = 256;
    let count = 256;
    let key_a = generate_key(&KeyParams::new(n, 25, n, 1).unwrap()).unwrap();
    let key_b = generate_key(&KeyParams::new(n, 25, n, 2).unwrap()).unwrap();
    let originals = synthetic_unit_corpus(n, count, 9, "v").unwrap();
    let suspect_w = inject_batch(&key_a, &originals).unwrap();
    let suspect_c = inject_batch(&key_b, &originals).unwrap();

    group.bench_function("batch", |b| {
        b.iter(|| {
            black_box(verify(&key_a, &suspect_w, &originals, &suspect_c, &originals, 10.0).unwrap())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let mut cos_w = Vec::with_capacity(count);
            let mut cos_c = Vec::with_capacity(count);
            for (s, o) in suspect_w.iter().zip(&originals) {
                cos_w.push(cosine(&recover(&key_a, &s.vector).unwrap(), &o.vector).unwrap());
            }
            for (s, o) in suspect_c.iter().zip(&originals) {
                cos_c.push(cosine(&recover(&key_a, &s.vector).unwrap(), &o.vector).unwrap());
            }
            black_box((cos_w, cos_c))
        })
    });
    group.finish();
}

fn bench_noise_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_noise_trials");
    let n = 256;
    let key = generate_key(&KeyParams::new(n, 25, n, 3).unwrap()).unwrap();
    let records = synthetic_unit_corpus(n, 256, 11, "g").unwrap();
    let marked = inject_batch(&key, &records).unwrap();
    let cfg = NoiseConfig::new(0.1, 1, 0).unwrap();

    group.bench_function("sequential", |b| {
        b.iter(|| {
            let mut rng = seeded_rng(1);
            let out: Vec<_> = marked
                .iter()
                .map(|r| gaussian_perturb(&r.vector, &cfg, &mut rng).unwrap())
                .collect();
            black_box(out)
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_inject_batch,
    bench_verify,
    bench_noise_trials
);
criterion_main!(benches);
