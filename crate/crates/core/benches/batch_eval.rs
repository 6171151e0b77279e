//! Batch evaluation and gradient accumulation through `par::map`.
//!
//! Run once with default features and once with `--no-default-features`
//! to compare the rayon path against the sequential fallback; the group
//! name records which one was built.

use std::hint::black_box;

use agformer::graph::synth_random_graph;
use agformer::model::{prepare_all, AnchorMode, Model, ModelConfig};
use agformer::par;
use agformer::train::evaluate;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn batch_eval(c: &mut Criterion) {
    let graphs: Vec<_> = (0..64)
        .map(|i| {
            let g = synth_random_graph(24, 0.15, i).unwrap();
            let f = agformer::Tensor::filled(24, 4, 1.0);
            g.with_features(f).unwrap()
        })
        .collect();
    let prepared = prepare_all(&graphs, AnchorMode::Louvain, 3).unwrap();
    let mut cfg = ModelConfig::new(4, 2);
    cfg.hidden_dim = 32;
    cfg.proj_dim = 32;
    cfg.ffn_hidden = 64;
    cfg.num_gnn_layers = 3;
    let model = Model::new(cfg, 5).unwrap();
    let ids: Vec<usize> = (0..prepared.len()).collect();

    let name = if par::is_parallel() { "rayon" } else { "sequential" };
    let mut group = c.benchmark_group(format!("batch_eval/{name}"));
    group.sample_size(10);
    for workers in [1usize, 0] {
        group.bench_with_input(BenchmarkId::new("evaluate", workers), &workers, |b, &w| {
            b.iter(|| par::with_workers(w, || black_box(evaluate(&model, &prepared, &ids).unwrap())))
        });
        group.bench_with_input(BenchmarkId::new("grads", workers), &workers, |b, &w| {
            b.iter(|| {
                par::with_workers(w, || {
                    let grads = par::map(&ids, |&i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                        model.loss_and_grads(&prepared[i], &mut rng, true).unwrap().1
                    });
                    black_box(grads.len())
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_eval);
criterion_main!(benches);
