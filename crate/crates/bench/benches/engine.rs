use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use renforge_bench::{corpus, direct_unit, forest};
use renforge_core::resonance::{resonate, ResonanceConfig};
use renforge_core::{min_firing_set_size, ConceptForest, RefinedSpec};

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [10u32, 50, 250] {
        let (mut net, sources) = direct_unit(n, 5.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sources, |b, s| {
            b.iter(|| net.step(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn min_set(c: &mut Criterion) {
    let flat = RefinedSpec::new(25, 5, 4, 4);
    let deep = RefinedSpec::new(625, 5, 4, 4).with_layers(3);
    c.bench_function("min_firing_set/25", |b| {
        b.iter(|| min_firing_set_size(black_box(&flat)).unwrap())
    });
    c.bench_function("min_firing_set/625x3", |b| {
        b.iter(|| min_firing_set_size(black_box(&deep)).unwrap())
    });
}

fn forest_insert(c: &mut Criterion) {
    let lines = corpus(500);
    c.bench_function("forest_insert/500", |b| {
        b.iter(|| {
            let mut f = ConceptForest::new();
            for seq in &lines {
                f.insert_sequence(seq).unwrap();
            }
            f
        })
    });
}

fn resonance(c: &mut Criterion) {
    let f = forest(500);
    let (net, map) = f.to_network().unwrap();
    let seeds: BTreeSet<_> = (0..f.tree_count())
        .filter_map(|t| f.root(t))
        .map(|n| map[&n])
        .collect();
    let cfg = ResonanceConfig::default();
    c.bench_function("resonate/forest500", |b| {
        b.iter(|| resonate(&net, black_box(&seeds), &cfg).unwrap())
    });
}

criterion_group!(benches, step, min_set, forest_insert, resonance);
criterion_main!(benches);
