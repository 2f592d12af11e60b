use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use stn_bench::{factor_set, tensor};
use stn_core::layers::{conv2d_dense, conv2d_tn};
use stn_core::{als_fit, contract_network, determine_ranks, AlsConfig};

fn contraction(c: &mut Criterion) {
    let f = factor_set(&[6, 6, 6, 6], 3, 1);
    c.bench_function("contract 6^4 rank 3", |b| b.iter(|| contract_network(black_box(&f))));
}

fn als(c: &mut Criterion) {
    let t = contract_network(&factor_set(&[6, 6, 6, 6], 2, 2));
    let topo = stn_core::TnTopology::uniform(vec![6, 6, 6, 6], 2).unwrap();
    let cfg = AlsConfig {
        max_sweeps: 10,
        ..AlsConfig::default()
    };
    c.bench_function("als 6^4 rank 2, 10 sweeps", |b| {
        b.iter(|| als_fit(black_box(&t), &topo, &cfg).unwrap())
    });
}

fn conv(c: &mut Criterion) {
    let f = factor_set(&[3, 3, 16, 16], 2, 3);
    let k = contract_network(&f);
    let x = tensor(&[16, 16, 16], 4);
    c.bench_function("conv dense 16x16x16 -> 16", |b| b.iter(|| conv2d_dense(black_box(&x), &k).unwrap()));
    c.bench_function("conv tn 16x16x16 -> 16 rank 2", |b| b.iter(|| conv2d_tn(black_box(&x), &f).unwrap()));
}

fn ranks(c: &mut Criterion) {
    let t = tensor(&[3, 3, 16, 32], 5);
    c.bench_function("determine_ranks 3x3x16x32", |b| {
        b.iter(|| determine_ranks(black_box(&t), 0.9).unwrap())
    });
}

criterion_group!(benches, contraction, als, conv, ranks);
criterion_main!(benches);
