use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use crashscene::dsl::encode_raw_response;
use crashscene::eval::mann_whitney_u;
use crashscene::scene::{compile, GeometryParams};
use crashscene::sim::{run_all_egos, SimConfig};
use crashscene_bench::{samples, scenario, CROSSING, MERGING, REPLY};

fn compile_and_simulate(c: &mut Criterion) {
    let gp = GeometryParams::default();
    let cfg = SimConfig::default();
    for (name, text) in [("crossing", CROSSING), ("merging", MERGING)] {
        let s = scenario(text);
        c.bench_function(&format!("compile+sim/{name}"), |b| {
            b.iter(|| {
                let scene = compile(black_box(&s), &gp, None).unwrap();
                run_all_egos(&scene, &cfg).unwrap()
            })
        });
    }
}

fn encoder(c: &mut Criterion) {
    c.bench_function("encode_raw_response", |b| b.iter(|| encode_raw_response(black_box(REPLY)).unwrap()));
}

fn u_test(c: &mut Criterion) {
    let (a, b) = samples(4);
    c.bench_function("mann_whitney_u/exact_4x4", |bn| bn.iter(|| mann_whitney_u(black_box(&a), &b).unwrap()));
    let (a, b) = samples(200);
    c.bench_function("mann_whitney_u/normal_200x200", |bn| bn.iter(|| mann_whitney_u(black_box(&a), &b).unwrap()));
}

criterion_group!(benches, compile_and_simulate, encoder, u_test);
criterion_main!(benches);
