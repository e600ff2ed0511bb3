use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use retrieval_core::exec::Exec;
use retrieval_core::harness::{evaluate, generate_scenario, suite};
use retrieval_core::observation::{observe_with, CameraIntrinsics, NoiseModel};
use retrieval_core::reasoner::{HeuristicReasoner, Reasoner};
use retrieval_core::supervisor::EpisodeConfig;
use retrieval_core::world::{Category, Scenario};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn observe_bench(c: &mut Criterion) {
    let s = generate_scenario(Category::CompositionalReasoning, 0).expect("scenario");
    let w = &s.initial_world;
    let intr = CameraIntrinsics { depth_w: 128, depth_h: 96, ..CameraIntrinsics::default() };
    let mut g = c.benchmark_group("observe");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| observe_with(exec, black_box(w), &w.camera, &intr, &NoiseModel::mild(), 7))
        });
    }
    g.finish();
}

fn evaluate_bench(c: &mut Criterion) {
    let scenarios = suite(Category::HiddenInside, 8).expect("suite");
    let make = |_: &Scenario| -> Box<dyn Reasoner> { Box::new(HeuristicReasoner) };
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = EpisodeConfig { exec, ..EpisodeConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| evaluate(black_box(&scenarios), &make, &cfg)));
    }
    g.finish();
}

criterion_group!(benches, observe_bench, evaluate_bench);
criterion_main!(benches);
