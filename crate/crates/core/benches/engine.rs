//! Sequential vs rayon-parallel execution of the run-level hot paths.
//! Build with `--no-default-features` to compare against a binary that
//! has no rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gossip_rmf::agent::run_traces;
use gossip_rmf::experiment::{initial_counts, InitSpec};
use gossip_rmf::popsim::simulate_measures;
use gossip_rmf::refined::refined_trajectory_with;
use gossip_rmf::*;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn popsim(c: &mut Criterion) {
    let params = GossipParams::new(500, 100, 50, 3, 100).unwrap();
    let model = build_model(ModelKind::SixState, &params).unwrap();
    let counts0 = initial_counts(ModelKind::SixState, &params, &InitSpec::SingleFresh).unwrap();
    let measures = [
        model.replication_measure(),
        model.coverage_measure().unwrap(),
    ];
    let mut group = c.benchmark_group("popsim_six_state_200_runs");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                black_box(simulate_measures(
                    &model, &counts0, 500, 200, 1, &measures, exec,
                ))
            })
        });
    }
    group.finish();
}

fn agentsim(c: &mut Criterion) {
    let params = GossipParams::new(500, 100, 50, 3, 100).unwrap();
    let mut group = c.benchmark_group("agentsim_n100_8_runs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_traces(&params, 200, 8, 1, exec).unwrap()))
        });
    }
    group.finish();
}

fn refined(c: &mut Criterion) {
    let params = GossipParams::new(500, 100, 50, 9, 2500).unwrap();
    let model = build_model(ModelKind::FullCoverage, &params).unwrap();
    let mu0 = initial_counts(ModelKind::FullCoverage, &params, &InitSpec::SingleFresh)
        .unwrap()
        .occupancy();
    let mut group = c.benchmark_group("refined_full_coverage_200_steps");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(refined_trajectory_with(&model, &mu0, 200, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, popsim, agentsim, refined);
criterion_main!(benches);
