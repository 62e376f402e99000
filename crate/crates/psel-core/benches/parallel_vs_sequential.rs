//! Compares the pooled execution path against single-thread sequential
//! execution on the same Monte-Carlo experiment.
//!
//! Compiled with the default `parallel` feature this measures worker counts
//! 1/2/4 (1 runs on the calling thread, >1 on a scoped pool); compiled with
//! `--no-default-features` it measures the purely sequential build. Before
//! timing anything it asserts that every worker count produces identical
//! results, which is the workspace's determinism contract.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psel_core::montecarlo::{run_experiment, ExperimentConfig};
use psel_core::{ModelSpec, SelectionRule};

fn experiment() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::gaussian(2, 10, vec![1.0, 0.1]).unwrap(),
        theta_true: vec![0.0, 0.1],
        rule: SelectionRule::Sms,
        estimators: ["ml", "psml_nr:1", "mbp:1"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect(),
        replications: 4_000,
        seed: None,
        sweep: None,
    }
}

fn bench_worker_counts(c: &mut Criterion) {
    let config = experiment();
    let worker_counts: &[usize] = if cfg!(feature = "parallel") {
        &[1, 2, 4]
    } else {
        &[1]
    };
    let baseline = run_experiment(&config, 1).unwrap();
    for &workers in worker_counts {
        let run = run_experiment(&config, workers).unwrap();
        assert_eq!(
            baseline.points, run.points,
            "worker count {workers} changed the results"
        );
    }

    let flavor = if cfg!(feature = "parallel") {
        "pooled-build"
    } else {
        "sequential-build"
    };
    let mut group = c.benchmark_group(format!("monte-carlo/{flavor}"));
    group.sample_size(10);
    for &workers in worker_counts {
        group.bench_with_input(
            BenchmarkId::new("workers", workers),
            &workers,
            |b, &workers| b.iter(|| run_experiment(&config, workers).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_worker_counts);
criterion_main!(benches);
