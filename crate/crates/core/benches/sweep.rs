use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fuzzsync::rng::NodeRng;
use fuzzsync::sweep::routing_histogram;
use fuzzsync::{generate_target, run_sweep, CampaignConfig, Execution, FuzzerParams, Job, PolicyKind, TargetShape};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn seed_sweep(c: &mut Criterion) {
    let target = generate_target(&TargetShape {
        depth: 4,
        fanout: 3,
        magic_len: 2,
        crash_count: 2,
        seed: 1,
    })
    .unwrap();
    let jobs: Vec<Job> = (0..8u64)
        .flat_map(|seed| {
            [PolicyKind::Selective, PolicyKind::Dynamic].map(|p| {
                let mut cfg = CampaignConfig::new(8, p);
                cfg.seed = seed;
                cfg.total_ticks = 300;
                Job::new(format!("{p}-{seed}"), cfg)
            })
        })
        .collect();
    let params = FuzzerParams::default();
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_sweep(&jobs, &target, &params, mode))
        });
    }
    group.finish();
}

fn routing(c: &mut Criterion) {
    let mut rng = NodeRng::from_state(9);
    let payloads: Vec<Vec<u8>> = (0..200_000)
        .map(|_| (0..1 + rng.below(128)).map(|_| rng.byte()).collect())
        .collect();
    let mut group = c.benchmark_group("routing_histogram");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| routing_histogram(&payloads, 7, mode))
        });
    }
    group.finish();
}

criterion_group!(benches, seed_sweep, routing);
criterion_main!(benches);
