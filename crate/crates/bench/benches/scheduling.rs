use std::hint::black_box;

use coopstream::bound::{solve_slotted, SolveLimits};
use coopstream::schedulers::{lyapunov_decide, LyapunovConfig};
use coopstream::sim::{PeerState, SchedulerView};
use coopstream::{run, RunConfig, SchedulerKind};
use coopstream_bench::{scenario, slotted};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn decide(c: &mut Criterion) {
    let (_, _, profiles) = scenario(50, 60.0, 1);
    let mut g = c.benchmark_group("lyapunov_decide");
    for group in [1usize, 5, 20] {
        let peers: Vec<_> = profiles
            .iter()
            .take(group)
            .enumerate()
            .map(|(i, p)| PeerState { id: p.id, profile: p, buffer: 4.0 * i as f64, in_flight: 0, last_bitrate: Some(0.7), received: 2, remaining: p.num_segments().saturating_sub(2) })
            .collect();
        let view = SchedulerView { decider: 0, clock: 0.0, capacity: 2.0, peers, throughput_history: &[] };
        let cfg = LyapunovConfig::default();
        g.bench_with_input(BenchmarkId::from_parameter(group), &view, |b, v| b.iter(|| lyapunov_decide(black_box(v), &cfg)));
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("sim_run");
    g.sample_size(10);
    for users in [10usize, 50] {
        let (_, trace, profiles) = scenario(users, 300.0, 1);
        for name in ["lyapunov", "buffer-based"] {
            let kind = SchedulerKind::from_name(name).unwrap();
            g.bench_function(BenchmarkId::new(name, users), |b| b.iter(|| run(&trace, &profiles, &kind, &RunConfig::default()).unwrap()));
        }
    }
    g.finish();
}

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_slotted");
    g.sample_size(10);
    for (users, slots) in [(1usize, 6usize), (2, 3), (2, 4)] {
        let inst = slotted(users, slots, 3);
        g.bench_function(format!("{users}x{slots}"), |b| b.iter(|| solve_slotted(black_box(&inst), SolveLimits::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, decide, simulate, solve);
criterion_main!(benches);
