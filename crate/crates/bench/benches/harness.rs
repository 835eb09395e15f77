use std::collections::BTreeSet;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use privbench_bench::{
    bundled_suite, synthetic_drafts, synthetic_log, synthetic_manifest, visited_screen,
};
use privbench_core::agent::{baseline_policy, run_episode, PolicyKind};
use privbench_core::app::reset_to_seed;
use privbench_core::auditor::{score_fm, score_op, score_tr, PenaltySchedule};

fn bench_episodes(c: &mut Criterion) {
    let suite = bundled_suite();
    let levels = suite.profile.levels();
    let mut group = c.benchmark_group("episode");
    for (label, task_id, kind) in [
        ("oracle_booking", "clinic-book-01", PolicyKind::OracleMinimal),
        ("greedy_booking", "clinic-book-01", PolicyKind::GreedyCompletionist),
        ("oracle_order", "delivery-order-01", PolicyKind::OracleMinimal),
    ] {
        let task = suite.find_task(task_id).unwrap();
        let schema = suite.schema(&task.app_id).unwrap();
        group.bench_function(label, |b| {
            b.iter(|| {
                let mut policy = baseline_policy(kind, task, schema, &levels, 7);
                let (episode, _) =
                    run_episode(task, schema, policy.as_mut(), suite.profile.clone());
                black_box(episode.final_state_digest)
            })
        });
    }
    group.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let schedule = PenaltySchedule::default();
    let manifest = synthetic_manifest(7, 5);
    let drafts = synthetic_drafts(1000);
    let log = synthetic_log(1000);
    let visited = visited_screen();
    let none = BTreeSet::new();

    let mut group = c.benchmark_group("scoring");
    group.bench_function("op_1000_requests", |b| {
        b.iter(|| black_box(score_op(&log, &manifest, &schedule).score))
    });
    group.bench_function("tr_1000_drafts", |b| {
        b.iter(|| black_box(score_tr(&drafts, &manifest, &visited).score))
    });
    group.bench_function("fm_1000_drafts", |b| {
        b.iter(|| black_box(score_fm(&drafts, &manifest, &schedule, &visited, &none).score))
    });
    group.finish();
}

fn bench_digest(c: &mut Criterion) {
    let suite = bundled_suite();
    let schema = suite.schema("clinic").unwrap();
    let mut state = reset_to_seed(schema, "booked").unwrap();
    // Grow the state to something worth hashing.
    let template = state.tables["appointments"][0].clone();
    for i in 0..500 {
        let mut row = template.clone();
        row.insert("time".into(), format!("{:02}:{:02}", i / 60 % 24, i % 60));
        state.tables.get_mut("appointments").unwrap().push(row);
    }
    c.bench_function("canonical_digest_500_rows", |b| {
        b.iter(|| black_box(state.digest()))
    });
}

criterion_group!(benches, bench_episodes, bench_scoring, bench_digest);
criterion_main!(benches);
