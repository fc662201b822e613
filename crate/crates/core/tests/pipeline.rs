mod common;

use std::time::Duration;

use common::checks;
use common::*;

use spark_flame::bench::{bench, train, BenchConfig, Method, TrainConfig, TrialRow};
use spark_flame::db::{ExperienceDb, Framework};
use spark_flame::pipeline::{infer, Strategy};
use spark_flame::robot::arm8;
use spark_flame::scenes::{generate_scene, Family, Scene, TaskKind, Variation};

// The box-table pick is the quickest family to solve, which keeps these runs
// short and far from the timeout (so planning is deterministic).
fn quick_train(count: usize) -> TrainConfig {
    TrainConfig {
        family: Family::BoxTable,
        count,
        seed: 11,
        timeout: Duration::from_secs(60),
        ..TrainConfig::default()
    }
}

fn trained(fw: Framework, count: usize) -> ExperienceDb {
    let mut db = ExperienceDb::new(fw, 8);
    train(&arm8(), &mut db, &quick_train(count), |_| {}).unwrap();
    db
}

#[test]
fn stored_configurations_stay_critical_and_survive_reload() {
    let chain = arm8();
    let dbs = [trained(Framework::Spark, 4), trained(Framework::Flame, 4)];
    assert!(dbs.iter().all(|d| !d.is_empty()));
    let probes: Vec<_> = (0..20)
        .map(|s| {
            generate_scene(&chain, Family::BoxTable, Variation::ALL, 1000 + s)
                .unwrap()
                .obstacles
        })
        .collect();
    let v = checks::learn_verify_closure(&chain, &[&dbs[0], &dbs[1]], &probes);
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn chained_training_equals_one_run() {
    for fw in [Framework::Spark, Framework::Flame] {
        let mut chained = trained(fw, 2);
        let text = chained.to_json();
        chained = ExperienceDb::from_json(&text).unwrap();
        train(&arm8(), &mut chained, &quick_train(2), |_| {}).unwrap();
        let batch = trained(fw, 4);
        assert_eq!(chained.trained_problems(), 4);
        assert_eq!(chained.to_json(), batch.to_json(), "{fw}");
    }
}

#[test]
fn empty_training_gives_empty_db() {
    let db = trained(Framework::Spark, 0);
    assert!(db.is_empty());
    assert_eq!(db.trained_problems(), 0);
}

fn strip_times(rows: &[TrialRow]) -> Vec<TrialRow> {
    rows.iter()
        .map(|r| TrialRow {
            retrieval_s: 0.0,
            planning_s: 0.0,
            total_s: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn bench_is_paired_and_deterministic() {
    let chain = arm8();
    let db = trained(Framework::Spark, 3);
    let cfg = BenchConfig {
        family: Family::BoxTable,
        trials: 3,
        seed: 5,
        ..BenchConfig::default()
    };
    let methods = [(Method::Uniform, None), (Method::Spark, Some(&db))];
    let a = bench(&chain, &methods, &cfg, |_| {}).unwrap();
    let b = bench(&chain, &methods, &cfg, |_| {}).unwrap();
    assert_eq!(a.len(), 6);
    assert_eq!(strip_times(&a), strip_times(&b));
    for r in &a {
        assert!((r.total_s - (r.retrieval_s + r.planning_s)).abs() <= 1e-9);
        if r.framework == Method::Uniform {
            assert_eq!(r.retrieval_s, 0.0);
            assert_eq!(r.samplers, 0);
        }
    }
    // Trial i uses the same scene under both methods.
    for pair in a.chunks(2) {
        assert_eq!(pair[0].seed, pair[1].seed);
        assert_eq!(pair[0].trial, pair[1].trial);
    }
}

#[test]
fn bench_rejects_missing_or_mismatched_db() {
    let chain = arm8();
    let flame = ExperienceDb::new(Framework::Flame, 8);
    let cfg = BenchConfig {
        trials: 1,
        ..BenchConfig::default()
    };
    assert!(bench(&chain, &[(Method::Spark, None)], &cfg, |_| {}).is_err());
    assert!(bench(&chain, &[(Method::Spark, Some(&flame))], &cfg, |_| {}).is_err());
}

#[test]
fn transfer_paths_are_valid_with_the_carried_object() {
    // bench re-validates every solved path against the moving chain and
    // errors on an invalid one.
    let chain = arm8();
    let db = trained(Framework::Flame, 2);
    let cfg = BenchConfig {
        family: Family::LargeShelf,
        task: TaskKind::Place,
        trials: 2,
        timeout: Duration::from_secs(20),
        tag: "TX".into(),
        ..BenchConfig::default()
    };
    let rows = bench(
        &chain,
        &[(Method::Uniform, None), (Method::Flame, Some(&db))],
        &cfg,
        |_| {},
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.tag == "TX" && r.task == "place"));
}

#[test]
fn inference_ignores_obstacle_order() {
    let chain = arm8();
    for fw in [Framework::Spark, Framework::Flame] {
        let db = trained(fw, 3);
        let strategy = Strategy::for_db(&db);
        for seed in 0..5 {
            let scene =
                generate_scene(&chain, Family::BoxTable, Variation::ALL, 500 + seed).unwrap();
            let mut reversed = scene.obstacles.clone();
            reversed.reverse();
            let a: Vec<u64> = infer(&db, &scene.obstacles, &chain, &strategy, 0.5)
                .unwrap()
                .sampler_ids()
                .collect();
            let b: Vec<u64> = infer(&db, &reversed, &chain, &strategy, 0.5)
                .unwrap()
                .sampler_ids()
                .collect();
            assert_eq!(a, b, "{fw} seed {seed}");
        }
    }
}

#[test]
fn variation_draws_are_uniform_within_ranges() {
    let chain = arm8();
    let family = Family::SmallShelf;
    let (xy, z, yaw) = family.ranges();
    let scenes: Vec<Scene> = (0..500)
        .map(|s| generate_scene(&chain, family, Variation::ALL, s).unwrap())
        .collect();
    for (name, half, get) in [
        ("x", xy, (|s: &Scene| s.drawn.dx) as fn(&Scene) -> f64),
        ("y", xy, |s: &Scene| s.drawn.dy),
        ("z", z, |s: &Scene| s.drawn.dz),
        ("yaw", yaw, |s: &Scene| s.drawn.yaw),
    ] {
        let xs: Vec<f64> = scenes.iter().map(get).collect();
        assert!(xs.iter().all(|x| x.abs() <= half), "{name} out of range");
        let ks = ks_uniform(&xs, -half, half);
        assert!(ks < ks_critical_01(xs.len()), "{name}: KS {ks:.4}");
    }
    let fixed: Vec<Scene> = (0..20)
        .map(|s| generate_scene(&chain, family, Variation::NONE, s).unwrap())
        .collect();
    assert!(fixed.iter().all(|s| s.drawn == Default::default()));
}
