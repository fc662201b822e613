//! Training and paired benchmarking over generated scenes.
//!
//! # Seeds
//!
//! Every random draw derives from one master seed: the seed for item `i` of
//! stream `s` is `splitmix64(master ^ splitmix64((s << 48) | i))`. Streams are
//! training scenes (1), training planner runs (2), test scenes (3), test
//! planner runs (4), and synthetic retrieval data (5). A test trial therefore
//! sees the same scene, task, and planner seed under every framework.
//!
//! # CSV schema
//!
//! Trial rows: `trial, seed, framework, training_size, family, variation,
//! task, tag, retrieval_s, planning_s, total_s, outcome, path_length,
//! samplers`. Summary rows: `framework, tag, trials, solved, success_rate,
//! mean_s, median_s, stddev_s`. Timed-out trials enter the summary with
//! their (timeout-bounded) total time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path as FsPath;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::db::{ExperienceDb, Framework, Primitive};
use crate::error::{Error, Result};
use crate::geometry::{BoxObstacle, Pose, Vec3};
use crate::pipeline::{learn, plan_with_experience, Strategy};
use crate::planner::{path_is_valid, shortcut, ChainValidity, PlannerConfig};
use crate::robot::{Configuration, KinematicChain, DEFAULT_EDGE_STEP};
use crate::sampling::DEFAULT_LAMBDA;
use crate::scenes::{
    generate_scene_with_task, sample_obstacles, Family, Scene, TaskKind, Variation,
};
use crate::spark::{spark_decompose, SparkConfig, SparkPrimitive};

pub const STREAM_TRAIN_SCENE: u64 = 1;
pub const STREAM_TRAIN_PLAN: u64 = 2;
pub const STREAM_TEST_SCENE: u64 = 3;
pub const STREAM_TEST_PLAN: u64 = 4;
pub const STREAM_SYNTHETIC: u64 = 5;

/// Shortcutting iterations applied to a training solution before learning.
pub const SHORTCUT_ITERATIONS: usize = 200;

/// Seed draws tried per scene index before the trial is reported as an error.
const SCENE_SEED_ATTEMPTS: u64 = 20;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64((stream << 48) | index))
}

/// Scene for item `index` of a stream. Seeds whose placement admits no valid
/// task are skipped deterministically.
pub fn scene_for(
    chain: &KinematicChain,
    family: Family,
    variation: Variation,
    kind: TaskKind,
    master: u64,
    stream: u64,
    index: u64,
) -> Result<Scene> {
    let mut last = None;
    for k in 0..SCENE_SEED_ATTEMPTS {
        let seed = derive_seed(master, stream, index + (k << 32));
        match generate_scene_with_task(chain, family, variation, seed, kind) {
            Ok(s) => return Ok(s),
            Err(e @ Error::Generation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// What the planner samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Uniform,
    Spark,
    Flame,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Spark => "spark",
            Method::Flame => "flame",
        }
    }

    pub fn framework(&self) -> Option<Framework> {
        match self {
            Method::Uniform => None,
            Method::Spark => Some(Framework::Spark),
            Method::Flame => Some(Framework::Flame),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Method::Uniform),
            "spark" => Ok(Method::Spark),
            "flame" => Ok(Method::Flame),
            other => Err(Error::InvalidInput(format!("unknown framework '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub family: Family,
    pub variation: Variation,
    pub task: TaskKind,
    pub count: usize,
    pub seed: u64,
    pub timeout: Duration,
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: Family::SmallShelf,
            variation: Variation::ALL,
            task: TaskKind::Pick,
            count: 100,
            seed: 0,
            timeout: Duration::from_secs(60),
            lambda: DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub problem: u64,
    pub seed: u64,
    pub outcome: String,
    pub time_s: f64,
    pub learned: usize,
    pub db_entries: usize,
}

/// Online training: each problem is solved with the current database and its
/// shortcut solution is learned. Problem numbering continues from the
/// database's counter, so repeated calls extend one seed stream.
pub fn train(
    chain: &KinematicChain,
    db: &mut ExperienceDb,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&TrainRow),
) -> Result<Vec<TrainRow>> {
    let strategy = Strategy::for_db(db);
    let planner = PlannerConfig {
        timeout: cfg.timeout,
        ..PlannerConfig::default()
    };
    let mut rows = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let problem = db.trained_problems();
        let scene = scene_for(
            chain,
            cfg.family,
            cfg.variation,
            cfg.task,
            cfg.seed,
            STREAM_TRAIN_SCENE,
            problem,
        )?;
        let seed = derive_seed(cfg.seed, STREAM_TRAIN_PLAN, problem);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let moving = scene.task.chain(chain);
        let world = scene.world();
        let validity = ChainValidity::new(&moving, &world, DEFAULT_EDGE_STEP);
        let res = plan_with_experience(
            Some(db),
            &scene.obstacles,
            &scene.task.start,
            &scene.task.goal,
            &moving,
            &validity,
            cfg.lambda,
            &planner,
            &mut rng,
        )?;
        let mut learned = 0;
        if let Some(path) = &res.planner.path {
            let short = shortcut(path, &validity, SHORTCUT_ITERATIONS, &mut rng);
            learned = learn(db, &scene.obstacles, &short, &moving, &strategy)?;
        }
        db.record_training_problem();
        let row = TrainRow {
            problem,
            seed: scene.seed,
            outcome: res.planner.outcome.as_str().into(),
            time_s: res.total_time(),
            learned,
            db_entries: db.len(),
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub family: Family,
    pub variation: Variation,
    pub task: TaskKind,
    pub trials: usize,
    pub timeout: Duration,
    pub seed: u64,
    pub lambda: f64,
    /// Label written to every row, e.g. `TX` for transfer runs.
    pub tag: String,
    /// Re-check solved paths against the moving chain.
    pub verify_paths: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            family: Family::SmallShelf,
            variation: Variation::ALL,
            task: TaskKind::Pick,
            trials: 30,
            timeout: Duration::from_secs(60),
            seed: 1,
            lambda: DEFAULT_LAMBDA,
            tag: String::new(),
            verify_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    pub framework: Method,
    pub training_size: u64,
    pub family: String,
    pub variation: String,
    pub task: String,
    pub tag: String,
    pub retrieval_s: f64,
    pub planning_s: f64,
    pub total_s: f64,
    pub outcome: String,
    pub path_length: Option<f64>,
    pub samplers: usize,
}

impl TrialRow {
    pub fn solved(&self) -> bool {
        self.outcome == "solved"
    }
}

/// Paired evaluation: trial `i` uses the same scene and planner seed for
/// every method. Non-uniform methods need a database of their framework.
pub fn bench(
    chain: &KinematicChain,
    methods: &[(Method, Option<&ExperienceDb>)],
    cfg: &BenchConfig,
    mut progress: impl FnMut(&TrialRow),
) -> Result<Vec<TrialRow>> {
    for (m, db) in methods {
        match (m.framework(), db) {
            (None, _) => {}
            (Some(_), None) => {
                return Err(Error::InvalidInput(format!(
                    "framework {m} needs a database"
                )));
            }
            (Some(f), Some(db)) if db.framework() != f => {
                return Err(Error::FrameworkMismatch {
                    expected: f.to_string(),
                    found: db.framework().to_string(),
                });
            }
            _ => {}
        }
    }
    let planner = PlannerConfig {
        timeout: cfg.timeout,
        ..PlannerConfig::default()
    };
    let mut rows = Vec::new();
    for trial in 0..cfg.trials as u64 {
        let scene = scene_for(
            chain,
            cfg.family,
            cfg.variation,
            cfg.task,
            cfg.seed,
            STREAM_TEST_SCENE,
            trial,
        )?;
        let plan_seed = derive_seed(cfg.seed, STREAM_TEST_PLAN, trial);
        let moving = scene.task.chain(chain);
        let world = scene.world();
        let validity = ChainValidity::new(&moving, &world, DEFAULT_EDGE_STEP);
        for (method, db) in methods {
            let db = if method.framework().is_some() {
                *db
            } else {
                None
            };
            let mut rng = ChaCha8Rng::seed_from_u64(plan_seed);
            let res = plan_with_experience(
                db,
                &scene.obstacles,
                &scene.task.start,
                &scene.task.goal,
                &moving,
                &validity,
                cfg.lambda,
                &planner,
                &mut rng,
            )?;
            if cfg.verify_paths {
                if let Some(p) = &res.planner.path {
                    if !path_is_valid(p, &validity)
                        || p.start() != &scene.task.start
                        || p.end() != &scene.task.goal
                    {
                        return Err(Error::InvalidQuery(format!(
                            "trial {trial} ({method}) returned an invalid path"
                        )));
                    }
                }
            }
            let row = TrialRow {
                trial,
                seed: scene.seed,
                framework: *method,
                training_size: db.map_or(0, |d| d.trained_problems()),
                family: cfg.family.to_string(),
                variation: cfg.variation.to_string(),
                task: cfg.task.to_string(),
                tag: cfg.tag.clone(),
                retrieval_s: res.retrieval_time,
                planning_s: res.planning_time(),
                total_s: res.retrieval_time + res.planning_time(),
                outcome: res.planner.outcome.as_str().into(),
                path_length: res.planner.path.as_ref().map(|p| p.length()),
                samplers: res.samplers,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub framework: Method,
    pub tag: String,
    pub trials: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub mean_s: f64,
    pub median_s: f64,
    pub stddev_s: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sample standard deviation (n − 1 denominator).
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One row per (framework, tag), in framework order.
pub fn summarize(rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, String), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.framework, r.tag.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((framework, tag), rs)| {
            let times: Vec<f64> = rs.iter().map(|r| r.total_s).collect();
            let solved = rs.iter().filter(|r| r.solved()).count();
            SummaryRow {
                framework,
                tag,
                trials: rs.len(),
                solved,
                success_rate: solved as f64 / rs.len() as f64,
                mean_s: mean(&times),
                median_s: median(&times),
                stddev_s: stddev(&times),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &FsPath, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::malformed("csv output", format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &FsPath) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

// ---------------------------------------------------------------- retrieval scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub framework: Framework,
    pub data: ScalingData,
    pub db_size: usize,
    pub queries: usize,
    pub indexed_mean_s: f64,
    pub linear_mean_s: f64,
    pub ratio: f64,
    pub results_equal: bool,
}

/// A random box pair in a 2 m cube, boxes 0.05–0.3 m on a side.
pub fn random_spark_primitive<R: Rng + ?Sized>(rng: &mut R) -> SparkPrimitive {
    let one = |rng: &mut R| {
        let t = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..2.0),
        );
        let pose = Pose::from_yaw(
            t,
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let size = Vec3::new(
            rng.random_range(0.05..0.3),
            rng.random_range(0.05..0.3),
            rng.random_range(0.05..0.3),
        );
        BoxObstacle::new(pose, size).expect("positive size")
    };
    let a = one(rng);
    let b = one(rng);
    SparkPrimitive::new(a, b)
}

/// At least `count` box-pair primitives decomposed from randomly placed
/// layouts of all families, in order, starting at layout `first`.
pub fn layout_spark_primitives(
    count: usize,
    seed: u64,
    first: u64,
    cfg: &SparkConfig,
) -> Result<Vec<SparkPrimitive>> {
    let mut out = Vec::with_capacity(count);
    let mut i = first;
    while out.len() < count {
        let family = Family::ALL[(i % Family::ALL.len() as u64) as usize];
        let obstacles = sample_obstacles(
            family,
            Variation::ALL,
            derive_seed(seed, STREAM_SYNTHETIC, i),
        )?;
        out.extend(spark_decompose(&obstacles, cfg));
        i += 1;
    }
    Ok(out)
}

/// Box-pair data for [`retrieval_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingData {
    /// [`random_spark_primitive`] for entries and queries.
    Random,
    /// [`layout_spark_primitives`], queried with primitives of other layouts.
    /// Clustered: at the default radius a query hits a sizable share of the
    /// database.
    Layouts,
}

impl ScalingData {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingData::Random => "random",
            ScalingData::Layouts => "layouts",
        }
    }
}

impl fmt::Display for ScalingData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScalingData {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ScalingData::Random),
            "layouts" => Ok(ScalingData::Layouts),
            other => Err(Error::InvalidInput(format!(
                "unknown scaling data '{other}'"
            ))),
        }
    }
}

/// Mean retrieval time of the indexed structure and a linear scan over
/// databases of the given sizes, at the default radius. `data` picks the
/// box-pair primitives; octobox databases are always random.
pub fn retrieval_scaling(
    framework: Framework,
    data: ScalingData,
    sizes: &[usize],
    queries: usize,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    let dummy = vec![Configuration::zeros(1)];
    let mut rows = Vec::new();
    for &size in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SYNTHETIC, size as u64));
        let mut db = ExperienceDb::new(framework, 1);
        let radius = db.spark_config().d_radius;
        match framework {
            Framework::Spark => {
                let cfg = *db.spark_config();
                let (mut prims, mut qs) = match data {
                    ScalingData::Random => (
                        (0..size)
                            .map(|_| random_spark_primitive(&mut rng))
                            .collect(),
                        (0..queries)
                            .map(|_| random_spark_primitive(&mut rng))
                            .collect(),
                    ),
                    // Query layouts come from indices no database layout uses.
                    ScalingData::Layouts => (
                        layout_spark_primitives(size, seed, 0, &cfg)?,
                        layout_spark_primitives(queries, seed, 1 << 40, &cfg)?,
                    ),
                };
                prims.truncate(size);
                qs.truncate(queries);
                db.insert_many(
                    prims
                        .into_iter()
                        .map(|p| (Primitive::Spark(p), dummy.clone())),
                )?;
                let (mut fast, mut slow, mut equal) = (0.0, 0.0, true);
                for q in &qs {
                    let t = Instant::now();
                    let a = db.range_query(q, radius);
                    fast += t.elapsed().as_secs_f64();
                    let t = Instant::now();
                    let b = db.range_query_linear(q, radius);
                    slow += t.elapsed().as_secs_f64();
                    equal &= a == b;
                }
                rows.push(scaling_row(
                    framework, data, size, queries, fast, slow, equal,
                ));
            }
            Framework::Flame => {
                let cfg = *db.flame_config();
                let n = cfg.leaves_per_side() as i64 / crate::flame::BLOCK as i64;
                let prim = |rng: &mut ChaCha8Rng| {
                    crate::flame::FlamePrimitive::new(
                        &cfg,
                        [
                            rng.random_range(0..n),
                            rng.random_range(0..n),
                            rng.random_range(0..n),
                        ],
                        rng.random::<u64>() | 1,
                    )
                };
                let stored: Vec<_> = (0..size).map(|_| prim(&mut rng)).collect();
                db.insert_many(stored.iter().map(|p| (Primitive::Flame(*p), dummy.clone())))?;
                // Half the queries hit stored primitives.
                let qs: Vec<_> = (0..queries)
                    .map(|i| {
                        if i % 2 == 0 && !stored.is_empty() {
                            stored[rng.random_range(0..stored.len())]
                        } else {
                            prim(&mut rng)
                        }
                    })
                    .collect();
                let (mut fast, mut slow, mut equal) = (0.0, 0.0, true);
                for q in &qs {
                    let t = Instant::now();
                    let a: Vec<u64> = db
                        .retrieve_flame(std::slice::from_ref(q))
                        .iter()
                        .map(|s| s.0)
                        .collect();
                    fast += t.elapsed().as_secs_f64();
                    let t = Instant::now();
                    let b: Vec<u64> = db
                        .entries()
                        .iter()
                        .filter(
                            |e| matches!(e.primitive(), Primitive::Flame(p) if p.key() == q.key()),
                        )
                        .map(|e| e.id())
                        .collect();
                    slow += t.elapsed().as_secs_f64();
                    equal &= a == b;
                }
                rows.push(scaling_row(
                    framework, data, size, queries, fast, slow, equal,
                ));
            }
        }
    }
    Ok(rows)
}

fn scaling_row(
    framework: Framework,
    data: ScalingData,
    size: usize,
    queries: usize,
    fast: f64,
    slow: f64,
    equal: bool,
) -> ScalingRow {
    let q = queries.max(1) as f64;
    let (indexed_mean_s, linear_mean_s) = (fast / q, slow / q);
    ScalingRow {
        framework,
        data,
        db_size: size,
        queries,
        indexed_mean_s,
        linear_mean_s,
        ratio: if linear_mean_s > 0.0 {
            indexed_mean_s / linear_mean_s
        } else {
            1.0
        },
        results_equal: equal,
    }
}
