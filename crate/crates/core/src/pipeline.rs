//! Learning from solved paths and synthesizing biased samplers for new scenes.

use std::time::Instant;

use rand::Rng;

use crate::db::{ExperienceDb, Framework, Primitive};
use crate::error::{Error, Result};
use crate::flame::{build_octree, flame_decompose, flame_is_critical_placed, FlameConfig};
use crate::geometry::BoxObstacle;
use crate::planner::{rrt_connect, PlannerConfig, PlannerResult, Validity};
use crate::robot::{Configuration, KinematicChain, Path, PlacedRobot};
use crate::sampling::{GlobalSampler, LocalSampler, SamplerId};
use crate::spark::{spark_decompose, spark_is_critical_placed, SparkConfig};
use std::sync::Arc;

/// Joint-space spacing of the configurations examined along a path.
pub const LEARN_SPACING: f64 = 0.25;

/// Decomposition, criticality test, and retrieval mode of one framework.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Spark(SparkConfig),
    Flame(FlameConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    Radius,
    Exact,
}

impl Strategy {
    /// The strategy matching a database's framework and parameters.
    pub fn for_db(db: &ExperienceDb) -> Self {
        match db.framework() {
            Framework::Spark => Strategy::Spark(*db.spark_config()),
            Framework::Flame => Strategy::Flame(*db.flame_config()),
        }
    }

    pub fn framework(&self) -> Framework {
        match self {
            Strategy::Spark(_) => Framework::Spark,
            Strategy::Flame(_) => Framework::Flame,
        }
    }

    pub fn retrieval_mode(&self) -> RetrievalMode {
        match self {
            Strategy::Spark(_) => RetrievalMode::Radius,
            Strategy::Flame(_) => RetrievalMode::Exact,
        }
    }

    pub fn decompose(&self, scene: &[BoxObstacle]) -> Result<Vec<Primitive>> {
        Ok(match self {
            Strategy::Spark(cfg) => spark_decompose(scene, cfg)
                .into_iter()
                .map(Primitive::Spark)
                .collect(),
            Strategy::Flame(cfg) => flame_decompose(&build_octree(*cfg, scene)?)
                .into_iter()
                .map(Primitive::Flame)
                .collect(),
        })
    }

    pub fn is_critical(&self, robot: &PlacedRobot, prim: &Primitive) -> bool {
        match (self, prim) {
            (Strategy::Spark(cfg), Primitive::Spark(p)) => spark_is_critical_placed(robot, p, cfg),
            (Strategy::Flame(cfg), Primitive::Flame(p)) => flame_is_critical_placed(robot, p, cfg),
            _ => false,
        }
    }

    fn check(&self, db: &ExperienceDb) -> Result<()> {
        if db.framework() != self.framework() {
            return Err(Error::FrameworkMismatch {
                expected: self.framework().to_string(),
                found: db.framework().to_string(),
            });
        }
        Ok(())
    }
}

/// Adds the critical configurations of `path` for every primitive of `scene`.
/// Returns the number of configurations added.
pub fn learn(
    db: &mut ExperienceDb,
    scene: &[BoxObstacle],
    path: &Path,
    chain: &KinematicChain,
    strategy: &Strategy,
) -> Result<usize> {
    strategy.check(db)?;
    for dof in [db.dof(), path.start().dof()] {
        if dof != chain.dof() {
            return Err(Error::DimensionMismatch {
                expected: chain.dof(),
                got: dof,
            });
        }
    }
    let prims = strategy.decompose(scene)?;
    if prims.is_empty() {
        return Ok(0);
    }
    let configs = path.densified(LEARN_SPACING);
    let placed: Vec<PlacedRobot> = configs.iter().map(|q| PlacedRobot::new(chain, q)).collect();
    let mut added = 0;
    for prim in prims {
        let critical: Vec<Configuration> = configs
            .iter()
            .zip(&placed)
            .filter(|(_, robot)| strategy.is_critical(robot, &prim))
            .map(|(q, _)| q.clone())
            .collect();
        if !critical.is_empty() {
            added += db.insert(prim, &critical)?;
        }
    }
    Ok(added)
}

/// Retrieved samplers for the primitives of a scene.
pub fn retrieve(
    db: &ExperienceDb,
    prims: &[Primitive],
    strategy: &Strategy,
) -> Result<Vec<(SamplerId, Arc<LocalSampler>)>> {
    strategy.check(db)?;
    Ok(match strategy {
        Strategy::Spark(cfg) => {
            let q: Vec<_> = prims
                .iter()
                .filter_map(|p| match p {
                    Primitive::Spark(s) => Some(*s),
                    Primitive::Flame(_) => None,
                })
                .collect();
            db.retrieve_spark(&q, cfg.d_radius)
        }
        Strategy::Flame(_) => {
            let q: Vec<_> = prims
                .iter()
                .filter_map(|p| match p {
                    Primitive::Flame(f) => Some(*f),
                    Primitive::Spark(_) => None,
                })
                .collect();
            db.retrieve_flame(&q)
        }
    })
}

/// Decomposes the scene, retrieves matching samplers, and blends them with
/// uniform sampling. No matches gives a purely uniform sampler.
pub fn infer(
    db: &ExperienceDb,
    scene: &[BoxObstacle],
    chain: &KinematicChain,
    strategy: &Strategy,
    lambda: f64,
) -> Result<GlobalSampler> {
    strategy.check(db)?;
    if db.dof() != chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: chain.dof(),
            got: db.dof(),
        });
    }
    let prims = strategy.decompose(scene)?;
    let samplers = retrieve(db, &prims, strategy)?;
    GlobalSampler::new(chain.bounds(), lambda, samplers)
}

#[derive(Debug, Clone)]
pub struct ExperienceResult {
    pub planner: PlannerResult,
    /// Seconds spent decomposing and retrieving.
    pub retrieval_time: f64,
    /// Number of distinct local samplers used.
    pub samplers: usize,
}

impl ExperienceResult {
    pub fn planning_time(&self) -> f64 {
        self.planner.time
    }

    pub fn total_time(&self) -> f64 {
        self.retrieval_time + self.planner.time
    }
}

/// Plans with a sampler inferred from `db`; without a database this is plain
/// uniform RRT-Connect with zero retrieval time.
#[allow(clippy::too_many_arguments)]
pub fn plan_with_experience<V: Validity, R: Rng + ?Sized>(
    db: Option<&ExperienceDb>,
    scene: &[BoxObstacle],
    start: &Configuration,
    goal: &Configuration,
    chain: &KinematicChain,
    validity: &V,
    lambda: f64,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<ExperienceResult> {
    let clock = Instant::now();
    let (sampler, retrieval_time) = match db {
        Some(db) => {
            let s = infer(db, scene, chain, &Strategy::for_db(db), lambda)?;
            (s, clock.elapsed().as_secs_f64())
        }
        None => (GlobalSampler::uniform(chain.bounds()), 0.0),
    };
    let samplers = sampler.len();
    let planner = rrt_connect(start, goal, &sampler, validity, cfg, rng)?;
    Ok(ExperienceResult {
        planner,
        retrieval_time,
        samplers,
    })
}
