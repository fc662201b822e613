//! RRT-Connect with an injectable sampler, and randomized path shortcutting.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::robot::{CollisionWorld, Configuration, JointBounds, KinematicChain, Path};
use crate::sampling::GlobalSampler;

/// State and edge validity for a planning query.
pub trait Validity {
    fn state_valid(&self, q: &[f64]) -> bool;
    /// Both endpoints are assumed valid.
    fn edge_valid(&self, a: &[f64], b: &[f64]) -> bool;
}

/// Collision-based validity for a chain in a box scene.
pub struct ChainValidity<'a> {
    pub chain: &'a KinematicChain,
    pub world: &'a CollisionWorld,
    pub bounds: JointBounds,
    pub edge_step: f64,
}

impl<'a> ChainValidity<'a> {
    pub fn new(chain: &'a KinematicChain, world: &'a CollisionWorld, edge_step: f64) -> Self {
        Self {
            chain,
            world,
            bounds: chain.bounds(),
            edge_step,
        }
    }
}

impl Validity for ChainValidity<'_> {
    fn state_valid(&self, q: &[f64]) -> bool {
        self.bounds.contains(q) && !self.chain.in_collision_world(q, self.world)
    }

    fn edge_valid(&self, a: &[f64], b: &[f64]) -> bool {
        self.chain
            .validate_edge_world(a, b, self.world, self.edge_step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Maximum joint-space extension length.
    pub range: f64,
    pub timeout: Duration,
    /// Optional cap on iterations, mostly for tests.
    pub max_iterations: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            range: 0.75,
            timeout: Duration::from_secs(60),
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Solved,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Solved => "solved",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerResult {
    pub outcome: Outcome,
    pub path: Option<Path>,
    /// Wall time in seconds.
    pub time: f64,
    pub iterations: usize,
    pub samples: usize,
}

impl PlannerResult {
    pub fn solved(&self) -> bool {
        self.outcome == Outcome::Solved
    }
}

struct Tree {
    nodes: Vec<Configuration>,
    parents: Vec<usize>,
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

impl Tree {
    fn new(root: Configuration) -> Self {
        Self {
            nodes: vec![root],
            parents: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &Configuration) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = n.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn extend(&mut self, target: &Configuration, range: f64, validity: &impl Validity) -> Extend {
        let near = self.nearest(target);
        let from = &self.nodes[near];
        let d = from.distance(target);
        let (q_new, reached) = if d <= range {
            (target.clone(), true)
        } else {
            (from.interpolate(target, range / d), false)
        };
        if !validity.state_valid(&q_new) || !validity.edge_valid(from, &q_new) {
            return Extend::Trapped;
        }
        self.nodes.push(q_new);
        self.parents.push(near);
        let idx = self.nodes.len() - 1;
        if reached {
            Extend::Reached(idx)
        } else {
            Extend::Advanced(idx)
        }
    }

    fn connect(&mut self, target: &Configuration, range: f64, validity: &impl Validity) -> Extend {
        loop {
            match self.extend(target, range, validity) {
                Extend::Advanced(_) => continue,
                other => return other,
            }
        }
    }

    /// Root-to-node sequence.
    fn branch(&self, mut idx: usize) -> Vec<Configuration> {
        let mut out = Vec::new();
        while idx != usize::MAX {
            out.push(self.nodes[idx].clone());
            idx = self.parents[idx];
        }
        out.reverse();
        out
    }
}

/// Bidirectional RRT with extend/connect alternation.
///
/// Fails immediately if `start` or `goal` is invalid.
pub fn rrt_connect<V: Validity, R: Rng + ?Sized>(
    start: &Configuration,
    goal: &Configuration,
    sampler: &GlobalSampler,
    validity: &V,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlannerResult> {
    let clock = Instant::now();
    for (what, q) in [("start", start), ("goal", goal)] {
        if q.dof() != sampler.bounds().dof() {
            return Err(Error::DimensionMismatch {
                expected: sampler.bounds().dof(),
                got: q.dof(),
            });
        }
        if !validity.state_valid(q) {
            return Err(Error::InvalidQuery(format!(
                "{what} configuration is out of bounds or in collision"
            )));
        }
    }
    if start == goal {
        return Ok(PlannerResult {
            outcome: Outcome::Solved,
            path: Some(Path::single(start.clone())),
            time: clock.elapsed().as_secs_f64(),
            iterations: 0,
            samples: 0,
        });
    }

    let mut a = Tree::new(start.clone());
    let mut b = Tree::new(goal.clone());
    // `a_is_start` tracks which tree is rooted at the start after swaps.
    let mut a_is_start = true;
    let mut iterations = 0;
    let mut samples = 0;
    loop {
        if clock.elapsed() >= cfg.timeout || cfg.max_iterations.is_some_and(|m| iterations >= m) {
            return Ok(PlannerResult {
                outcome: Outcome::Timeout,
                path: None,
                time: clock.elapsed().as_secs_f64(),
                iterations,
                samples,
            });
        }
        iterations += 1;
        let q_rand = sampler.sample(rng);
        samples += 1;
        let new_idx = match a.extend(&q_rand, cfg.range, validity) {
            Extend::Trapped => None,
            Extend::Advanced(i) | Extend::Reached(i) => Some(i),
        };
        if let Some(i) = new_idx {
            let q_new = a.nodes[i].clone();
            if let Extend::Reached(j) = b.connect(&q_new, cfg.range, validity) {
                let mut from_a = a.branch(i);
                let mut from_b = b.branch(j);
                from_b.pop(); // q_new appears in both branches
                from_b.reverse();
                from_a.extend(from_b);
                if !a_is_start {
                    from_a.reverse();
                }
                return Ok(PlannerResult {
                    outcome: Outcome::Solved,
                    path: Some(Path::new(from_a)?),
                    time: clock.elapsed().as_secs_f64(),
                    iterations,
                    samples,
                });
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
}

/// Randomized shortcutting: repeatedly picks two points along the path and
/// replaces the section between them with a straight segment when valid.
///
/// Endpoints are preserved and the joint-space length never increases.
pub fn shortcut<V: Validity, R: Rng + ?Sized>(
    path: &Path,
    validity: &V,
    iterations: usize,
    rng: &mut R,
) -> Path {
    let mut pts: Vec<Configuration> = path.waypoints().to_vec();
    if pts.len() < 3 && (pts.len() < 2 || pts[0] == pts[1]) {
        return path.clone();
    }
    for _ in 0..iterations {
        let cum = cumulative_lengths(&pts);
        let total = *cum.last().expect("non-empty");
        if total <= 0.0 {
            break;
        }
        let mut s = rng.random_range(0.0..total);
        let mut t = rng.random_range(0.0..total);
        if s > t {
            std::mem::swap(&mut s, &mut t);
        }
        let (i, qs) = point_at(&pts, &cum, s);
        let (j, qt) = point_at(&pts, &cum, t);
        // Points on the same segment give nothing to remove.
        if i == j {
            continue;
        }
        let old_len = qs.distance(&pts[i + 1]) + (cum[j] - cum[i + 1]) + pts[j].distance(&qt);
        if qs.distance(&qt) >= old_len - 1e-12 {
            continue;
        }
        if !validity.edge_valid(&qs, &qt) {
            continue;
        }
        let mut next = Vec::with_capacity(pts.len());
        next.extend_from_slice(&pts[..=i]);
        if qs != pts[i] {
            next.push(qs);
        }
        if qt != pts[j + 1] {
            next.push(qt);
        }
        next.extend_from_slice(&pts[j + 1..]);
        pts = next;
    }
    Path::new(pts).expect("shortcut keeps endpoints")
}

fn cumulative_lengths(pts: &[Configuration]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in pts.windows(2) {
        acc += w[0].distance(&w[1]);
        cum.push(acc);
    }
    cum
}

/// Segment index `k` (point lies between `pts[k]` and `pts[k + 1]`) and the point.
fn point_at(pts: &[Configuration], cum: &[f64], s: f64) -> (usize, Configuration) {
    let k = match cum.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(k) => k.min(pts.len() - 2),
        Err(k) => k.saturating_sub(1).min(pts.len() - 2),
    };
    let seg = cum[k + 1] - cum[k];
    let t = if seg > 0.0 { (s - cum[k]) / seg } else { 0.0 };
    (k, pts[k].interpolate(&pts[k + 1], t.clamp(0.0, 1.0)))
}

/// True iff every consecutive pair passes the edge check.
pub fn path_is_valid<V: Validity>(path: &Path, validity: &V) -> bool {
    path.waypoints().iter().all(|q| validity.state_valid(q))
        && path
            .waypoints()
            .windows(2)
            .all(|w| validity.edge_valid(&w[0], &w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::arm3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(v: &[f64]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn degenerate_query_returns_start() {
        let chain = arm3();
        let world = CollisionWorld::empty();
        let v = ChainValidity::new(&chain, &world, 0.05);
        let gs = GlobalSampler::uniform(chain.bounds());
        let q = cfg(&[0.1, 0.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = rrt_connect(&q, &q, &gs, &v, &PlannerConfig::default(), &mut rng).unwrap();
        assert!(r.solved());
        assert_eq!(r.path.unwrap().waypoints(), &[q]);
    }

    #[test]
    fn single_waypoint_shortcut_unchanged() {
        let chain = arm3();
        let world = CollisionWorld::empty();
        let v = ChainValidity::new(&chain, &world, 0.05);
        let p = Path::single(cfg(&[0.0, 0.0, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(shortcut(&p, &v, 50, &mut rng), p);
    }

    #[test]
    fn invalid_start_is_an_error() {
        let chain = arm3();
        let world = CollisionWorld::empty();
        let v = ChainValidity::new(&chain, &world, 0.05);
        let gs = GlobalSampler::uniform(chain.bounds());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out_of_bounds = cfg(&[10.0, 0.0, 0.0]);
        let ok = cfg(&[0.0, 0.0, 0.0]);
        assert!(rrt_connect(
            &out_of_bounds,
            &ok,
            &gs,
            &v,
            &PlannerConfig::default(),
            &mut rng
        )
        .is_err());
    }
}
