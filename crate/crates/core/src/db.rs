//! Experience database: primitive → critical configurations → local sampler.
//!
//! Box-pair entries are indexed by a GNAT metric tree for radius queries;
//! octobox entries sit in a hash table keyed by their exact identity.
//!
//! # File format
//!
//! JSON object with fields `format` (`"spark-flame-experience"`), `version`
//! (currently 1), `framework` (`"spark"` or `"flame"`), `dof`, `sigma`,
//! `spark` and `flame` parameter tables, `trained_problems`, `next_id`, and
//! `entries`. Each entry holds `id`, `primitive`, and `configs` (a list of
//! joint vectors).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path as FsPath;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flame::{FlameConfig, FlameKey, FlamePrimitive};
use crate::robot::Configuration;
use crate::sampling::{LocalSampler, SamplerId, DEFAULT_SIGMA};
use crate::spark::{
    spark_primitive_distance, spark_primitive_lower_bound, SparkConfig, SparkKey, SparkPrimitive,
};

pub const FORMAT_TAG: &str = "spark-flame-experience";
pub const FORMAT_VERSION: u32 = 1;

/// Two configurations closer than this in every joint are the same.
pub const DEDUP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Spark,
    Flame,
}

impl Framework {
    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::Spark => "spark",
            Framework::Flame => "flame",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spark" => Ok(Framework::Spark),
            "flame" => Ok(Framework::Flame),
            other => Err(Error::InvalidInput(format!("unknown framework '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Spark(SparkPrimitive),
    Flame(FlamePrimitive),
}

impl Primitive {
    pub fn framework(&self) -> Framework {
        match self {
            Primitive::Spark(_) => Framework::Spark,
            Primitive::Flame(_) => Framework::Flame,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    id: u64,
    primitive: Primitive,
    configs: Vec<Configuration>,
    sampler: Arc<LocalSampler>,
}

impl Entry {
    /// Insertion counter; stable across save/load.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn primitive(&self) -> &Primitive {
        &self.primitive
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn sampler(&self) -> &Arc<LocalSampler> {
        &self.sampler
    }
}

fn is_duplicate(a: &Configuration, b: &Configuration) -> bool {
    a.max_abs_diff(b) < DEDUP_TOLERANCE
}

// ---------------------------------------------------------------- GNAT

/// Geometric near-neighbor access tree over items addressed by index.
///
/// The tree is built on a pseudometric `d` and a query collects the items
/// accepted by a predicate that can only hold where `d(query, x) ≤ radius`.
/// Pruning uses the plain triangle inequality of `d`.
#[derive(Debug, Clone)]
pub struct Gnat {
    root: Option<GnatNode>,
    size: usize,
    branching: usize,
}

#[derive(Debug, Clone)]
enum GnatNode {
    Leaf {
        items: Vec<usize>,
        /// Row-major distances from each item to every pivot of the parent
        /// node; empty for a root leaf.
        pivot_dists: Vec<f64>,
    },
    Inner {
        pivots: Vec<usize>,
        /// `ranges[i][j]`: min and max distance from pivot `i` to the items of child `j`, pivot `j` included.
        ranges: Vec<Vec<(f64, f64)>>,
        children: Vec<GnatNode>,
    },
}

pub const GNAT_BRANCHING: usize = 8;
const MAX_BRANCHING: usize = 64;
/// Absorbs rounding in the triangle inequality of the indexed distance.
const GNAT_MARGIN: f64 = 1e-9;
const GNAT_LEAF_SIZE: usize = 16;

impl Gnat {
    pub fn build<D: Fn(usize, usize) -> f64>(
        items: Vec<usize>,
        branching: usize,
        dist: &D,
    ) -> Self {
        let size = items.len();
        let branching = branching.clamp(2, MAX_BRANCHING);
        let mut rng = ChaCha8Rng::seed_from_u64(size as u64);
        let root =
            (!items.is_empty()).then(|| build_gnat(items, Vec::new(), branching, dist, &mut rng));
        Self {
            root,
            size,
            branching,
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Items passing `accept`, which must reject every `x` with
    /// `query_dist(x) > radius`. In no particular order.
    pub fn range<Q: Fn(usize) -> f64, A: Fn(usize) -> bool>(
        &self,
        query_dist: &Q,
        radius: f64,
        accept: &A,
        out: &mut Vec<usize>,
    ) {
        if let Some(root) = &self.root {
            self.range_node(root, &[], query_dist, radius + GNAT_MARGIN, accept, out);
        }
    }

    fn range_node<Q: Fn(usize) -> f64, A: Fn(usize) -> bool>(
        &self,
        node: &GnatNode,
        parent: &[f64],
        qd: &Q,
        r: f64,
        accept: &A,
        out: &mut Vec<usize>,
    ) {
        match node {
            GnatNode::Leaf { items, pivot_dists } => {
                // Parent pivots that were never measured hold NaN and exclude nothing.
                let n = parent.len();
                for (k, &item) in items.iter().enumerate() {
                    let row = pivot_dists.get(k * n..(k + 1) * n).unwrap_or(&[]);
                    let excluded = row.iter().zip(parent).any(|(&x, &d)| (x - d).abs() > r);
                    if !excluded && accept(item) {
                        out.push(item);
                    }
                }
            }
            GnatNode::Inner {
                pivots,
                ranges,
                children,
            } => {
                // A child eliminated by an earlier pivot's ranges also spares
                // the distance to its own pivot.
                let n = pivots.len();
                let mut alive = [true; MAX_BRANCHING];
                let mut d = [f64::NAN; MAX_BRANCHING];
                for i in 0..n {
                    if !alive[i] {
                        continue;
                    }
                    let di = qd(pivots[i]);
                    d[i] = di;
                    if di <= r && accept(pivots[i]) {
                        out.push(pivots[i]);
                    }
                    for (j, &(lo, hi)) in ranges[i].iter().enumerate() {
                        if lo - di > r || di - hi > r {
                            alive[j] = false;
                        }
                    }
                }
                for (child, _) in children.iter().zip(&alive).filter(|(_, &a)| a) {
                    self.range_node(child, &d[..n], qd, r, accept, out);
                }
            }
        }
    }

    pub fn branching(&self) -> usize {
        self.branching
    }
}

fn build_gnat<D: Fn(usize, usize) -> f64, R: Rng>(
    items: Vec<usize>,
    pivot_dists: Vec<f64>,
    k: usize,
    dist: &D,
    rng: &mut R,
) -> GnatNode {
    if items.len() <= GNAT_LEAF_SIZE.max(k) {
        return GnatNode::Leaf { items, pivot_dists };
    }
    // Greedy max-min pivot selection over a 3k candidate sample.
    let cand: Vec<usize> = sample(rng, items.len(), (3 * k).min(items.len())).into_vec();
    let mut chosen = vec![cand[0]];
    let mut min_d: Vec<f64> = cand
        .iter()
        .map(|&c| dist(items[c], items[cand[0]]))
        .collect();
    while chosen.len() < k {
        let (best, _) = min_d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("candidates");
        let c = cand[best];
        chosen.push(c);
        for (m, &other) in min_d.iter_mut().zip(&cand) {
            *m = m.min(dist(items[other], items[c]));
        }
    }
    chosen.sort_unstable();
    chosen.dedup();
    if chosen.len() < 2 {
        return GnatNode::Leaf { items, pivot_dists };
    }
    let pivots: Vec<usize> = chosen.iter().map(|&c| items[c]).collect();
    let is_pivot: HashSet<usize> = chosen.iter().copied().collect();

    let n = pivots.len();
    let mut groups: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
    let mut ranges = vec![vec![(f64::INFINITY, f64::NEG_INFINITY); n]; n];
    let widen = |ranges: &mut Vec<Vec<(f64, f64)>>, i: usize, j: usize, d: f64| {
        let r = &mut ranges[i][j];
        r.0 = r.0.min(d);
        r.1 = r.1.max(d);
    };
    for i in 0..n {
        for j in 0..n {
            let d = dist(pivots[i], pivots[j]);
            widen(&mut ranges, i, j, d);
        }
    }
    for (idx, &item) in items.iter().enumerate() {
        if is_pivot.contains(&idx) {
            continue;
        }
        let d: Vec<f64> = pivots.iter().map(|&p| dist(p, item)).collect();
        let owner = d
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("pivots");
        for (i, &di) in d.iter().enumerate() {
            widen(&mut ranges, i, owner, di);
        }
        groups[owner].0.push(item);
        groups[owner].1.extend(d);
    }
    let children = groups
        .into_iter()
        .map(|(g, pd)| build_gnat(g, pd, k, dist, rng))
        .collect();
    GnatNode::Inner {
        pivots,
        ranges,
        children,
    }
}

// ---------------------------------------------------------------- database

/// Entry lookup structures, rebuilt from `entries` on load.
#[derive(Debug, Clone, Default)]
struct Index {
    spark_keys: HashMap<SparkKey, usize>,
    /// Box-pair primitives by entry position, stored compactly for scans.
    spark_prims: Vec<SparkPrimitive>,
    flame_keys: HashMap<FlameKey, usize>,
    gnat: Option<Gnat>,
    /// Entry positions not yet in the tree.
    buffer: Vec<usize>,
    deferred: bool,
}

#[derive(Debug, Clone)]
pub struct ExperienceDb {
    framework: Framework,
    dof: usize,
    sigma: f64,
    spark: SparkConfig,
    flame: FlameConfig,
    entries: Vec<Entry>,
    next_id: u64,
    trained_problems: u64,
    index: Index,
}

impl ExperienceDb {
    pub fn new(framework: Framework, dof: usize) -> Self {
        Self {
            framework,
            dof,
            sigma: DEFAULT_SIGMA,
            spark: SparkConfig::default(),
            flame: FlameConfig::default(),
            entries: Vec::new(),
            next_id: 0,
            trained_problems: 0,
            index: Index::default(),
        }
    }

    pub fn with_params(
        mut self,
        sigma: f64,
        spark: SparkConfig,
        flame: FlameConfig,
    ) -> Result<Self> {
        if !self.entries.is_empty() {
            return Err(Error::InvalidInput(
                "parameters can only be set on an empty database".into(),
            ));
        }
        spark.validate()?;
        flame.validate()?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid spread {sigma}")));
        }
        self.sigma = sigma;
        self.spark = spark;
        self.flame = flame;
        Ok(self)
    }

    pub fn framework(&self) -> Framework {
        self.framework
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn spark_config(&self) -> &SparkConfig {
        &self.spark
    }

    pub fn flame_config(&self) -> &FlameConfig {
        &self.flame
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn trained_problems(&self) -> u64 {
        self.trained_problems
    }

    pub fn record_training_problem(&mut self) {
        self.trained_problems += 1;
    }

    /// Total stored configurations over all entries.
    pub fn config_count(&self) -> usize {
        self.entries.iter().map(|e| e.configs.len()).sum()
    }

    pub fn find(&self, prim: &Primitive) -> Option<&Entry> {
        self.position(prim).map(|i| &self.entries[i])
    }

    fn position(&self, prim: &Primitive) -> Option<usize> {
        match prim {
            Primitive::Spark(p) => self.index.spark_keys.get(&p.key()).copied(),
            Primitive::Flame(p) => self.index.flame_keys.get(&p.key()).copied(),
        }
    }

    /// Adds configurations to a primitive's set (creating the entry if new),
    /// skipping near-duplicates, and rebuilds its sampler. Returns the number
    /// of configurations actually added.
    pub fn insert(&mut self, prim: Primitive, configs: &[Configuration]) -> Result<usize> {
        if prim.framework() != self.framework {
            return Err(Error::FrameworkMismatch {
                expected: self.framework.to_string(),
                found: prim.framework().to_string(),
            });
        }
        if configs.is_empty() {
            return Err(Error::InvalidInput(
                "cannot insert an empty configuration set".into(),
            ));
        }
        if let Some(bad) = configs.iter().find(|c| c.dof() != self.dof) {
            return Err(Error::DimensionMismatch {
                expected: self.dof,
                got: bad.dof(),
            });
        }
        let pos = self.position(&prim);
        let mut set = pos
            .map(|i| self.entries[i].configs.clone())
            .unwrap_or_default();
        let before = set.len();
        for c in configs {
            if !set.iter().any(|s| is_duplicate(s, c)) {
                set.push(c.clone());
            }
        }
        let added = set.len() - before;
        if added == 0 {
            return Ok(0);
        }
        let sampler = Arc::new(LocalSampler::new(set.clone(), self.sigma)?);
        match pos {
            Some(i) => {
                self.entries[i].configs = set;
                self.entries[i].sampler = sampler;
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.entries.push(Entry {
                    id,
                    primitive: prim,
                    configs: set,
                    sampler,
                });
                self.index_new(self.entries.len() - 1);
            }
        }
        Ok(added)
    }

    /// Inserts many primitives, building the tree once at the end.
    pub fn insert_many(
        &mut self,
        items: impl IntoIterator<Item = (Primitive, Vec<Configuration>)>,
    ) -> Result<usize> {
        self.index.deferred = true;
        let mut added = 0;
        let mut outcome = Ok(());
        for (prim, configs) in items {
            match self.insert(prim, &configs) {
                Ok(n) => added += n,
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        self.index.deferred = false;
        if !self.index.buffer.is_empty() {
            self.rebuild_tree();
        }
        outcome.map(|_| added)
    }

    fn index_new(&mut self, pos: usize) {
        match &self.entries[pos].primitive {
            Primitive::Spark(p) => {
                self.index.spark_keys.insert(p.key(), pos);
                self.index.spark_prims.push(*p);
                self.index.buffer.push(pos);
                let indexed = self.index.gnat.as_ref().map_or(0, Gnat::len);
                let over = self.index.buffer.len() * 10 > indexed
                    && self.index.buffer.len() > GNAT_LEAF_SIZE;
                if over && !self.index.deferred {
                    self.rebuild_tree();
                }
            }
            Primitive::Flame(p) => {
                self.index.flame_keys.insert(p.key(), pos);
            }
        }
    }

    /// A database holds one framework, so box-pair entries fill every position.
    fn spark_prim(&self, pos: usize) -> &SparkPrimitive {
        &self.index.spark_prims[pos]
    }

    fn rebuild_tree(&mut self) {
        let items: Vec<usize> = (0..self.index.spark_prims.len()).collect();
        let cfg = self.spark;
        let gnat = Gnat::build(items, GNAT_BRANCHING, &|a, b| {
            spark_primitive_lower_bound(self.spark_prim(a), self.spark_prim(b), &cfg)
        });
        self.index.gnat = Some(gnat);
        self.index.buffer.clear();
    }

    /// Entry positions within `radius` of `query`, via the tree plus the insert buffer.
    pub fn range_query(&self, query: &SparkPrimitive, radius: f64) -> Vec<usize> {
        let cfg = &self.spark;
        let lower = |i: usize| spark_primitive_lower_bound(query, self.spark_prim(i), cfg);
        let accept = |i: usize| spark_primitive_distance(query, self.spark_prim(i), cfg) <= radius;
        let mut out = Vec::new();
        if let Some(g) = &self.index.gnat {
            g.range(&lower, radius, &accept, &mut out);
        }
        out.extend(self.index.buffer.iter().copied().filter(|&i| accept(i)));
        out.sort_unstable();
        out
    }

    /// Same contract as [`Self::range_query`], by exhaustive scan.
    pub fn range_query_linear(&self, query: &SparkPrimitive, radius: f64) -> Vec<usize> {
        (0..self.index.spark_prims.len())
            .filter(|&i| spark_primitive_distance(query, self.spark_prim(i), &self.spark) <= radius)
            .collect()
    }

    /// Samplers of all entries within `radius` of any query, each once,
    /// ordered by entry id.
    pub fn retrieve_spark(
        &self,
        queries: &[SparkPrimitive],
        radius: f64,
    ) -> Vec<(SamplerId, Arc<LocalSampler>)> {
        let hits = queries.iter().flat_map(|q| self.range_query(q, radius));
        self.collect_samplers(hits)
    }

    pub fn retrieve_spark_linear(
        &self,
        queries: &[SparkPrimitive],
        radius: f64,
    ) -> Vec<(SamplerId, Arc<LocalSampler>)> {
        let hits = queries
            .iter()
            .flat_map(|q| self.range_query_linear(q, radius));
        self.collect_samplers(hits)
    }

    /// Exact-key hits, each once, ordered by entry id.
    pub fn retrieve_flame(
        &self,
        queries: &[FlamePrimitive],
    ) -> Vec<(SamplerId, Arc<LocalSampler>)> {
        let hits = queries
            .iter()
            .filter_map(|q| self.index.flame_keys.get(&q.key()).copied());
        self.collect_samplers(hits)
    }

    fn collect_samplers(
        &self,
        hits: impl Iterator<Item = usize>,
    ) -> Vec<(SamplerId, Arc<LocalSampler>)> {
        let mut pos: Vec<usize> = hits.collect();
        pos.sort_unstable();
        pos.dedup();
        pos.into_iter()
            .map(|i| (self.entries[i].id, self.entries[i].sampler.clone()))
            .collect()
    }

    // ------------------------------------------------------------ persistence

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("database serializes")
    }

    fn to_file(&self) -> DbFile {
        DbFile {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            framework: self.framework,
            dof: self.dof,
            sigma: self.sigma,
            spark: self.spark,
            flame: self.flame,
            trained_problems: self.trained_problems,
            next_id: self.next_id,
            entries: self
                .entries
                .iter()
                .map(|e| EntryFile {
                    id: e.id,
                    primitive: e.primitive,
                    configs: e.configs.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::malformed("experience database", e))?;
        let header: Header = serde_json::from_value(value.clone())
            .map_err(|e| Error::malformed("experience database", e))?;
        if header.format != FORMAT_TAG {
            return Err(Error::malformed(
                "experience database",
                format!("unexpected format tag '{}'", header.format),
            ));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: FORMAT_VERSION,
            });
        }
        let file: DbFile = serde_json::from_value(value)
            .map_err(|e| Error::malformed("experience database", e))?;
        file.into_db()
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct DbFile {
    format: String,
    version: u32,
    framework: Framework,
    dof: usize,
    sigma: f64,
    spark: SparkConfig,
    flame: FlameConfig,
    trained_problems: u64,
    next_id: u64,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    id: u64,
    primitive: Primitive,
    configs: Vec<Configuration>,
}

impl DbFile {
    fn into_db(self) -> Result<ExperienceDb> {
        let bad = |reason: String| Error::malformed("experience database", reason);
        let mut db = ExperienceDb::new(self.framework, self.dof)
            .with_params(self.sigma, self.spark, self.flame)?;
        let mut ids = HashSet::new();
        for e in self.entries {
            if e.primitive.framework() != self.framework {
                return Err(bad(format!(
                    "entry {} has a {} primitive",
                    e.id,
                    e.primitive.framework()
                )));
            }
            if e.id >= self.next_id || !ids.insert(e.id) {
                return Err(bad(format!(
                    "entry id {} is duplicated or out of range",
                    e.id
                )));
            }
            if e.configs.is_empty() {
                return Err(bad(format!("entry {} has no configurations", e.id)));
            }
            if let Some(c) = e.configs.iter().find(|c| c.dof() != self.dof) {
                return Err(bad(format!(
                    "entry {} has a {}-joint configuration",
                    e.id,
                    c.dof()
                )));
            }
            if db.position(&e.primitive).is_some() {
                return Err(bad(format!("entry {} repeats a primitive", e.id)));
            }
            let sampler = Arc::new(LocalSampler::new(e.configs.clone(), self.sigma)?);
            db.entries.push(Entry {
                id: e.id,
                primitive: e.primitive,
                configs: e.configs,
                sampler,
            });
            let pos = db.entries.len() - 1;
            match &e.primitive {
                Primitive::Spark(p) => {
                    db.index.spark_keys.insert(p.key(), pos);
                    db.index.spark_prims.push(*p);
                }
                Primitive::Flame(p) => {
                    db.index.flame_keys.insert(p.key(), pos);
                }
            }
        }
        db.next_id = self.next_id;
        db.trained_problems = self.trained_problems;
        db.rebuild_tree();
        Ok(db)
    }
}

pub fn db_insert(
    db: &mut ExperienceDb,
    prim: Primitive,
    configs: &[Configuration],
) -> Result<usize> {
    db.insert(prim, configs)
}
