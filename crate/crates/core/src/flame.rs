//! Occupancy octree and octobox primitives.
//!
//! The octree is an axis-aligned lattice in the robot base frame. Octoboxes
//! are the 4×4×4 leaf blocks two levels above the leaves; each becomes a
//! primitive carrying its lattice index and a 64-bit occupancy word.

use std::path::Path as FsPath;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gjk_intersects, Aabb, BoxObstacle, OrientedBox, Pose, Vec3};
use crate::robot::{KinematicChain, PlacedRobot};

/// Leaves per octobox side.
pub const BLOCK: usize = 4;

/// Overlap below this depth along a separating axis counts as touching only.
pub const RASTER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlameConfig {
    /// Leaf side length in meters.
    pub resolution: f64,
    /// Tree depth; the domain is `resolution · 2^depth` on a side.
    pub depth: u32,
    /// Domain center in the robot base frame.
    pub center: [f64; 3],
}

impl Default for FlameConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            depth: 6,
            center: [0.0; 3],
        }
    }
}

impl FlameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::InvalidInput(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !(2..=10).contains(&self.depth) {
            return Err(Error::InvalidInput(format!(
                "depth must be in 2..=10, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Leaves per domain side.
    pub fn leaves_per_side(&self) -> usize {
        1 << self.depth
    }

    pub fn side(&self) -> f64 {
        self.resolution * self.leaves_per_side() as f64
    }

    /// Minimum corner of the domain.
    pub fn origin(&self) -> Vec3 {
        Vec3::from(self.center) - Vec3::repeat(self.side() / 2.0)
    }

    pub fn domain(&self) -> Aabb {
        let o = self.origin();
        Aabb::new(o, o + Vec3::repeat(self.side()))
    }

    /// Axis-aligned cell of leaf `idx`.
    pub fn leaf_aabb(&self, idx: [usize; 3]) -> Aabb {
        self.cell_aabb(idx, 1)
    }

    fn cell_aabb(&self, idx: [usize; 3], span: usize) -> Aabb {
        let o = self.origin();
        let r = self.resolution;
        let min = Vec3::new(
            o.x + (idx[0] * span) as f64 * r,
            o.y + (idx[1] * span) as f64 * r,
            o.z + (idx[2] * span) as f64 * r,
        );
        let max = Vec3::new(
            o.x + ((idx[0] + 1) * span) as f64 * r,
            o.y + ((idx[1] + 1) * span) as f64 * r,
            o.z + ((idx[2] + 1) * span) as f64 * r,
        );
        Aabb::new(min, max)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Free,
    Full,
    Split(Box<[Node; 8]>),
}

fn child_slot(c: [usize; 3]) -> usize {
    (c[0] << 2) | (c[1] << 1) | c[2]
}

/// Binary occupancy octree. Internal nodes collapse when all children agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Octree {
    config: FlameConfig,
    root: Node,
}

impl Octree {
    /// Builds from occupied leaf indices; duplicates are ignored.
    pub fn from_leaves(
        config: FlameConfig,
        leaves: impl IntoIterator<Item = [usize; 3]>,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.leaves_per_side();
        let mut list: Vec<[usize; 3]> = Vec::new();
        for l in leaves {
            if l.iter().any(|&v| v >= n) {
                return Err(Error::OutsideDomain {
                    index: list.len(),
                    detail: format!("leaf {l:?} outside a {n}³ lattice"),
                });
            }
            list.push(l);
        }
        list.sort_unstable();
        list.dedup();
        let root = build_node(&list, [0; 3], n);
        Ok(Self { config, root })
    }

    /// Rasterizes boxes: a leaf is occupied iff its cell overlaps a box with
    /// positive depth (faces that only touch a cell do not occupy it).
    pub fn from_boxes(config: FlameConfig, boxes: &[BoxObstacle]) -> Result<Self> {
        config.validate()?;
        let domain = config.domain();
        let mut leaves = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            b.validate()?;
            let bb = b.aabb();
            if !domain.contains_aabb(&bb) {
                return Err(Error::OutsideDomain {
                    index: i,
                    detail: format!(
                        "obstacle {i} spans {:?}..{:?}, domain is {:?}..{:?}",
                        bb.min.as_slice(),
                        bb.max.as_slice(),
                        domain.min.as_slice(),
                        domain.max.as_slice()
                    ),
                });
            }
            rasterize_box(&config, b, &mut leaves);
        }
        Self::from_leaves(config, leaves)
    }

    /// A leaf is occupied iff it contains at least one point. Points on a
    /// shared face go to the cell on the positive side.
    pub fn from_points(config: FlameConfig, points: &[Vec3]) -> Result<Self> {
        config.validate()?;
        let o = config.origin();
        let n = config.leaves_per_side() as f64;
        let mut leaves = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let rel = (p - o) / config.resolution;
            if !rel
                .iter()
                .all(|v| v.is_finite() && (0.0..n).contains(&v.floor()))
            {
                return Err(Error::OutsideDomain {
                    index: i,
                    detail: format!("point {i} at {:?}", p.as_slice()),
                });
            }
            leaves.push([rel.x as usize, rel.y as usize, rel.z as usize]);
        }
        Self::from_leaves(config, leaves)
    }

    pub fn config(&self) -> &FlameConfig {
        &self.config
    }

    pub fn is_occupied(&self, idx: [usize; 3]) -> bool {
        let mut node = &self.root;
        let mut size = self.config.leaves_per_side();
        if idx.iter().any(|&v| v >= size) {
            return false;
        }
        let mut local = idx;
        loop {
            match node {
                Node::Free => return false,
                Node::Full => return true,
                Node::Split(children) => {
                    size /= 2;
                    let c = local.map(|v| usize::from(v >= size));
                    for k in 0..3 {
                        local[k] -= c[k] * size;
                    }
                    node = &children[child_slot(c)];
                }
            }
        }
    }

    /// Occupied leaves in lexicographic order.
    pub fn occupied_leaves(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        walk(
            &self.root,
            [0; 3],
            self.config.leaves_per_side(),
            1,
            &mut |idx, _| out.push(idx),
        );
        out.sort_unstable();
        out
    }

    pub fn occupied_count(&self) -> usize {
        let mut total = 0;
        count(&self.root, self.config.leaves_per_side(), &mut total);
        total
    }

    pub fn node_count(&self) -> usize {
        fn nodes(n: &Node) -> usize {
            match n {
                Node::Split(c) => 1 + c.iter().map(nodes).sum::<usize>(),
                _ => 1,
            }
        }
        nodes(&self.root)
    }

    /// Clears `round(fraction · occupied)` randomly chosen occupied leaves.
    pub fn with_dropout<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidInput(format!(
                "dropout fraction {fraction} outside [0, 1]"
            )));
        }
        let leaves = self.occupied_leaves();
        let drop = (fraction * leaves.len() as f64).round() as usize;
        let mut keep = vec![true; leaves.len()];
        for i in sample(rng, leaves.len(), drop) {
            keep[i] = false;
        }
        Self::from_leaves(
            self.config,
            leaves
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(l, _)| l),
        )
    }
}

fn build_node(leaves: &[[usize; 3]], base: [usize; 3], size: usize) -> Node {
    if leaves.is_empty() {
        return Node::Free;
    }
    if leaves.len() == size * size * size {
        return Node::Full;
    }
    let half = size / 2;
    let mut parts: [Vec<[usize; 3]>; 8] = Default::default();
    for l in leaves {
        let c = [0, 1, 2].map(|k| usize::from(l[k] >= base[k] + half));
        parts[child_slot(c)].push(*l);
    }
    let children: [Node; 8] = std::array::from_fn(|slot| {
        let c = [(slot >> 2) & 1, (slot >> 1) & 1, slot & 1];
        let child_base = [0, 1, 2].map(|k| base[k] + c[k] * half);
        build_node(&parts[slot], child_base, half)
    });
    Node::Split(Box::new(children))
}

/// Visits occupied cells of side `min_span` leaves (or larger collapsed cells
/// expanded down to that span). The callback receives the cell index in units
/// of `min_span` and the node covering it.
fn walk(
    node: &Node,
    base: [usize; 3],
    size: usize,
    min_span: usize,
    f: &mut impl FnMut([usize; 3], &Node),
) {
    match node {
        Node::Free => {}
        _ if size == min_span => f(base.map(|v| v / min_span), node),
        Node::Full => {
            let cells = size / min_span;
            let b = base.map(|v| v / min_span);
            for x in 0..cells {
                for y in 0..cells {
                    for z in 0..cells {
                        f([b[0] + x, b[1] + y, b[2] + z], node);
                    }
                }
            }
        }
        Node::Split(children) => {
            let half = size / 2;
            for (slot, child) in children.iter().enumerate() {
                let c = [(slot >> 2) & 1, (slot >> 1) & 1, slot & 1];
                walk(
                    child,
                    [0, 1, 2].map(|k| base[k] + c[k] * half),
                    half,
                    min_span,
                    f,
                );
            }
        }
    }
}

fn count(node: &Node, size: usize, total: &mut usize) {
    match node {
        Node::Free => {}
        Node::Full => *total += size * size * size,
        Node::Split(children) => children.iter().for_each(|c| count(c, size / 2, total)),
    }
}

fn rasterize_box(config: &FlameConfig, b: &BoxObstacle, out: &mut Vec<[usize; 3]>) {
    let bb = b.aabb();
    let o = config.origin();
    let r = config.resolution;
    let n = config.leaves_per_side();
    let range = |k: usize| {
        let lo = ((bb.min[k] - o[k]) / r).floor().max(0.0) as usize;
        let hi = (((bb.max[k] - o[k]) / r).ceil() as usize).min(n);
        lo..hi
    };
    let obb = OrientedBox::new(b);
    for x in range(0) {
        for y in range(1) {
            for z in range(2) {
                if cell_overlaps(&config.leaf_aabb([x, y, z]), &obb) {
                    out.push([x, y, z]);
                }
            }
        }
    }
}

/// Separating-axis test between an axis-aligned cell and an oriented box,
/// requiring positive overlap on every axis.
fn cell_overlaps(cell: &Aabb, obb: &OrientedBox) -> bool {
    let c = cell.center();
    let h = cell.extents() * 0.5;
    let t = obb.center - c;
    let axes = obb.axes;
    let test = |l: Vec3| {
        let norm = l.norm();
        if norm < 1e-12 {
            return true;
        }
        let l = l / norm;
        let ra = h.x * l.x.abs() + h.y * l.y.abs() + h.z * l.z.abs();
        let rb = (0..3)
            .map(|i| obb.half[i] * axes.column(i).dot(&l).abs())
            .sum::<f64>();
        t.dot(&l).abs() < ra + rb - RASTER_TOLERANCE
    };
    for i in 0..3 {
        if !test(Vec3::ith(i, 1.0)) || !test(axes.column(i).into()) {
            return false;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let a: Vec3 = axes.column(j).into();
            if !test(Vec3::ith(i, 1.0).cross(&a)) {
                return false;
            }
        }
    }
    true
}

/// A posed 4×4×4 occupancy block.
///
/// Bit `16·x + 4·y + z` holds leaf `(x, y, z)` of the block, x varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlamePrimitive {
    pub grid: [i64; 3],
    /// Block center; always the lattice-derived value.
    pub pose: Pose,
    pub bits: u64,
}

/// Exact identity of an octobox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlameKey {
    pub grid: [i64; 3],
    pub bits: u64,
}

pub fn bit_index(local: [usize; 3]) -> u32 {
    (local[0] * BLOCK * BLOCK + local[1] * BLOCK + local[2]) as u32
}

impl FlamePrimitive {
    pub fn new(config: &FlameConfig, grid: [i64; 3], bits: u64) -> Self {
        Self {
            grid,
            pose: Pose::from_translation(block_center(config, grid)),
            bits,
        }
    }

    pub fn key(&self) -> FlameKey {
        FlameKey {
            grid: self.grid,
            bits: self.bits,
        }
    }

    /// Outer bounds of the block (side `4r`).
    pub fn aabb(&self, config: &FlameConfig) -> Aabb {
        let half = Vec3::repeat(config.resolution * BLOCK as f64 / 2.0);
        let c = block_center(config, self.grid);
        Aabb::new(c - half, c + half)
    }
}

fn block_center(config: &FlameConfig, grid: [i64; 3]) -> Vec3 {
    let o = config.origin();
    let span = config.resolution * BLOCK as f64;
    Vec3::new(
        o.x + (grid[0] as f64 + 0.5) * span,
        o.y + (grid[1] as f64 + 0.5) * span,
        o.z + (grid[2] as f64 + 0.5) * span,
    )
}

pub fn flame_key(p: &FlamePrimitive) -> FlameKey {
    p.key()
}

pub fn build_octree(config: FlameConfig, scene: &[BoxObstacle]) -> Result<Octree> {
    Octree::from_boxes(config, scene)
}

/// One primitive per non-empty octobox, ordered by grid index.
pub fn flame_decompose(tree: &Octree) -> Vec<FlamePrimitive> {
    let config = tree.config;
    let mut out = Vec::new();
    walk(
        &tree.root,
        [0; 3],
        config.leaves_per_side(),
        BLOCK,
        &mut |g, node| {
            let bits = block_bits(node);
            if bits != 0 {
                out.push(FlamePrimitive::new(&config, g.map(|v| v as i64), bits));
            }
        },
    );
    out.sort_by_key(|p| p.grid);
    out
}

fn block_bits(node: &Node) -> u64 {
    let mut bits = 0u64;
    walk(node, [0; 3], BLOCK, 1, &mut |l, _| {
        bits |= 1 << bit_index(l)
    });
    bits
}

/// True iff any robot shape touches or enters the octobox bounds.
pub fn flame_is_critical(
    chain: &KinematicChain,
    q: &[f64],
    prim: &FlamePrimitive,
    config: &FlameConfig,
) -> bool {
    flame_is_critical_placed(&PlacedRobot::new(chain, q), prim, config)
}

pub fn flame_is_critical_placed(
    robot: &PlacedRobot,
    prim: &FlamePrimitive,
    config: &FlameConfig,
) -> bool {
    let aabb = prim.aabb(config);
    let target = OrientedBox::new(&aabb.to_box());
    robot
        .shapes()
        .iter()
        .any(|s| s.aabb.intersects(&aabb) && gjk_intersects(s, &target))
}

/// Parses whitespace-separated `x y z` lines; blank lines and `#` comments
/// are skipped.
pub fn parse_points(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::malformed("point file", format!("line {}: {e}", n + 1)))?;
        let [x, y, z] = vals[..] else {
            return Err(Error::malformed(
                "point file",
                format!("line {}: expected 3 values, got {}", n + 1, vals.len()),
            ));
        };
        out.push(Vec3::new(x, y, z));
    }
    Ok(out)
}

pub fn load_points(path: &FsPath) -> Result<Vec<Vec3>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text)
}
