//! Seeded environment families and their pick/place tasks.
//!
//! Every fixture is built in a local frame (x into the fixture, z up) and
//! placed at `Rz(yaw) · T(nominal + offset)` in the robot base frame, so yaw
//! swings the whole fixture around the robot.
//!
//! Nominal geometry (meters):
//!
//! | family        | fixture                                                         | objects |
//! |---------------|-----------------------------------------------------------------|---------|
//! | `small_shelf` | 0.8 wide, 0.4 deep, 0.3 opening, 0.02 panels; bottom at z 0.75, front 0.55 ahead | 3 |
//! | `large_shelf` | same footprint, three 0.3 levels with bottoms at 0.5, 0.82, 1.14; front 0.55 ahead | 7–9 |
//! | `box_table`   | 0.8 × 1.2 table top at z 0.7, centered 0.8 ahead; open 0.3 × 0.3 × 0.2 box on it | 1 cube |
//!
//! Shelf objects are 0.06 × 0.06 × 0.12 bounding boxes of upright cylinders
//! with at least 0.05 clearance between them; the cube is 0.05 on a side.
//!
//! Grasps put the tool point at the object center. On shelves the tool
//! x-axis points into the shelf with tool z up; in the box the tool x-axis
//! points down.
//!
//! # File format
//!
//! JSON object: `schema_version` (1), `family`, `seed`, `variation`
//! (e.g. `"x,y,z,yaw"`), `drawn` offsets, `obstacles`, and `task`
//! (`kind`, `start`, `goal`, optional `attached` box in the end-effector frame).

use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxObstacle, Pose, Vec3};
use crate::robot::{
    solve_ik_where, CollisionWorld, Configuration, IkConfig, IkTolerance, KinematicChain,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Object placements and IK attempts per scene before giving up.
pub const MAX_ATTEMPTS: usize = 200;

/// Tucked arm configuration of the built-in `arm8` chain.
pub const STOW: [f64; 8] = [0.0, 1.32, 1.4, -0.2, 1.72, 0.0, 1.66, 0.0];

const SHELF_WIDTH: f64 = 0.8;
const SHELF_DEPTH: f64 = 0.4;
const SHELF_OPENING: f64 = 0.3;
const PANEL: f64 = 0.02;
const SHELF_FRONT: f64 = 0.55;
const OBJECT: [f64; 3] = [0.06, 0.06, 0.12];
const CLEARANCE: f64 = 0.05;
const TABLE_TOP: f64 = 0.7;
const TABLE_CENTER: f64 = 0.8;
const BIN: [f64; 3] = [0.3, 0.3, 0.2];
const CUBE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SmallShelf,
    LargeShelf,
    BoxTable,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SmallShelf, Family::LargeShelf, Family::BoxTable];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::SmallShelf => "small_shelf",
            Family::LargeShelf => "large_shelf",
            Family::BoxTable => "box_table",
        }
    }

    /// Half-widths of the variation ranges: (x/y meters, z meters, yaw radians).
    pub fn ranges(&self) -> (f64, f64, f64) {
        use std::f64::consts::FRAC_PI_2;
        match self {
            Family::SmallShelf => (0.1, 0.25, FRAC_PI_2),
            Family::LargeShelf => (0.1, 0.0, FRAC_PI_2),
            Family::BoxTable => (0.1, 0.0, 30f64.to_radians()),
        }
    }

    pub fn default_task(&self) -> TaskKind {
        match self {
            Family::LargeShelf => TaskKind::Place,
            _ => TaskKind::Pick,
        }
    }

    fn nominal(&self) -> Vec3 {
        match self {
            Family::SmallShelf => Vec3::new(SHELF_FRONT, 0.0, 0.75),
            Family::LargeShelf => Vec3::new(SHELF_FRONT, 0.0, 0.5),
            Family::BoxTable => Vec3::new(TABLE_CENTER, 0.0, TABLE_TOP),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scene family '{s}'")))
    }
}

/// Which placement parameters are randomized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Variation {
    pub x: bool,
    pub y: bool,
    pub z: bool,
    pub yaw: bool,
}

impl Variation {
    pub const NONE: Variation = Variation {
        x: false,
        y: false,
        z: false,
        yaw: false,
    };
    pub const ALL: Variation = Variation {
        x: true,
        y: true,
        z: true,
        yaw: true,
    };

    pub fn is_empty(&self) -> bool {
        *self == Variation::NONE
    }
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.x, "x"),
            (self.y, "y"),
            (self.z, "z"),
            (self.yaw, "yaw"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n)
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for Variation {
    type Err = Error;
    /// Comma-separated subset of `x, y, z, yaw` (case-insensitive); `none` or
    /// an empty string for no variation.
    fn from_str(s: &str) -> Result<Self> {
        let mut v = Variation::NONE;
        for part in s.split(',').map(|p| p.trim().to_ascii_lowercase()) {
            match part.as_str() {
                "" | "none" => {}
                "x" => v.x = true,
                "y" => v.y = true,
                "z" => v.z = true,
                "yaw" => v.yaw = true,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown variation axis '{other}'"
                    )))
                }
            }
        }
        Ok(v)
    }
}

impl Serialize for Variation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Placement offsets actually drawn for a scene.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Drawn {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub yaw: f64,
}

impl Drawn {
    pub fn sample<R: Rng + ?Sized>(family: Family, variation: Variation, rng: &mut R) -> Self {
        let (xy, z, yaw) = family.ranges();
        let mut draw = |on: bool, half: f64| {
            if on && half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            }
        };
        Drawn {
            dx: draw(variation.x, xy),
            dy: draw(variation.y, xy),
            dz: draw(variation.z, z),
            yaw: draw(variation.yaw, yaw),
        }
    }

    /// Fixture frame in the robot base frame.
    pub fn fixture_pose(&self, family: Family) -> Pose {
        let t = family.nominal() + Vec3::new(self.dx, self.dy, self.dz);
        Pose::from_yaw(Vec3::zeros(), self.yaw).compose(&Pose::from_translation(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Pick,
    Place,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Pick => "pick",
            TaskKind::Place => "place",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pick" => Ok(TaskKind::Pick),
            "place" => Ok(TaskKind::Place),
            other => Err(Error::InvalidInput(format!("unknown task kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub start: Configuration,
    pub goal: Configuration,
    /// Carried object in the end-effector frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<BoxObstacle>,
}

impl Task {
    /// The chain as it moves during this task.
    pub fn chain(&self, base: &KinematicChain) -> KinematicChain {
        match &self.attached {
            Some(obj) => base.attach_object(*obj),
            None => base.detach(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema_version: u32,
    pub family: Family,
    pub seed: u64,
    pub variation: Variation,
    pub drawn: Drawn,
    pub obstacles: Vec<BoxObstacle>,
    pub task: Task,
}

impl Scene {
    pub fn world(&self) -> CollisionWorld {
        CollisionWorld::new(&self.obstacles)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| Error::malformed("scene", e))?;
        if scene.schema_version != SCHEMA_VERSION {
            return Err(Error::Version {
                found: scene.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        for b in &scene.obstacles {
            b.validate()?;
        }
        if scene.task.start.dof() != scene.task.goal.dof() {
            return Err(Error::malformed("scene", "start and goal differ in length"));
        }
        Ok(scene)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn scene_save(scene: &Scene, path: &FsPath) -> Result<()> {
    scene.save(path)
}

pub fn scene_load(path: &FsPath) -> Result<Scene> {
    Scene::load(path)
}

fn local_box(center: [f64; 3], size: [f64; 3]) -> BoxObstacle {
    BoxObstacle::axis_aligned(Vec3::from(center), Vec3::from(size)).expect("positive fixture size")
}

/// Shelf panels with interior bottoms at the given heights (fixture frame).
fn shelf_panels(levels: &[f64]) -> Vec<BoxObstacle> {
    let (w, d, h, t) = (SHELF_WIDTH, SHELF_DEPTH, SHELF_OPENING, PANEL);
    let top = levels.last().copied().unwrap_or(0.0) + h;
    let bottom = levels.first().copied().unwrap_or(0.0);
    let mut out: Vec<BoxObstacle> = levels
        .iter()
        .map(|z| local_box([d / 2.0, 0.0, z - t / 2.0], [d, w + 2.0 * t, t]))
        .collect();
    out.push(local_box(
        [d / 2.0, 0.0, top + t / 2.0],
        [d, w + 2.0 * t, t],
    ));
    let mid = (bottom + top) / 2.0;
    let span = top - bottom;
    for side in [-1.0, 1.0] {
        out.push(local_box(
            [d / 2.0, side * (w + t) / 2.0, mid],
            [d, t, span],
        ));
    }
    out.push(local_box(
        [d + t / 2.0, 0.0, mid],
        [t, w + 2.0 * t, span + 2.0 * t],
    ));
    out
}

/// Rejection-samples `count` object footprints on one shelf level.
fn place_objects<R: Rng + ?Sized>(
    rng: &mut R,
    level: f64,
    count: usize,
    taken: &[BoxObstacle],
) -> Option<Vec<BoxObstacle>> {
    let (ox, oy, oz) = (OBJECT[0] / 2.0, OBJECT[1] / 2.0, OBJECT[2] / 2.0);
    let mut out: Vec<BoxObstacle> = Vec::new();
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..100 {
            let x = rng.random_range(ox..SHELF_DEPTH - ox);
            let y = rng.random_range(-SHELF_WIDTH / 2.0 + oy..SHELF_WIDTH / 2.0 - oy);
            let c = local_box([x, y, level + oz], OBJECT);
            if out
                .iter()
                .chain(taken)
                .all(|o| footprint_gap(o, &c) >= CLEARANCE)
            {
                out.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(out)
}

/// Gap between two axis-aligned footprints in the fixture frame; boxes on
/// different levels never conflict.
fn footprint_gap(a: &BoxObstacle, b: &BoxObstacle) -> f64 {
    if (a.pose.translation.z - b.pose.translation.z).abs() > 1e-9 {
        return f64::INFINITY;
    }
    let d = a.pose.translation - b.pose.translation;
    let gx = d.x.abs() - (a.size.x + b.size.x) / 2.0;
    let gy = d.y.abs() - (a.size.y + b.size.y) / 2.0;
    gx.max(gy)
}

/// Tool pose grasping a shelf object from the front (fixture frame).
fn shelf_grasp(obj: &BoxObstacle) -> Pose {
    Pose::from_translation(obj.pose.translation)
}

/// Tool pose grasping from above, tool z along the fixture x-axis.
fn top_grasp(obj: &BoxObstacle) -> Pose {
    let down = nalgebra::Rotation3::from_basis_unchecked(&[
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
    ]);
    Pose::new(
        obj.pose.translation,
        nalgebra::UnitQuaternion::from_rotation_matrix(&down),
    )
}

fn solve_goal<R: Rng + ?Sized>(
    chain: &KinematicChain,
    world: &CollisionWorld,
    target: &Pose,
    rng: &mut R,
) -> Option<Configuration> {
    let stow = Configuration::new(STOW.to_vec());
    let bounds = chain.bounds();
    let cfg = IkConfig {
        max_restarts: 10,
        ..IkConfig::default()
    };
    solve_ik_where(
        chain,
        target,
        &stow,
        IkTolerance::default(),
        &cfg,
        rng,
        |q| bounds.contains(q) && !chain.in_collision_world(q, world),
    )
    .ok()
}

/// Draws a scene of `family` with the family's default task kind.
pub fn generate_scene(
    chain: &KinematicChain,
    family: Family,
    variation: Variation,
    seed: u64,
) -> Result<Scene> {
    generate_scene_with_task(chain, family, variation, seed, family.default_task())
}

/// The fixture placement is drawn once per seed; object layouts and IK are
/// retried until a valid task is found or [`MAX_ATTEMPTS`] is reached.
pub fn generate_scene_with_task(
    chain: &KinematicChain,
    family: Family,
    variation: Variation,
    seed: u64,
    kind: TaskKind,
) -> Result<Scene> {
    if chain.dof() != STOW.len() {
        return Err(Error::DimensionMismatch {
            expected: STOW.len(),
            got: chain.dof(),
        });
    }
    if family == Family::BoxTable && kind == TaskKind::Place {
        return Err(Error::InvalidInput("box_table only has a pick task".into()));
    }
    let chain = chain.detach();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = Drawn::sample(family, variation, &mut rng);
    let frame = drawn.fixture_pose(family);
    for _ in 0..MAX_ATTEMPTS {
        if let Some((obstacles, task)) = attempt(&chain, family, kind, &frame, &mut rng) {
            return Ok(Scene {
                schema_version: SCHEMA_VERSION,
                family,
                seed,
                variation,
                drawn,
                obstacles,
                task,
            });
        }
    }
    Err(Error::Generation(format!(
        "no valid {kind} task for {family} seed {seed} after {MAX_ATTEMPTS} attempts"
    )))
}

/// Fixture panels and objects in the fixture frame, before any task is chosen.
struct Layout {
    fixture: Vec<BoxObstacle>,
    objects: Vec<BoxObstacle>,
    /// Interior bottom heights of the shelf levels.
    levels: Vec<f64>,
}

fn layout<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Option<Layout> {
    match family {
        Family::SmallShelf | Family::LargeShelf => {
            let levels: Vec<f64> = match family {
                Family::SmallShelf => vec![0.0],
                _ => (0..3).map(|i| i as f64 * (SHELF_OPENING + PANEL)).collect(),
            };
            let fixture = shelf_panels(&levels);
            let mut objects: Vec<BoxObstacle> = Vec::new();
            if family == Family::SmallShelf {
                objects = place_objects(rng, 0.0, 3, &[])?;
            } else {
                let total = rng.random_range(7..=9);
                let mut counts = [1usize; 3];
                for _ in 3..total {
                    counts[rng.random_range(0..3)] += 1;
                }
                for (level, n) in levels.iter().zip(counts) {
                    objects.extend(place_objects(rng, *level, n, &objects)?);
                }
            }
            Some(Layout {
                fixture,
                objects,
                levels,
            })
        }
        Family::BoxTable => {
            let (bx, by, bz) = (BIN[0], BIN[1], BIN[2]);
            let t = PANEL;
            let mut fixture = vec![
                local_box([0.0, 0.0, -0.02], [0.8, 1.2, 0.04]),
                local_box([0.0, 0.0, t / 2.0], [bx - 2.0 * t, by - 2.0 * t, t]),
            ];
            for s in [-1.0, 1.0] {
                fixture.push(local_box([s * (bx - t) / 2.0, 0.0, bz / 2.0], [t, by, bz]));
                fixture.push(local_box(
                    [0.0, s * (by - t) / 2.0, bz / 2.0],
                    [bx - 2.0 * t, t, bz],
                ));
            }
            let reach = 0.04;
            let cube = local_box(
                [
                    rng.random_range(-reach..=reach),
                    rng.random_range(-reach..=reach),
                    t + CUBE / 2.0,
                ],
                [CUBE; 3],
            );
            Some(Layout {
                fixture,
                objects: vec![cube],
                levels: Vec::new(),
            })
        }
    }
}

/// Obstacles of a randomly placed fixture with its objects, without a
/// planning task (no IK). Much cheaper than [`generate_scene`].
pub fn sample_obstacles(
    family: Family,
    variation: Variation,
    seed: u64,
) -> Result<Vec<BoxObstacle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = Drawn::sample(family, variation, &mut rng).fixture_pose(family);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(l) = layout(family, &mut rng) {
            return Ok(l
                .fixture
                .iter()
                .chain(&l.objects)
                .map(|b| b.transformed(&frame))
                .collect());
        }
    }
    Err(Error::Generation(format!(
        "no object layout for {family} seed {seed} after {MAX_ATTEMPTS} attempts"
    )))
}

fn attempt<R: Rng + ?Sized>(
    chain: &KinematicChain,
    family: Family,
    kind: TaskKind,
    frame: &Pose,
    rng: &mut R,
) -> Option<(Vec<BoxObstacle>, Task)> {
    let stow = Configuration::new(STOW.to_vec());
    let to_world = |b: &BoxObstacle| b.transformed(frame);
    let dist = |b: &BoxObstacle| to_world(b).pose.translation.norm();
    let farthest = |objs: &[BoxObstacle]| -> usize {
        (0..objs.len())
            .max_by(|&a, &b| dist(&objs[a]).total_cmp(&dist(&objs[b])))
            .expect("at least one object")
    };

    let Layout {
        fixture,
        mut objects,
        levels,
    } = layout(family, rng)?;
    match family {
        Family::SmallShelf | Family::LargeShelf => {
            let panels = fixture;
            match kind {
                TaskKind::Pick => {
                    let target = farthest(&objects);
                    let obstacles: Vec<BoxObstacle> =
                        panels.iter().chain(&objects).map(to_world).collect();
                    let world = CollisionWorld::new(&obstacles);
                    if chain.in_collision_world(&stow, &world) {
                        return None;
                    }
                    let pose = frame.compose(&shelf_grasp(&objects[target]));
                    let goal = solve_goal(chain, &world, &pose, rng)?;
                    Some((
                        obstacles,
                        Task {
                            kind,
                            start: stow,
                            goal,
                            attached: None,
                        },
                    ))
                }
                TaskKind::Place => {
                    // Carried object: farthest one on the top or bottom level.
                    let outer: Vec<usize> = (0..objects.len())
                        .filter(|&i| {
                            let z = objects[i].pose.translation.z - OBJECT[2] / 2.0;
                            (z - levels[0]).abs() < 1e-9
                                || (z - levels[levels.len() - 1]).abs() < 1e-9
                        })
                        .collect();
                    let carried_idx = *outer
                        .iter()
                        .max_by(|&&a, &&b| dist(&objects[a]).total_cmp(&dist(&objects[b])))?;
                    let carried = objects.remove(carried_idx);
                    let middle = levels[levels.len() / 2];
                    let x = SHELF_DEPTH - OBJECT[0] / 2.0 - 0.02;
                    let half_w = SHELF_WIDTH / 2.0 - OBJECT[1] / 2.0;
                    let spot = local_box(
                        [
                            x,
                            rng.random_range(-half_w..half_w),
                            middle + OBJECT[2] / 2.0,
                        ],
                        OBJECT,
                    );
                    if objects.iter().any(|o| footprint_gap(o, &spot) < CLEARANCE) {
                        return None;
                    }
                    let obstacles: Vec<BoxObstacle> =
                        panels.iter().chain(&objects).map(to_world).collect();
                    let world = CollisionWorld::new(&obstacles);
                    let attached = local_box([0.0; 3], OBJECT);
                    let carrying = chain.attach_object(attached);
                    let start = solve_goal(
                        &carrying,
                        &world,
                        &frame.compose(&shelf_grasp(&carried)),
                        rng,
                    )?;
                    let goal =
                        solve_goal(&carrying, &world, &frame.compose(&shelf_grasp(&spot)), rng)?;
                    Some((
                        obstacles,
                        Task {
                            kind,
                            start,
                            goal,
                            attached: Some(attached),
                        },
                    ))
                }
            }
        }
        Family::BoxTable => {
            let cube = objects[0];
            let obstacles: Vec<BoxObstacle> = fixture.iter().chain([&cube]).map(to_world).collect();
            let world = CollisionWorld::new(&obstacles);
            if chain.in_collision_world(&stow, &world) {
                return None;
            }
            let goal = solve_goal(chain, &world, &frame.compose(&top_grasp(&cube)), rng)?;
            Some((
                obstacles,
                Task {
                    kind,
                    start: stow,
                    goal,
                    attached: None,
                },
            ))
        }
    }
}
