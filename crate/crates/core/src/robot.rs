//! Serial-chain manipulator model: forward kinematics, collision checking
//! against box scenes, discretized edge validation and damped least-squares IK.

use std::ops::Deref;
use std::path::Path as FsPath;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    gjk_intersects, support_distance, vec3_array, Aabb, BoxObstacle, OrientedBox, Pose, Vec3,
};

/// Default maximum per-joint interpolation step for edge checks (rad or m).
pub const DEFAULT_EDGE_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One joint plus the collision geometry of the link it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Parent link frame to joint frame, applied before the joint motion.
    #[serde(default)]
    pub offset: Pose,
    #[serde(with = "vec3_array")]
    pub axis: Vec3,
    pub limits: [f64; 2],
    /// Boxes in the child link frame.
    #[serde(default)]
    pub geometry: Vec<BoxObstacle>,
}

impl Joint {
    fn motion(&self, value: f64) -> Pose {
        match self.kind {
            JointKind::Revolute => Pose::from_axis_angle(Vec3::zeros(), self.axis, value),
            JointKind::Prismatic => Pose::from_translation(self.axis * value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndEffector {
    /// Index into the link list returned by forward kinematics (0 is the base).
    pub link: usize,
    #[serde(default)]
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Base {
    #[serde(default)]
    pub pose: Pose,
    #[serde(default)]
    pub geometry: Vec<BoxObstacle>,
}

/// A joint-value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dof: usize) -> Self {
        Self(vec![0.0; dof])
    }

    pub fn dof(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest per-joint difference.
    pub fn max_abs_diff(&self, other: &Configuration) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn interpolate(&self, other: &Configuration, t: f64) -> Configuration {
        Configuration(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + (b - a) * t)
                .collect(),
        )
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Configuration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// An ordered list of configurations, never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Configuration>", into = "Vec<Configuration>")]
pub struct Path {
    waypoints: Vec<Configuration>,
}

impl Path {
    pub fn new(waypoints: Vec<Configuration>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidInput(
                "a path needs at least one waypoint".into(),
            ));
        }
        Ok(Self { waypoints })
    }

    pub fn single(q: Configuration) -> Self {
        Self { waypoints: vec![q] }
    }

    pub fn waypoints(&self) -> &[Configuration] {
        &self.waypoints
    }

    pub fn into_waypoints(self) -> Vec<Configuration> {
        self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> &Configuration {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &Configuration {
        self.waypoints.last().expect("non-empty path")
    }

    /// Sum of joint-space Euclidean segment lengths.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum()
    }

    /// Waypoints plus evenly spaced interior points so that consecutive
    /// configurations are at most `spacing` apart.
    pub fn densified(&self, spacing: f64) -> Vec<Configuration> {
        let mut out = vec![self.waypoints[0].clone()];
        for w in self.waypoints.windows(2) {
            let d = w[0].distance(&w[1]);
            let n = (d / spacing).ceil().max(1.0) as usize;
            for i in 1..=n {
                out.push(w[0].interpolate(&w[1], i as f64 / n as f64));
            }
        }
        out
    }
}

impl TryFrom<Vec<Configuration>> for Path {
    type Error = Error;
    fn try_from(v: Vec<Configuration>) -> Result<Self> {
        Path::new(v)
    }
}

impl From<Path> for Vec<Configuration> {
    fn from(p: Path) -> Self {
        p.waypoints
    }
}

/// Per-joint lower and upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl JointBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidInput(
                "joint bounds need lower < upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dof(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dof()
            && q.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, (lo, hi)) in q.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        Configuration(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect(),
        )
    }

    pub fn volume_fraction(&self, lower: &[f64], upper: &[f64]) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(lower.iter().zip(upper))
            .map(|((l, u), (a, b))| (b - a) / (u - l))
            .product()
    }
}

/// Scene obstacles with their bounds precomputed for repeated queries.
#[derive(Debug, Clone)]
pub struct CollisionWorld {
    boxes: Vec<BoxObstacle>,
    obbs: Vec<OrientedBox>,
    bounds: Option<Aabb>,
}

impl CollisionWorld {
    pub fn new(scene: &[BoxObstacle]) -> Self {
        let obbs: Vec<OrientedBox> = scene.iter().map(OrientedBox::new).collect();
        let bounds = obbs
            .iter()
            .map(|o| o.aabb)
            .reduce(|a, b| Aabb::new(a.min.inf(&b.min), a.max.sup(&b.max)));
        Self {
            boxes: scene.to_vec(),
            obbs,
            bounds,
        }
    }

    pub fn empty() -> Self {
        Self::new(&[])
    }

    pub fn boxes(&self) -> &[BoxObstacle] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// AABB broadphase, then GJK on the surviving pairs.
    pub fn collides(&self, shape: &OrientedBox) -> bool {
        match self.bounds {
            Some(b) if b.intersects(&shape.aabb) => self
                .obbs
                .iter()
                .any(|o| o.aabb.intersects(&shape.aabb) && gjk_intersects(o, shape)),
            _ => false,
        }
    }
}

/// A serial manipulator with box collision geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub name: String,
    #[serde(default)]
    pub base: Base,
    pub joints: Vec<Joint>,
    pub end_effector: EndEffector,
    /// Object rigidly held by the end effector, in the end-effector frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<BoxObstacle>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        base: Base,
        joints: Vec<Joint>,
        end_effector: EndEffector,
    ) -> Result<Self> {
        let chain = Self {
            name: name.into(),
            base,
            joints,
            end_effector,
            attached: None,
        };
        chain.validate()?;
        Ok(chain)
    }

    fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidInput("chain has no joints".into()));
        }
        for j in &self.joints {
            if !(j.limits[0] < j.limits[1]) {
                return Err(Error::InvalidInput(format!(
                    "joint {} limits must satisfy lo < hi, got {:?}",
                    j.name, j.limits
                )));
            }
            if j.axis.norm() < 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "joint {} has a zero axis",
                    j.name
                )));
            }
            for g in &j.geometry {
                g.validate()?;
            }
        }
        for g in &self.base.geometry {
            g.validate()?;
        }
        if let Some(obj) = &self.attached {
            obj.validate()?;
        }
        if self.end_effector.link > self.joints.len() {
            return Err(Error::InvalidInput(format!(
                "end-effector link {} out of range (chain has {} links)",
                self.end_effector.link,
                self.joints.len() + 1
            )));
        }
        Ok(())
    }

    /// Reads a robot definition file (TOML).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut chain: KinematicChain =
            toml::from_str(text).map_err(|e| Error::malformed("robot definition", e))?;
        for j in &mut chain.joints {
            j.axis = j.axis.normalize();
        }
        chain.validate()?;
        Ok(chain)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("chain serializes to TOML")
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Base link plus one link per joint.
    pub fn link_count(&self) -> usize {
        self.joints.len() + 1
    }

    pub fn bounds(&self) -> JointBounds {
        JointBounds {
            lower: self.joints.iter().map(|j| j.limits[0]).collect(),
            upper: self.joints.iter().map(|j| j.limits[1]).collect(),
        }
    }

    fn check_dof(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// World poses of every link, base first.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Pose>> {
        self.check_dof(q)?;
        Ok(self.link_poses(q))
    }

    fn link_poses(&self, q: &[f64]) -> Vec<Pose> {
        self.link_poses_from(self.base.pose, q)
    }

    fn link_poses_from(&self, root: Pose, q: &[f64]) -> Vec<Pose> {
        let mut poses = Vec::with_capacity(self.link_count());
        let mut current = root;
        poses.push(current);
        for (joint, value) in self.joints.iter().zip(q) {
            current = current
                .compose(&joint.offset)
                .compose(&joint.motion(*value));
            poses.push(current);
        }
        poses
    }

    pub fn end_effector_pose(&self, q: &[f64]) -> Result<Pose> {
        self.check_dof(q)?;
        Ok(self.end_effector_from_links(&self.link_poses(q)))
    }

    fn end_effector_from_links(&self, links: &[Pose]) -> Pose {
        links[self.end_effector.link].compose(&self.end_effector.offset)
    }

    /// Returns a copy of the chain carrying `obj` (expressed in the end-effector frame).
    pub fn attach_object(&self, obj: BoxObstacle) -> KinematicChain {
        KinematicChain {
            attached: Some(obj),
            ..self.clone()
        }
    }

    pub fn detach(&self) -> KinematicChain {
        KinematicChain {
            attached: None,
            ..self.clone()
        }
    }

    /// All collision boxes (links and attached object) placed in the world.
    pub fn collision_boxes(&self, q: &[f64]) -> Result<Vec<BoxObstacle>> {
        self.check_dof(q)?;
        let links = self.link_poses(q);
        let mut out = Vec::new();
        self.for_each_placed_box(&links, |b| out.push(b));
        Ok(out)
    }

    /// Placed collision shapes expressed in the robot base frame.
    pub fn placed_shapes_base_frame(&self, q: &[f64]) -> Vec<OrientedBox> {
        let links = self.link_poses_from(Pose::identity(), q);
        let mut out = Vec::with_capacity(16);
        self.for_each_placed_box(&links, |b| out.push(OrientedBox::new(&b)));
        out
    }

    fn for_each_placed_box(&self, links: &[Pose], mut f: impl FnMut(BoxObstacle)) {
        for g in &self.base.geometry {
            f(g.transformed(&links[0]));
        }
        for (joint, pose) in self.joints.iter().zip(&links[1..]) {
            for g in &joint.geometry {
                f(g.transformed(pose));
            }
        }
        if let Some(obj) = &self.attached {
            f(obj.transformed(&self.end_effector_from_links(links)));
        }
    }

    pub fn in_collision_world(&self, q: &[f64], world: &CollisionWorld) -> bool {
        if world.is_empty() {
            return false;
        }
        let links = self.link_poses(q);
        let mut hit = false;
        self.for_each_placed_box(&links, |b| {
            if !hit && world.collides(&OrientedBox::new(&b)) {
                hit = true;
            }
        });
        hit
    }

    /// Every configuration on the straight segment, sampled so no joint moves
    /// more than `step` between checks, is collision-free (endpoints included).
    pub fn validate_edge_world(
        &self,
        a: &[f64],
        b: &[f64],
        world: &CollisionWorld,
        step: f64,
    ) -> bool {
        // Interpolate from a canonical endpoint so the check is symmetric bit-for-bit.
        let (from, to) = if lexicographic_le(a, b) {
            (a, b)
        } else {
            (b, a)
        };
        let steps = edge_steps(from, to, step);
        let mut q = vec![0.0; from.len()];
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            for (k, v) in q.iter_mut().enumerate() {
                *v = from[k] + (to[k] - from[k]) * t;
            }
            if self.in_collision_world(&q, world) {
                return false;
            }
        }
        true
    }
}

fn lexicographic_le(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

pub(crate) fn edge_steps(a: &[f64], b: &[f64], step: f64) -> usize {
    let max_diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ((max_diff / step).ceil() as usize).max(1)
}

pub fn forward_kinematics(chain: &KinematicChain, q: &Configuration) -> Result<Vec<Pose>> {
    chain.forward_kinematics(q)
}

/// True iff any link box or the attached object touches a scene box.
pub fn in_collision(chain: &KinematicChain, q: &Configuration, scene: &[BoxObstacle]) -> bool {
    chain.in_collision_world(q, &CollisionWorld::new(scene))
}

pub fn validate_edge(
    chain: &KinematicChain,
    a: &Configuration,
    b: &Configuration,
    scene: &[BoxObstacle],
    step: f64,
) -> bool {
    chain.validate_edge_world(a, b, &CollisionWorld::new(scene), step)
}

pub fn attach_object(chain: &KinematicChain, obj: BoxObstacle) -> KinematicChain {
    chain.attach_object(obj)
}

/// Convergence tolerances for IK. `orientation = None` solves for position only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkTolerance {
    pub position: f64,
    pub orientation: Option<f64>,
}

impl Default for IkTolerance {
    fn default() -> Self {
        Self {
            position: 1e-3,
            orientation: Some(1e-2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub max_restarts: usize,
    /// Largest joint-space step per iteration.
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.1,
            max_iterations: 200,
            max_restarts: 20,
            max_step: 0.3,
        }
    }
}

/// Damped least-squares IK with a finite-difference Jacobian and random restarts.
///
/// The seed is tried first; each restart draws a uniform configuration from the
/// joint limits.
pub fn solve_ik<R: Rng + ?Sized>(
    chain: &KinematicChain,
    target: &Pose,
    seed: &Configuration,
    tol: IkTolerance,
    cfg: &IkConfig,
    rng: &mut R,
) -> Result<Configuration> {
    solve_ik_where(chain, target, seed, tol, cfg, rng, |_| true)
}

/// [`solve_ik`], additionally requiring `accept` to hold for the solution.
pub fn solve_ik_where<R: Rng + ?Sized>(
    chain: &KinematicChain,
    target: &Pose,
    seed: &Configuration,
    tol: IkTolerance,
    cfg: &IkConfig,
    rng: &mut R,
    mut accept: impl FnMut(&Configuration) -> bool,
) -> Result<Configuration> {
    chain.check_dof(seed)?;
    let bounds = chain.bounds();
    let mut start = seed.clone();
    bounds.clamp(&mut start.0);
    for attempt in 0..=cfg.max_restarts {
        if attempt > 0 {
            start = bounds.sample_uniform(rng);
        }
        if let Some(q) = dls_descent(chain, &bounds, target, start.clone(), tol, cfg) {
            if accept(&q) {
                return Ok(q);
            }
        }
    }
    Err(Error::IkFailed(format!(
        "no solution within tolerance after {} restarts",
        cfg.max_restarts
    )))
}

fn dls_descent(
    chain: &KinematicChain,
    bounds: &JointBounds,
    target: &Pose,
    mut q: Configuration,
    tol: IkTolerance,
    cfg: &IkConfig,
) -> Option<Configuration> {
    let n = chain.dof();
    let with_rot = tol.orientation.is_some();
    let m = if with_rot { 6 } else { 3 };
    let residual = |q: &[f64]| -> DVector<f64> {
        let ee = chain.end_effector_from_links(&chain.link_poses(q));
        let mut r = DVector::zeros(m);
        let dp = ee.translation - target.translation;
        r.fixed_rows_mut::<3>(0).copy_from(&dp);
        if with_rot {
            let err = (ee.rotation * target.rotation.inverse()).scaled_axis();
            r.fixed_rows_mut::<3>(3).copy_from(&err);
        }
        r
    };
    let converged = |r: &DVector<f64>| {
        let pos_ok = r.fixed_rows::<3>(0).norm() < tol.position;
        let rot_ok = match tol.orientation {
            Some(t) => r.fixed_rows::<3>(3).norm() < t,
            None => true,
        };
        pos_ok && rot_ok
    };

    let h = 1e-6;
    let lambda2 = cfg.damping * cfg.damping;
    let mut r = residual(&q);
    for _ in 0..cfg.max_iterations {
        if converged(&r) {
            return Some(q);
        }
        let mut jac = DMatrix::zeros(m, n);
        let mut probe = q.0.clone();
        for k in 0..n {
            let orig = probe[k];
            probe[k] = orig + h;
            let rk = residual(&probe);
            probe[k] = orig;
            jac.set_column(k, &((rk - &r) / h));
        }
        let jjt = &jac * jac.transpose() + DMatrix::identity(m, m) * lambda2;
        let Some(inv) = jjt.try_inverse() else {
            return None;
        };
        let mut dq = -(jac.transpose() * inv * &r);
        let norm = dq.norm();
        if norm > cfg.max_step {
            dq *= cfg.max_step / norm;
        }
        for k in 0..n {
            q.0[k] += dq[k];
        }
        bounds.clamp(&mut q.0);
        r = residual(&q);
    }
    converged(&r).then_some(q)
}

fn boxed(center: [f64; 3], size: [f64; 3]) -> BoxObstacle {
    BoxObstacle {
        pose: Pose::from_translation(Vec3::from(center)),
        size: Vec3::from(size),
    }
}

fn revolute(name: &str, offset: [f64; 3], axis: [f64; 3], limits: [f64; 2]) -> Joint {
    Joint {
        name: name.into(),
        kind: JointKind::Revolute,
        offset: Pose::from_translation(Vec3::from(offset)),
        axis: Vec3::from(axis),
        limits,
        geometry: Vec::new(),
    }
}

impl Joint {
    fn with_geometry(mut self, geometry: Vec<BoxObstacle>) -> Self {
        self.geometry = geometry;
        self
    }
}

/// A 3-joint arm whose joints all rotate about world z (planar motion in 3D).
///
/// Link lengths 0.4, 0.4, 0.3; the end effector sits at the tip of link 3.
pub fn arm3() -> KinematicChain {
    use std::f64::consts::PI;
    let z = [0.0, 0.0, 1.0];
    let joints = vec![
        revolute("joint1", [0.0, 0.0, 0.1], z, [-PI, PI])
            .with_geometry(vec![boxed([0.2, 0.0, 0.0], [0.4, 0.06, 0.06])]),
        revolute("joint2", [0.4, 0.0, 0.0], z, [-PI, PI])
            .with_geometry(vec![boxed([0.2, 0.0, 0.0], [0.4, 0.05, 0.05])]),
        revolute("joint3", [0.4, 0.0, 0.0], z, [-PI, PI])
            .with_geometry(vec![boxed([0.15, 0.0, 0.0], [0.3, 0.04, 0.04])]),
    ];
    KinematicChain::new(
        "arm3",
        Base {
            pose: Pose::identity(),
            geometry: vec![boxed([0.0, 0.0, 0.05], [0.12, 0.12, 0.1])],
        },
        joints,
        EndEffector {
            link: 3,
            offset: Pose::from_translation(Vec3::new(0.3, 0.0, 0.0)),
        },
    )
    .expect("arm3 is well formed")
}

/// An 8-DOF mobile-manipulator-like arm: prismatic torso lift followed by a
/// 7-joint arm (pan, lift, roll, flex, roll, flex, roll).
///
/// The end-effector (tool) frame lies 0.07 m ahead of the palm box, between
/// two finger boxes whose inner faces are 0.08 m apart and whose tips reach
/// 0.02 m past the tool point. The tool x-axis is the approach direction.
pub fn arm8() -> KinematicChain {
    use std::f64::consts::PI;
    let (x, y, z) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    let joints = vec![
        Joint {
            name: "torso_lift".into(),
            kind: JointKind::Prismatic,
            offset: Pose::identity(),
            axis: Vec3::from(z),
            limits: [0.0, 0.38],
            geometry: vec![boxed([-0.1, 0.0, 0.6], [0.22, 0.3, 0.4])],
        },
        revolute("shoulder_pan", [0.1, 0.0, 0.75], z, [-1.6, 1.6])
            .with_geometry(vec![boxed([0.06, 0.0, 0.0], [0.16, 0.14, 0.14])]),
        revolute("shoulder_lift", [0.12, 0.0, 0.0], y, [-1.22, 1.52])
            .with_geometry(vec![boxed([0.11, 0.0, 0.0], [0.22, 0.13, 0.13])]),
        revolute("upperarm_roll", [0.22, 0.0, 0.0], x, [-PI, PI])
            .with_geometry(vec![boxed([0.065, 0.0, 0.0], [0.13, 0.12, 0.12])]),
        revolute("elbow_flex", [0.13, 0.0, 0.0], y, [-2.25, 2.25])
            .with_geometry(vec![boxed([0.1, 0.0, 0.0], [0.2, 0.11, 0.11])]),
        revolute("forearm_roll", [0.2, 0.0, 0.0], x, [-PI, PI])
            .with_geometry(vec![boxed([0.06, 0.0, 0.0], [0.12, 0.1, 0.1])]),
        revolute("wrist_flex", [0.12, 0.0, 0.0], y, [-2.18, 2.18])
            .with_geometry(vec![boxed([0.07, 0.0, 0.0], [0.14, 0.09, 0.09])]),
        revolute("wrist_roll", [0.14, 0.0, 0.0], x, [-PI, PI]).with_geometry(vec![
            boxed([0.05, 0.0, 0.0], [0.1, 0.13, 0.07]),
            boxed([0.145, 0.05, 0.0], [0.09, 0.02, 0.04]),
            boxed([0.145, -0.05, 0.0], [0.09, 0.02, 0.04]),
        ]),
    ];
    KinematicChain::new(
        "arm8",
        Base {
            pose: Pose::identity(),
            geometry: vec![boxed([0.0, 0.0, 0.2], [0.5, 0.5, 0.4])],
        },
        joints,
        EndEffector {
            link: 8,
            offset: Pose::from_translation(Vec3::new(0.17, 0.0, 0.0)),
        },
    )
    .expect("arm8 is well formed")
}

/// Built-in chain by name (`arm3` or `arm8`).
pub fn builtin_chain(name: &str) -> Result<KinematicChain> {
    match name {
        "arm3" => Ok(arm3()),
        "arm8" => Ok(arm8()),
        other => Err(Error::InvalidInput(format!(
            "unknown built-in chain {other:?}"
        ))),
    }
}

/// Robot shapes at one configuration, prepared for many criticality checks.
pub struct PlacedRobot {
    shapes: Vec<OrientedBox>,
}

impl PlacedRobot {
    /// Shapes are placed in the robot base frame, matching primitive frames.
    pub fn new(chain: &KinematicChain, q: &[f64]) -> Self {
        Self {
            shapes: chain.placed_shapes_base_frame(q),
        }
    }

    pub fn shapes(&self) -> &[OrientedBox] {
        &self.shapes
    }

    /// Smallest GJK distance from any robot shape to `target`, skipping pairs
    /// whose bounding boxes are already more than `cutoff` apart.
    pub fn min_distance_below(&self, target: &OrientedBox, cutoff: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for s in &self.shapes {
            if aabb_gap(&s.aabb, &target.aabb) >= cutoff {
                continue;
            }
            let d = support_distance(s, target);
            if d < cutoff && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
        best
    }
}

fn aabb_gap(a: &Aabb, b: &Aabb) -> f64 {
    let mut sq = 0.0;
    for i in 0..3 {
        let gap = (a.min[i] - b.max[i]).max(b.min[i] - a.max[i]).max(0.0);
        sq += gap * gap;
    }
    sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Two unit links rotating about z; the end effector is the tip of link 2.
    pub(crate) fn two_link() -> KinematicChain {
        let z = [0.0, 0.0, 1.0];
        KinematicChain::new(
            "two_link",
            Base::default(),
            vec![
                revolute("j1", [0.0, 0.0, 0.0], z, [-3.2, 3.2])
                    .with_geometry(vec![boxed([0.5, 0.0, 0.0], [1.0, 0.1, 0.1])]),
                revolute("j2", [1.0, 0.0, 0.0], z, [-3.2, 3.2])
                    .with_geometry(vec![boxed([0.5, 0.0, 0.0], [1.0, 0.1, 0.1])]),
            ],
            EndEffector {
                link: 2,
                offset: Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
            },
        )
        .unwrap()
    }

    #[test]
    fn two_link_fk() {
        let chain = two_link();
        let tip = chain.end_effector_pose(&[0.0, 0.0]).unwrap();
        assert!((tip.translation - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        let tip = chain.end_effector_pose(&[FRAC_PI_2, 0.0]).unwrap();
        assert!((tip.translation - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert_eq!(chain.forward_kinematics(&[0.0, 0.0]).unwrap().len(), 3);
    }

    #[test]
    fn fk_is_deterministic_and_checks_dof() {
        let chain = arm8();
        let q = [0.1, 0.2, -0.3, 0.4, 1.0, -0.5, 0.6, 0.7];
        assert_eq!(
            chain.forward_kinematics(&q).unwrap(),
            chain.forward_kinematics(&q).unwrap()
        );
        assert!(matches!(
            chain.forward_kinematics(&q[..7]),
            Err(Error::DimensionMismatch {
                expected: 8,
                got: 7
            })
        ));
    }

    #[test]
    fn collision_basics() {
        let chain = two_link();
        let q = Configuration::zeros(2);
        assert!(!in_collision(&chain, &q, &[]));
        let far = boxed([10.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert!(!in_collision(&chain, &q, &[far]));
        let arm = arm8();
        let base_box = arm.base.geometry[0];
        assert!(in_collision(&arm, &Configuration::zeros(8), &[base_box]));
    }

    #[test]
    fn edge_through_obstacle_rejected() {
        let chain = two_link();
        let a = Configuration::new(vec![-1.0, 0.0]);
        let b = Configuration::new(vec![1.0, 0.0]);
        let mid = a.interpolate(&b, 0.5);
        let tip = chain.end_effector_pose(&mid).unwrap().translation;
        let obstacle = BoxObstacle::axis_aligned(tip, Vec3::repeat(0.2)).unwrap();
        assert!(!in_collision(&chain, &a, &[obstacle]));
        assert!(!in_collision(&chain, &b, &[obstacle]));
        assert!(!validate_edge(
            &chain,
            &a,
            &b,
            &[obstacle],
            DEFAULT_EDGE_STEP
        ));
        assert!(validate_edge(
            &chain,
            &a,
            &a,
            &[obstacle],
            DEFAULT_EDGE_STEP
        ));
        assert!(validate_edge(&chain, &a, &b, &[], DEFAULT_EDGE_STEP));
    }

    #[test]
    fn attachment_changes_geometry_only() {
        let chain = arm8();
        let q = Configuration::new(vec![0.1, 0.3, 0.2, 0.0, 0.5, 0.0, 0.4, 0.0]);
        let big = BoxObstacle::axis_aligned(Vec3::zeros(), Vec3::repeat(10.0)).unwrap();
        let held = chain.attach_object(big);
        assert_eq!(
            chain.forward_kinematics(&q).unwrap(),
            held.forward_kinematics(&q).unwrap()
        );
        assert!(!in_collision(&held, &q, &[]));
        let ee = held.end_effector_pose(&q).unwrap().translation;
        let nearby =
            BoxObstacle::axis_aligned(ee + Vec3::new(3.0, 3.0, 2.0), Vec3::repeat(0.1)).unwrap();
        assert!(!in_collision(&chain, &q, &[nearby]));
        assert!(in_collision(&held, &q, &[nearby]));
    }

    #[test]
    fn ik_fixed_point_returns_seed() {
        let chain = arm8();
        let seed = Configuration::new(vec![0.2, 0.3, 0.4, -0.2, 0.9, 0.1, 0.5, 0.3]);
        let target = chain.end_effector_pose(&seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = solve_ik(
            &chain,
            &target,
            &seed,
            IkTolerance::default(),
            &IkConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(q, seed);
    }

    #[test]
    fn ik_unreachable_fails() {
        let chain = two_link();
        let target = Pose::from_translation(Vec3::new(100.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tol = IkTolerance {
            position: 1e-3,
            orientation: None,
        };
        let cfg = IkConfig {
            max_restarts: 3,
            ..IkConfig::default()
        };
        assert!(solve_ik(
            &chain,
            &target,
            &Configuration::zeros(2),
            tol,
            &cfg,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn ik_two_link_matches_analytic_families() {
        let chain = two_link();
        let target = Pose::from_translation(Vec3::new(1.0, 1.0, 0.0));
        let tol = IkTolerance {
            position: 1e-6,
            orientation: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seed = Configuration::new(vec![0.3, 0.5]);
        let q = solve_ik(&chain, &target, &seed, tol, &IkConfig::default(), &mut rng).unwrap();
        let tip = chain.end_effector_pose(&q).unwrap().translation;
        assert!((tip - target.translation).norm() < 1e-6);
        let near = |a: f64, b: f64| (a - b).abs() < 1e-4;
        let elbow_down = near(q[0], FRAC_PI_2) && near(q[1], -FRAC_PI_2);
        let elbow_up = near(q[0], 0.0) && near(q[1], FRAC_PI_2);
        assert!(elbow_down || elbow_up, "unexpected solution {q:?}");
    }

    #[test]
    fn robot_file_round_trip() {
        let chain = arm8();
        let text = chain.to_toml_string();
        let back = KinematicChain::from_toml_str(&text).unwrap();
        assert_eq!(back.dof(), 8);
        let q = [0.1, 0.2, -0.3, 0.4, 1.0, -0.5, 0.6, 0.7];
        let a = chain.end_effector_pose(&q).unwrap();
        let b = back.end_effector_pose(&q).unwrap();
        assert!((a.translation - b.translation).norm() < 1e-12);
    }

    #[test]
    fn robot_file_rejects_bad_limits() {
        let mut chain = arm3();
        chain.joints[0].limits = [1.0, -1.0];
        let text = chain.to_toml_string();
        assert!(KinematicChain::from_toml_str(&text).is_err());
        assert!(KinematicChain::from_toml_str("name = 3").is_err());
    }

    #[test]
    fn densified_spacing() {
        let p = Path::new(vec![
            Configuration::new(vec![0.0, 0.0]),
            Configuration::new(vec![1.0, 0.0]),
        ])
        .unwrap();
        let d = p.densified(0.25);
        assert_eq!(d.len(), 5);
        assert!(d.windows(2).all(|w| w[0].distance(&w[1]) <= 0.25 + 1e-12));
    }
}
