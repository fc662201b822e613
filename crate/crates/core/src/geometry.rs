//! Rigid transforms, posed boxes, convex hull shapes and GJK distance queries.
//!
//! Quaternions are stored normalized and serialized in `(w, x, y, z)` order.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Hard iteration cap for the GJK loop.
pub const GJK_MAX_ITERATIONS: usize = 128;
/// Relative tolerance on simplex progress.
pub const GJK_TOLERANCE: f64 = 1e-9;
/// Distances below this are reported as exact contact.
pub const CONTACT_EPSILON: f64 = 1e-9;

/// A rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it
    /// unless it is already unit length to within rounding.
    ///
    /// Fails on a (near) zero quaternion.
    pub fn from_wxyz(translation: Vec3, wxyz: [f64; 4]) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "quaternion {wxyz:?} cannot be normalized"
            )));
        }
        let rotation = if (norm - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self::new(translation, rotation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(translation, UnitQuaternion::identity())
    }

    /// Rotation about a unit axis followed by a translation.
    pub fn from_axis_angle(translation: Vec3, axis: Vec3, angle: f64) -> Self {
        let rotation = match nalgebra::Unit::try_new(axis, 1e-12) {
            Some(unit) => UnitQuaternion::from_axis_angle(&unit, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(translation, rotation)
    }

    pub fn from_yaw(translation: Vec3, yaw: f64) -> Self {
        Self::from_axis_angle(translation, Vec3::z(), yaw)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize_fast();
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            translation: -(rotation * self.translation),
            rotation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.translation + self.rotation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    translation: [f64; 3],
    rotation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRepr {
            translation: [self.translation.x, self.translation.y, self.translation.z],
            rotation: self.wxyz(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        Pose::from_wxyz(Vec3::from(repr.translation), repr.rotation)
            .map_err(serde::de::Error::custom)
    }
}

/// Weighted SE(3) distance: `w_t·‖Δt‖ + (1 − w_t)·(1 − ⟨q_a, q_b⟩²)`.
///
/// Not a metric in the strict sense: the rotational term is the square of a
/// metric and only satisfies the triangle inequality up to a factor of two.
///
/// The rotational term is evaluated through Lagrange's identity,
/// `1 − ⟨a, b⟩² = Σ_{i<j} (a_i b_j − a_j b_i)²` for unit quaternions, which is
/// exactly zero for equal rotations and avoids cancellation at small angles.
pub fn pose_distance(a: &Pose, b: &Pose, w_t: f64) -> f64 {
    let dt = (a.translation - b.translation).norm();
    let (p, q) = (&a.rotation.coords, &b.rotation.coords);
    let mut wedge = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let c = p[i] * q[j] - p[j] * q[i];
            wedge += c * c;
        }
    }
    let dr = (wedge / (p.norm_squared() * q.norm_squared())).min(1.0);
    w_t * dt + (1.0 - w_t) * dr
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    /// Overlap test where touching faces count as intersecting.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn contains_aabb(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && other.max[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min, self.max);
        std::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }

    pub fn to_box(&self) -> BoxObstacle {
        BoxObstacle {
            pose: Pose::from_translation(self.center()),
            size: self.extents(),
        }
    }
}

/// A posed box with full edge lengths `size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub pose: Pose,
    #[serde(with = "vec3_array")]
    pub size: Vec3,
}

impl BoxObstacle {
    pub fn new(pose: Pose, size: Vec3) -> Result<Self> {
        let b = Self { pose, size };
        b.validate()?;
        Ok(b)
    }

    pub fn axis_aligned(center: Vec3, size: Vec3) -> Result<Self> {
        Self::new(Pose::from_translation(center), size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "box size must be strictly positive, got {:?}",
                self.size.as_slice()
            )))
        }
    }

    pub fn half_extents(&self) -> Vec3 {
        self.size * 0.5
    }

    pub fn local_corners(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        Aabb::new(-h, h).corners()
    }

    pub fn corners(&self) -> [Vec3; 8] {
        self.local_corners().map(|c| self.pose.transform_point(&c))
    }

    pub fn aabb(&self) -> Aabb {
        // |R|·h gives the world half extents without touching every corner.
        let r = self.pose.rotation.to_rotation_matrix();
        let h = self.half_extents();
        let m = r.matrix();
        let world_half = Vec3::new(
            m[(0, 0)].abs() * h.x + m[(0, 1)].abs() * h.y + m[(0, 2)].abs() * h.z,
            m[(1, 0)].abs() * h.x + m[(1, 1)].abs() * h.y + m[(1, 2)].abs() * h.z,
            m[(2, 0)].abs() * h.x + m[(2, 1)].abs() * h.y + m[(2, 2)].abs() * h.z,
        );
        Aabb::new(
            self.pose.translation - world_half,
            self.pose.translation + world_half,
        )
    }

    /// Re-express this box in the frame `frame` (given in the box's current frame).
    pub fn in_frame(&self, frame: &Pose) -> BoxObstacle {
        BoxObstacle {
            pose: frame.inverse().compose(&self.pose),
            size: self.size,
        }
    }

    pub fn transformed(&self, by: &Pose) -> BoxObstacle {
        BoxObstacle {
            pose: by.compose(&self.pose),
            size: self.size,
        }
    }

    pub fn to_shape(&self) -> ConvexShape {
        ConvexShape::from_world_vertices(self.corners().to_vec())
    }
}

/// Broadphase overlap of the boxes' axis-aligned bounds (touching counts).
pub fn aabb_intersects(a: &BoxObstacle, b: &BoxObstacle) -> bool {
    a.aabb().intersects(&b.aabb())
}

/// Convex hull of a vertex set, placed by a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexShape {
    local: Vec<Vec3>,
    pose: Pose,
    world: Vec<Vec3>,
}

impl ConvexShape {
    pub fn new(local: Vec<Vec3>, pose: Pose) -> Result<Self> {
        if local.is_empty() {
            return Err(Error::InvalidInput(
                "convex shape needs at least one vertex".into(),
            ));
        }
        let world = local.iter().map(|v| pose.transform_point(v)).collect();
        Ok(Self { local, pose, world })
    }

    pub fn point(p: Vec3) -> Self {
        Self::from_world_vertices(vec![p])
    }

    fn from_world_vertices(world: Vec<Vec3>) -> Self {
        debug_assert!(!world.is_empty());
        Self {
            local: world.clone(),
            pose: Pose::identity(),
            world,
        }
    }

    pub fn local_vertices(&self) -> &[Vec3] {
        &self.local
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.world
    }

    pub fn translated(&self, by: &Vec3) -> Self {
        let pose = Pose::new(self.pose.translation + by, self.pose.rotation);
        Self {
            local: self.local.clone(),
            pose,
            world: self.world.iter().map(|v| v + by).collect(),
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.world)
    }

    pub fn centroid(&self) -> Vec3 {
        self.world.iter().sum::<Vec3>() / self.world.len() as f64
    }

    /// Farthest vertex along `dir`.
    pub fn support(&self, dir: &Vec3) -> Vec3 {
        let mut best = self.world[0];
        let mut best_dot = best.dot(dir);
        for v in &self.world[1..] {
            let d = v.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = *v;
            }
        }
        best
    }
}

/// Anything GJK can query: a support point along a direction and an interior reference point.
pub trait SupportMap {
    fn support(&self, dir: &Vec3) -> Vec3;
    fn reference_point(&self) -> Vec3;
}

impl SupportMap for ConvexShape {
    fn support(&self, dir: &Vec3) -> Vec3 {
        ConvexShape::support(self, dir)
    }

    fn reference_point(&self) -> Vec3 {
        self.centroid()
    }
}

/// A box with its rotation matrix and bounds precomputed, for hot collision loops.
#[derive(Debug, Clone, Copy)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: nalgebra::Matrix3<f64>,
    pub half: Vec3,
    pub aabb: Aabb,
}

impl OrientedBox {
    pub fn new(b: &BoxObstacle) -> Self {
        Self {
            center: b.pose.translation,
            axes: *b.pose.rotation.to_rotation_matrix().matrix(),
            half: b.half_extents(),
            aabb: b.aabb(),
        }
    }
}

impl From<&BoxObstacle> for OrientedBox {
    fn from(b: &BoxObstacle) -> Self {
        Self::new(b)
    }
}

impl SupportMap for OrientedBox {
    fn support(&self, dir: &Vec3) -> Vec3 {
        let mut p = self.center;
        for i in 0..3 {
            let axis = self.axes.column(i);
            let s = if axis.dot(dir) >= 0.0 { 1.0 } else { -1.0 };
            p += axis * (s * self.half[i]);
        }
        p
    }

    fn reference_point(&self) -> Vec3 {
        self.center
    }
}

/// Euclidean separation between two convex hulls; exactly 0 on overlap or contact.
pub fn gjk_distance(a: &ConvexShape, b: &ConvexShape) -> f64 {
    gjk(a, b, None)
}

/// [`gjk_distance`] over any pair of support maps.
pub fn support_distance<A: SupportMap, B: SupportMap>(a: &A, b: &B) -> f64 {
    gjk(a, b, None)
}

/// True iff the GJK distance is 0, exiting early once separation is certain.
pub fn gjk_intersects<A: SupportMap, B: SupportMap>(a: &A, b: &B) -> bool {
    gjk(a, b, Some(CONTACT_EPSILON)) == 0.0
}

/// Distance GJK on the Minkowski difference `A − B`.
///
/// With `early_exit = Some(t)` the loop stops as soon as a lower bound above
/// `t` is established and returns that lower bound.
fn gjk<A: SupportMap, B: SupportMap>(a: &A, b: &B, early_exit: Option<f64>) -> f64 {
    let support = |d: &Vec3| a.support(d) - b.support(&-d);

    let mut dir = a.reference_point() - b.reference_point();
    if dir.norm_squared() < 1e-24 {
        dir = Vec3::x();
    }
    let mut simplex = Simplex::default();
    let first = support(&-dir);
    simplex.push(first);
    let mut v = first;
    let mut lower_bound = 0.0_f64;

    for _ in 0..GJK_MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv <= CONTACT_EPSILON * CONTACT_EPSILON {
            return 0.0;
        }
        let w = support(&-v);
        let vw = v.dot(&w);
        let v_norm = vv.sqrt();
        if vw > 0.0 {
            lower_bound = lower_bound.max(vw / v_norm);
            if let Some(t) = early_exit {
                if lower_bound > t {
                    return lower_bound;
                }
            }
        }
        if vv - vw <= GJK_TOLERANCE * vv || simplex.contains(&w) {
            return snap(v_norm);
        }
        simplex.push(w);
        match simplex.reduce() {
            Some(closest) => {
                if closest.norm_squared() >= vv * (1.0 - 1e-15) {
                    // No progress; the previous estimate is as good as it gets.
                    return snap(v_norm);
                }
                v = closest;
            }
            None => return 0.0,
        }
    }
    // Iteration cap: report the conservative (lower) bound.
    snap(lower_bound.min(v.norm()))
}

fn snap(d: f64) -> f64 {
    if d < CONTACT_EPSILON {
        0.0
    } else {
        d
    }
}

#[derive(Debug, Default)]
struct Simplex {
    pts: [Vec3; 4],
    len: usize,
}

impl Simplex {
    fn push(&mut self, p: Vec3) {
        debug_assert!(self.len < 4);
        self.pts[self.len] = p;
        self.len += 1;
    }

    fn contains(&self, p: &Vec3) -> bool {
        self.pts[..self.len]
            .iter()
            .any(|q| (q - p).norm_squared() < 1e-24)
    }

    fn set(&mut self, pts: &[Vec3]) {
        self.pts[..pts.len()].copy_from_slice(pts);
        self.len = pts.len();
    }

    /// Replaces the simplex by the smallest sub-simplex whose hull holds the
    /// point closest to the origin and returns that point. `None` means the
    /// origin is enclosed.
    fn reduce(&mut self) -> Option<Vec3> {
        match self.len {
            1 => Some(self.pts[0]),
            2 => {
                let (p, sub) = closest_on_segment(self.pts[0], self.pts[1]);
                self.set(&sub);
                Some(p)
            }
            3 => {
                let (p, sub) = closest_on_triangle(self.pts[0], self.pts[1], self.pts[2]);
                self.set(&sub);
                Some(p)
            }
            4 => {
                let (p, sub) =
                    closest_on_tetrahedron(self.pts[0], self.pts[1], self.pts[2], self.pts[3])?;
                self.set(&sub);
                Some(p)
            }
            _ => unreachable!("simplex holds 1..=4 points"),
        }
    }
}

/// Fixed-capacity point list for sub-simplices.
#[derive(Debug, Clone, Copy)]
struct SubSimplex {
    pts: [Vec3; 3],
    len: usize,
}

impl SubSimplex {
    fn one(a: Vec3) -> Self {
        Self {
            pts: [a, a, a],
            len: 1,
        }
    }

    fn two(a: Vec3, b: Vec3) -> Self {
        Self {
            pts: [a, b, b],
            len: 2,
        }
    }

    fn three(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self {
            pts: [a, b, c],
            len: 3,
        }
    }
}

impl std::ops::Deref for SubSimplex {
    type Target = [Vec3];
    fn deref(&self) -> &[Vec3] {
        &self.pts[..self.len]
    }
}

fn closest_on_segment(a: Vec3, b: Vec3) -> (Vec3, SubSimplex) {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom < 1e-30 {
        return (a, SubSimplex::one(a));
    }
    let t = -a.dot(&ab) / denom;
    if t <= 0.0 {
        (a, SubSimplex::one(a))
    } else if t >= 1.0 {
        (b, SubSimplex::one(b))
    } else {
        (a + ab * t, SubSimplex::two(a, b))
    }
}

/// Closest point of triangle `abc` to the origin by Voronoi-region tests.
fn closest_on_triangle(a: Vec3, b: Vec3, c: Vec3) -> (Vec3, SubSimplex) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, SubSimplex::one(a));
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, SubSimplex::one(b));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        if denom > 0.0 {
            return (a + ab * (d1 / denom), SubSimplex::two(a, b));
        }
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, SubSimplex::one(c));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        if denom > 0.0 {
            return (a + ac * (d2 / denom), SubSimplex::two(a, c));
        }
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        if denom > 0.0 {
            return (b + (c - b) * ((d4 - d3) / denom), SubSimplex::two(b, c));
        }
    }
    let denom = va + vb + vc;
    if denom.abs() < 1e-30 || !denom.is_finite() {
        // Degenerate (collinear) triangle: best of the three edges.
        return [
            closest_on_segment(a, b),
            closest_on_segment(a, c),
            closest_on_segment(b, c),
        ]
        .into_iter()
        .min_by(|x, y| x.0.norm_squared().total_cmp(&y.0.norm_squared()))
        .expect("three candidates");
    }
    let v = vb / denom;
    let w = vc / denom;
    (a + ab * v + ac * w, SubSimplex::three(a, b, c))
}

/// `None` when the origin lies inside (or on) the tetrahedron.
fn closest_on_tetrahedron(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> Option<(Vec3, SubSimplex)> {
    // Each face with the opposite vertex.
    let faces = [(a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a)];
    let volume = (b - a).cross(&(c - a)).dot(&(d - a));
    let degenerate = volume.abs() < 1e-18;
    let mut best: Option<(Vec3, SubSimplex)> = None;
    let mut any_outside = false;
    for (p, q, r, opposite) in faces {
        let n = (q - p).cross(&(r - p));
        let side_origin = -p.dot(&n);
        let side_opposite = (opposite - p).dot(&n);
        let outside = degenerate || side_origin * side_opposite < 0.0;
        if !outside {
            continue;
        }
        any_outside = true;
        let cand = closest_on_triangle(p, q, r);
        if best
            .as_ref()
            .is_none_or(|b| cand.0.norm_squared() < b.0.norm_squared())
        {
            best = Some(cand);
        }
    }
    if !any_outside {
        return None;
    }
    best
}

pub(crate) mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn unit_cube(x: f64, y: f64, z: f64) -> BoxObstacle {
        BoxObstacle::axis_aligned(Vec3::new(x, y, z), Vec3::repeat(1.0)).unwrap()
    }

    #[test]
    fn pose_distance_examples() {
        let a = Pose::identity();
        assert_eq!(pose_distance(&a, &a, 0.75), 0.0);
        let b = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(pose_distance(&a, &b, 0.75), 0.75, epsilon = 1e-12);
        let c = Pose::from_yaw(Vec3::zeros(), FRAC_PI_2);
        assert_abs_diff_eq!(pose_distance(&a, &c, 0.75), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn pose_distance_ignores_quaternion_sign() {
        let a = Pose::from_axis_angle(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 0.5), 0.7);
        let b = Pose::from_axis_angle(Vec3::new(-0.4, 0.0, 1.0), Vec3::new(0.0, 1.0, 1.0), -1.2);
        let q = b.wxyz();
        let flipped = Pose::from_wxyz(b.translation, [-q[0], -q[1], -q[2], -q[3]]).unwrap();
        assert_abs_diff_eq!(
            pose_distance(&a, &b, 0.6),
            pose_distance(&a, &flipped, 0.6),
            epsilon = 1e-12
        );
    }

    #[test]
    fn compose_inverse_is_identity() {
        let p = Pose::from_axis_angle(Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.3, 0.4, 1.0), 2.1);
        let id = p.compose(&p.inverse());
        assert!(id.translation.norm() < 1e-12);
        assert!(id.rotation.angle() < 1e-9);
        assert!((p.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_quaternion_rejected() {
        assert!(Pose::from_wxyz(Vec3::zeros(), [0.0; 4]).is_err());
    }

    #[test]
    fn pose_serializes_wxyz() {
        let p = Pose::from_yaw(Vec3::new(1.0, 2.0, 3.0), FRAC_PI_2);
        let json = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert!(json.contains("\"rotation\":[0.7071"));
        assert_eq!(p, back);
    }

    #[test]
    fn gjk_examples() {
        let a = unit_cube(0.0, 0.0, 0.0).to_shape();
        let b = unit_cube(3.0, 0.0, 0.0).to_shape();
        assert_abs_diff_eq!(gjk_distance(&a, &b), 2.0, epsilon = 1e-9);
        let c = unit_cube(0.5, 0.0, 0.0).to_shape();
        assert_eq!(gjk_distance(&a, &c), 0.0);
        let p = ConvexShape::point(Vec3::new(0.0, 0.0, 5.0));
        assert_abs_diff_eq!(gjk_distance(&p, &a), 4.5, epsilon = 1e-9);
    }

    #[test]
    fn gjk_touching_faces_is_zero() {
        let a = unit_cube(0.0, 0.0, 0.0).to_shape();
        let b = unit_cube(1.0, 0.0, 0.0).to_shape();
        assert_eq!(gjk_distance(&a, &b), 0.0);
        assert!(gjk_intersects(&a, &b));
    }

    #[test]
    fn gjk_edge_to_edge() {
        // Rotated 45° about z: its x-extent is ±√2/2, so the gap is 3 − 0.5 − √2/2.
        let a = unit_cube(0.0, 0.0, 0.0).to_shape();
        let b = BoxObstacle::new(
            Pose::from_yaw(Vec3::new(3.0, 0.0, 0.0), std::f64::consts::FRAC_PI_4),
            Vec3::repeat(1.0),
        )
        .unwrap()
        .to_shape();
        let expected = 3.0 - 0.5 - 0.5 * 2f64.sqrt();
        assert_abs_diff_eq!(gjk_distance(&a, &b), expected, epsilon = 1e-9);
        assert!(!gjk_intersects(&a, &b));
    }

    #[test]
    fn aabb_examples() {
        let a = unit_cube(0.0, 0.0, 0.0);
        assert!(aabb_intersects(&a, &a));
        assert!(aabb_intersects(&a, &unit_cube(1.0, 0.0, 0.0)));
        assert!(!aabb_intersects(&a, &unit_cube(2.1, 0.0, 0.0)));
    }

    #[test]
    fn rotated_box_aabb_matches_corners() {
        let b = BoxObstacle::new(
            Pose::from_axis_angle(Vec3::new(0.2, 0.1, -0.3), Vec3::new(1.0, 1.0, 0.2), 0.9),
            Vec3::new(0.4, 0.1, 0.7),
        )
        .unwrap();
        let fast = b.aabb();
        let slow = Aabb::from_points(&b.corners());
        assert!((fast.min - slow.min).norm() < 1e-12);
        assert!((fast.max - slow.max).norm() < 1e-12);
    }

    #[test]
    fn oriented_box_support_matches_hull() {
        let b = BoxObstacle::new(
            Pose::from_axis_angle(Vec3::new(0.3, -0.2, 0.1), Vec3::new(0.2, 1.0, 0.4), 1.1),
            Vec3::new(0.3, 0.6, 0.2),
        )
        .unwrap();
        let other = unit_cube(1.5, 0.4, -0.2);
        let d_hull = gjk_distance(&b.to_shape(), &other.to_shape());
        let d_box = support_distance(&OrientedBox::new(&b), &OrientedBox::new(&other));
        assert_abs_diff_eq!(d_hull, d_box, epsilon = 1e-9);
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(BoxObstacle::axis_aligned(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
        assert!(ConvexShape::new(vec![], Pose::identity()).is_err());
    }
}
