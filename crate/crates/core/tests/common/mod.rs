//! Independent oracles and generators shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeSet;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;

use spark_flame::flame::{bit_index, FlameConfig, FlamePrimitive, BLOCK};
use spark_flame::geometry::{gjk_intersects, Aabb, BoxObstacle, OrientedBox, Pose, Vec3};

pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

pub fn random_vec<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

pub fn random_pose<R: Rng>(rng: &mut R) -> Pose {
    Pose::new(random_vec(rng, -2.0, 2.0), random_rotation(rng))
}

pub fn random_box<R: Rng>(
    rng: &mut R,
    center: (f64, f64),
    size: (f64, f64),
    rotated: bool,
) -> BoxObstacle {
    let t = random_vec(rng, center.0, center.1);
    let pose = if rotated {
        Pose::new(t, random_rotation(rng))
    } else {
        Pose::from_translation(t)
    };
    BoxObstacle::new(pose, random_vec(rng, size.0, size.1)).unwrap()
}

/// Euclidean gap between two axis-aligned boxes, from per-axis interval gaps.
pub fn aabb_gap(a: &Aabb, b: &Aabb) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let g = (a.min[i] - b.max[i]).max(b.min[i] - a.max[i]).max(0.0);
        s += g * g;
    }
    s.sqrt()
}

/// Exact distance from a point to a solid box.
pub fn point_box_distance(p: &Vec3, b: &BoxObstacle) -> f64 {
    let local = b.pose.inverse().transform_point(p);
    let h = b.half_extents();
    let mut s = 0.0;
    for i in 0..3 {
        let e = (local[i].abs() - h[i]).max(0.0);
        s += e * e;
    }
    s.sqrt()
}

fn contains(b: &BoxObstacle, p: &Vec3) -> bool {
    point_box_distance(p, b) == 0.0
}

/// Box-box distance by sampling the faces of `a` on a grid and repeatedly
/// re-sampling a shrinking window around the best sample. The distance to a
/// convex set is convex over each planar face, so the refinement converges to
/// the face minimum.
pub fn sampled_box_distance(a: &BoxObstacle, b: &BoxObstacle) -> f64 {
    if contains(b, &a.pose.translation) || contains(a, &b.pose.translation) {
        return 0.0;
    }
    let h = a.half_extents();
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let (u_ax, v_ax) = ((axis + 1) % 3, (axis + 2) % 3);
            let at = |u: f64, v: f64| {
                let mut p = Vec3::zeros();
                p[axis] = sign * h[axis];
                p[u_ax] = u * h[u_ax];
                p[v_ax] = v * h[v_ax];
                point_box_distance(&a.pose.transform_point(&p), b)
            };
            let (mut cu, mut cv, mut half) = (0.0, 0.0, 1.0);
            let mut face_best = f64::INFINITY;
            const N: i32 = 20;
            for _ in 0..40 {
                let (mut bu, mut bv) = (cu, cv);
                for i in 0..=N {
                    for j in 0..=N {
                        let u = (cu + half * (2.0 * i as f64 / N as f64 - 1.0)).clamp(-1.0, 1.0);
                        let v = (cv + half * (2.0 * j as f64 / N as f64 - 1.0)).clamp(-1.0, 1.0);
                        let d = at(u, v);
                        if d < face_best {
                            face_best = d;
                            (bu, bv) = (u, v);
                        }
                    }
                }
                (cu, cv) = (bu, bv);
                half *= 0.5;
            }
            best = best.min(face_best);
        }
    }
    best
}

/// Leaf cells overlapping any box with positive volume, found by testing every
/// cell in each box's bounding range against the box shrunk-cell criterion:
/// a cell counts when the cell shrunk by `shrink` on every side still touches
/// the box.
pub fn brute_force_raster(
    cfg: &FlameConfig,
    boxes: &[BoxObstacle],
    shrink: f64,
) -> BTreeSet<[usize; 3]> {
    let n = cfg.leaves_per_side() as i64;
    let origin = cfg.origin();
    let mut out = BTreeSet::new();
    for b in boxes {
        let bb = b.aabb();
        let lo = |i: usize| {
            (((bb.min[i] - origin[i]) / cfg.resolution).floor() as i64 - 1).clamp(0, n - 1)
        };
        let hi = |i: usize| {
            (((bb.max[i] - origin[i]) / cfg.resolution).floor() as i64 + 1).clamp(0, n - 1)
        };
        let ob = OrientedBox::new(b);
        for x in lo(0)..=hi(0) {
            for y in lo(1)..=hi(1) {
                for z in lo(2)..=hi(2) {
                    let idx = [x as usize, y as usize, z as usize];
                    let cell = cfg.leaf_aabb(idx);
                    let shrunk =
                        Aabb::new(cell.min.add_scalar(shrink), cell.max.add_scalar(-shrink));
                    if gjk_intersects(&OrientedBox::new(&shrunk.to_box()), &ob) {
                        out.insert(idx);
                    }
                }
            }
        }
    }
    out
}

/// Leaf cells encoded by a set of octoboxes.
pub fn leaves_of(prims: &[FlamePrimitive]) -> BTreeSet<[usize; 3]> {
    let mut out = BTreeSet::new();
    for p in prims {
        for x in 0..BLOCK {
            for y in 0..BLOCK {
                for z in 0..BLOCK {
                    if p.bits >> bit_index([x, y, z]) & 1 == 1 {
                        out.insert([
                            p.grid[0] as usize * BLOCK + x,
                            p.grid[1] as usize * BLOCK + y,
                            p.grid[2] as usize * BLOCK + z,
                        ]);
                    }
                }
            }
        }
    }
    out
}

/// Two-sample-free Kolmogorov–Smirnov statistic of `xs` against the uniform
/// distribution on `[lo, hi]`.
pub fn ks_uniform(xs: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v: Vec<f64> = xs.iter().map(|x| (x - lo) / (hi - lo)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
