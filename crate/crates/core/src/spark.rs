//! Box-pair decomposition of exact scene geometry.
//!
//! A primitive is an unordered pair of boxes whose box distance is below
//! `d_pairs`. Primitives are compared with the cheaper of the two box
//! matchings, and a configuration is critical for a primitive when some part
//! of the robot comes within `d_clust` of either box.

use serde::{Deserialize, Serialize};

use crate::geometry::{pose_distance, BoxObstacle, OrientedBox};
use crate::robot::{KinematicChain, PlacedRobot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparkConfig {
    /// Translation weight inside the pose distance.
    pub w_t: f64,
    /// Pose weight against the size term.
    pub w_s: f64,
    pub d_pairs: f64,
    pub d_clust: f64,
    pub d_radius: f64,
}

impl Default for SparkConfig {
    fn default() -> Self {
        Self {
            w_t: 0.75,
            w_s: 0.5,
            d_pairs: 0.2,
            d_clust: 0.15,
            d_radius: 0.4,
        }
    }
}

impl SparkConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let weights_ok = (0.0..=1.0).contains(&self.w_t) && (0.0..=1.0).contains(&self.w_s);
        let dists_ok = [self.d_pairs, self.d_clust, self.d_radius]
            .iter()
            .all(|d| *d > 0.0);
        if weights_ok && dists_ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidInput(format!(
                "invalid box-pair parameters {self:?}"
            )))
        }
    }
}

/// Two boxes, stored in canonical order (see [`SparkPrimitive::new`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparkPrimitive {
    a: BoxObstacle,
    b: BoxObstacle,
}

/// Bit-exact identity of a primitive, usable as a hash key.
pub type SparkKey = [u64; 20];

impl SparkPrimitive {
    /// Orders the boxes lexicographically by translation, then size.
    pub fn new(a: BoxObstacle, b: BoxObstacle) -> Self {
        if box_order_key(&b) < box_order_key(&a) {
            Self { a: b, b: a }
        } else {
            Self { a, b }
        }
    }

    pub fn boxes(&self) -> (&BoxObstacle, &BoxObstacle) {
        (&self.a, &self.b)
    }

    pub fn key(&self) -> SparkKey {
        let mut out = [0u64; 20];
        for (slot, v) in out
            .iter_mut()
            .zip(box_floats(&self.a).into_iter().chain(box_floats(&self.b)))
        {
            *slot = v.to_bits();
        }
        out
    }
}

fn box_floats(b: &BoxObstacle) -> [f64; 10] {
    let t = b.pose.translation;
    let q = b.pose.wxyz();
    [
        t.x, t.y, t.z, q[0], q[1], q[2], q[3], b.size.x, b.size.y, b.size.z,
    ]
}

fn box_order_key(b: &BoxObstacle) -> [ordered::Total; 6] {
    let t = b.pose.translation;
    [t.x, t.y, t.z, b.size.x, b.size.y, b.size.z].map(ordered::Total)
}

mod ordered {
    /// `f64` under `total_cmp`.
    #[derive(Debug, Clone, Copy)]
    pub struct Total(pub f64);

    impl PartialEq for Total {
        fn eq(&self, other: &Self) -> bool {
            self.0.total_cmp(&other.0).is_eq()
        }
    }
    impl Eq for Total {}
    impl PartialOrd for Total {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Total {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

/// `w_s·d_SE3 + (1 − w_s)·‖Δsize‖`.
pub fn spark_box_distance(i: &BoxObstacle, j: &BoxObstacle, cfg: &SparkConfig) -> f64 {
    cfg.w_s * pose_distance(&i.pose, &j.pose, cfg.w_t) + (1.0 - cfg.w_s) * (i.size - j.size).norm()
}

/// [`spark_box_distance`] without its rotation term. A pseudometric that
/// never exceeds the full distance, in floating point as well: the dropped
/// term is nonnegative and every remaining operation rounds monotonically.
pub fn spark_box_lower_bound(i: &BoxObstacle, j: &BoxObstacle, cfg: &SparkConfig) -> f64 {
    let dt = (i.pose.translation - j.pose.translation).norm();
    cfg.w_s * (cfg.w_t * dt) + (1.0 - cfg.w_s) * (i.size - j.size).norm()
}

/// All unordered pairs of distinct scene boxes closer than `d_pairs`.
pub fn spark_decompose(scene: &[BoxObstacle], cfg: &SparkConfig) -> Vec<SparkPrimitive> {
    let mut out = Vec::new();
    for (i, a) in scene.iter().enumerate() {
        for b in &scene[i + 1..] {
            if spark_box_distance(a, b, cfg) < cfg.d_pairs {
                out.push(SparkPrimitive::new(*a, *b));
            }
        }
    }
    out
}

/// Cheaper of the direct and crossed box matchings.
pub fn spark_primitive_distance(i: &SparkPrimitive, j: &SparkPrimitive, cfg: &SparkConfig) -> f64 {
    let direct = spark_box_distance(&i.a, &j.a, cfg) + spark_box_distance(&i.b, &j.b, cfg);
    let crossed = spark_box_distance(&i.a, &j.b, cfg) + spark_box_distance(&i.b, &j.a, cfg);
    direct.min(crossed)
}

/// Box-pair distance with [`spark_box_lower_bound`] per box. The cheaper
/// matching of a metric over two-element sets is again a metric (compose the
/// matchings), so this obeys the triangle inequality.
pub fn spark_primitive_lower_bound(
    i: &SparkPrimitive,
    j: &SparkPrimitive,
    cfg: &SparkConfig,
) -> f64 {
    let direct = spark_box_lower_bound(&i.a, &j.a, cfg) + spark_box_lower_bound(&i.b, &j.b, cfg);
    let crossed = spark_box_lower_bound(&i.a, &j.b, cfg) + spark_box_lower_bound(&i.b, &j.a, cfg);
    direct.min(crossed)
}

pub fn spark_is_critical(
    chain: &KinematicChain,
    q: &[f64],
    prim: &SparkPrimitive,
    cfg: &SparkConfig,
) -> bool {
    spark_is_critical_placed(&PlacedRobot::new(chain, q), prim, cfg)
}

/// Strict `min distance < d_clust` over every robot shape and both boxes.
pub fn spark_is_critical_placed(
    robot: &PlacedRobot,
    prim: &SparkPrimitive,
    cfg: &SparkConfig,
) -> bool {
    [&prim.a, &prim.b].into_iter().any(|b| {
        robot
            .min_distance_below(&OrientedBox::new(b), cfg.d_clust)
            .is_some()
    })
}
