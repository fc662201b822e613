//! Local samplers (equal-weight Gaussian mixtures over critical configurations)
//! and the global sampler that blends them with uniform sampling.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::robot::{Configuration, JointBounds};

/// Default per-joint standard deviation of each mixture component.
pub const DEFAULT_SIGMA: f64 = 0.2;
/// Default probability of drawing from the uniform branch.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// One isotropic Gaussian per critical configuration, all equally likely.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSampler {
    components: Vec<Configuration>,
    sigma: f64,
}

impl LocalSampler {
    pub fn new(components: Vec<Configuration>, sigma: f64) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidInput(
                "a local sampler needs at least one critical configuration".into(),
            ));
        };
        let dof = first.dof();
        if let Some(bad) = components.iter().find(|c| c.dof() != dof) {
            return Err(Error::DimensionMismatch {
                expected: dof,
                got: bad.dof(),
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid spread {sigma}")));
        }
        Ok(Self { components, sigma })
    }

    pub fn components(&self) -> &[Configuration] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dof(&self) -> usize {
        self.components[0].dof()
    }

    /// Draw without clamping.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mean = &self.components[rng.random_range(0..self.components.len())];
        Configuration(
            mean.iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + self.sigma * z
                })
                .collect(),
        )
    }
}

pub fn build_local_sampler(configs: Vec<Configuration>, sigma: f64) -> Result<LocalSampler> {
    LocalSampler::new(configs, sigma)
}

/// Identifies where a local sampler came from, for de-duplication.
pub type SamplerId = u64;

/// Composite sampler: uniform with probability `lambda`, otherwise a uniformly
/// chosen local sampler. Gaussian draws outside the joint bounds are clamped.
#[derive(Debug, Clone)]
pub struct GlobalSampler {
    samplers: Vec<(SamplerId, Arc<LocalSampler>)>,
    lambda: f64,
    bounds: JointBounds,
}

impl GlobalSampler {
    /// Duplicate ids are dropped (first occurrence wins). With no samplers the
    /// mixing probability is forced to 1.
    pub fn new(
        bounds: JointBounds,
        lambda: f64,
        samplers: impl IntoIterator<Item = (SamplerId, Arc<LocalSampler>)>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "mixing probability {lambda} outside [0, 1]"
            )));
        }
        let mut seen = HashSet::new();
        let mut unique = Vec::new();
        for (id, s) in samplers {
            if s.dof() != bounds.dof() {
                return Err(Error::DimensionMismatch {
                    expected: bounds.dof(),
                    got: s.dof(),
                });
            }
            if seen.insert(id) {
                unique.push((id, s));
            }
        }
        let lambda = if unique.is_empty() { 1.0 } else { lambda };
        Ok(Self {
            samplers: unique,
            lambda,
            bounds,
        })
    }

    pub fn uniform(bounds: JointBounds) -> Self {
        Self {
            samplers: Vec::new(),
            lambda: 1.0,
            bounds,
        }
    }

    /// Number of distinct local samplers (K).
    pub fn len(&self) -> usize {
        self.samplers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samplers.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bounds(&self) -> &JointBounds {
        &self.bounds
    }

    pub fn samplers(&self) -> impl Iterator<Item = &LocalSampler> {
        self.samplers.iter().map(|(_, s)| s.as_ref())
    }

    pub fn sampler_ids(&self) -> impl Iterator<Item = SamplerId> + '_ {
        self.samplers.iter().map(|(id, _)| *id)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        if self.samplers.is_empty() || rng.random::<f64>() < self.lambda {
            return self.bounds.sample_uniform(rng);
        }
        let (_, local) = &self.samplers[rng.random_range(0..self.samplers.len())];
        let mut q = local.sample(rng);
        self.bounds.clamp(&mut q.0);
        q
    }
}

pub fn sample_global<R: Rng + ?Sized>(gs: &GlobalSampler, rng: &mut R) -> Configuration {
    gs.sample(rng)
}
