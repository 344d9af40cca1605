use super::{DeploymentFactor, GroundSet, PlannerWeights, VarianceSet};
use crate::error::{Error, Result};

/// Spatial separations below this (grid units) are clamped before the log.
pub const SPATIAL_EPSILON: f64 = 1e-6;

/// `w2 * ln(max(|xy - x'y'|, eps)) + w3 * |t - t'|`.
pub fn distance(a: &DeploymentFactor, b: &DeploymentFactor, w: &PlannerWeights) -> f64 {
    let dx = a.x as f64 - b.x as f64;
    let dy = a.y as f64 - b.y as f64;
    let dt = (a.t as f64 - b.t as f64).abs();
    separation_distance((dx * dx + dy * dy).sqrt(), dt, w)
}

/// Same as [`distance`] for an explicit spatial separation and time gap.
pub fn separation_distance(spatial: f64, time_gap: f64, w: &PlannerWeights) -> f64 {
    w.w2 * spatial.max(SPATIAL_EPSILON).ln() + w.w3 * time_gap.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    /// Variance-weighted mean dispersion summed over the set.
    pub uncertainty: f64,
    /// Summed waiting penalty (subtracted).
    pub wait_penalty: f64,
}

impl ObjectiveBreakdown {
    pub fn value(&self) -> f64 {
        self.uncertainty - self.wait_penalty
    }
}

/// The deployment objective
///
/// `f(S) = sum_s [ var(s) * mean_{s' != s} d(s, s') - w1 * k_r * (t_s - t1) ]`
///
/// with the inner mean taken as 1 for singletons and `f(∅) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub variances: &'a VarianceSet,
    pub weights: PlannerWeights,
    pub robot_weights: &'a [f64],
}

impl<'a> Objective<'a> {
    pub fn new(ground: &'a GroundSet, variances: &'a VarianceSet, weights: PlannerWeights) -> Self {
        Self {
            variances,
            weights,
            robot_weights: &ground.robot_weights,
        }
    }

    pub fn t1(&self) -> usize {
        self.variances.t1
    }

    pub fn wait_penalty(&self, f: &DeploymentFactor) -> Result<f64> {
        let kappa = self.robot_weights.get(f.robot).ok_or(Error::OutOfRange {
            index: f.robot,
            len: self.robot_weights.len(),
        })?;
        let wait = f.t.checked_sub(self.t1()).ok_or(Error::OutOfRange {
            index: f.t,
            len: self.variances.horizon(),
        })?;
        Ok(self.weights.w1 * kappa * wait as f64)
    }

    pub fn breakdown(&self, set: &[DeploymentFactor]) -> Result<ObjectiveBreakdown> {
        let mut out = ObjectiveBreakdown::default();
        let n = set.len();
        for (i, s) in set.iter().enumerate() {
            let var = self.variances.get(s)?;
            let dispersion = if n == 1 {
                1.0
            } else {
                let sum: f64 = set
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, other)| distance(s, other, &self.weights))
                    .sum();
                sum / (n - 1) as f64
            };
            out.uncertainty += var * dispersion;
            out.wait_penalty += self.wait_penalty(s)?;
        }
        Ok(out)
    }

    pub fn value(&self, set: &[DeploymentFactor]) -> Result<f64> {
        Ok(self.breakdown(set)?.value())
    }
}
