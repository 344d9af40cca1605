//! Intermittent multi-robot deployment planning.
//!
//! A deployment factor `(x, y, r, t)` means "cell `(x, y)` is sensed by robot
//! `r` at time `t`". The planner greedily selects factors maximizing a
//! variance-weighted dispersion objective subject to a per-day budget
//! (partition matroid) and a total-deployment-days budget.

mod exhaustive;
mod greedy;
mod matroid;
mod objective;
mod policy_file;

pub use exhaustive::{
    brute_force_plan, certificate, curvature, curvature_from_table, Certificate, CurvatureReport, MAX_EXHAUSTIVE_GROUND_SET,
};
pub use greedy::{greedy_plan, GreedyOptions, GreedyPlan, TraceEntry};
pub use matroid::{is_independent, per_day_independent, total_days_independent, BudgetConstraint};
pub use objective::{distance, separation_distance, Objective, ObjectiveBreakdown, SPATIAL_EPSILON};
pub use policy_file::{read_policy, write_policy, PolicyFile};

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeploymentFactor {
    /// Grid column.
    pub x: usize,
    /// Grid row.
    pub y: usize,
    pub robot: usize,
    /// Absolute time index.
    pub t: usize,
}

impl DeploymentFactor {
    pub fn new(x: usize, y: usize, robot: usize, t: usize) -> Self {
        Self { x, y, robot, t }
    }

    /// Tie-break order used by every planner: `(t, y, x, r)`.
    pub fn order_key(&self) -> (usize, usize, usize, usize) {
        (self.t, self.y, self.x, self.robot)
    }
}

/// All `(x, y, r, t)` combinations over a grid, a robot team and a horizon.
/// Never materialized by the greedy planner.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSet {
    pub rows: usize,
    pub cols: usize,
    /// Multiplicative wait-penalty weight per robot; its length is `|R|`.
    pub robot_weights: Vec<f64>,
    /// First time index of the horizon.
    pub t1: usize,
    pub horizon: usize,
}

impl GroundSet {
    pub fn new(rows: usize, cols: usize, robot_weights: Vec<f64>, t1: usize, horizon: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || horizon == 0 || robot_weights.is_empty() {
            return Err(Error::Invalid(format!(
                "ground set needs non-empty grid, robots and horizon \
                 (got {rows}x{cols}, {} robots, horizon {horizon})",
                robot_weights.len()
            )));
        }
        if robot_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("robot weights must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            robot_weights,
            t1,
            horizon,
        })
    }

    pub fn uniform(rows: usize, cols: usize, robots: usize, t1: usize, horizon: usize) -> Result<Self> {
        Self::new(rows, cols, vec![1.0; robots], t1, horizon)
    }

    pub fn robots(&self) -> usize {
        self.robot_weights.len()
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.robots() * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, f: &DeploymentFactor) -> bool {
        f.x < self.cols
            && f.y < self.rows
            && f.robot < self.robots()
            && f.t >= self.t1
            && f.t < self.t1 + self.horizon
    }

    /// Factors in `(t, y, x, r)` order.
    pub fn iter(&self) -> impl Iterator<Item = DeploymentFactor> + '_ {
        let (rows, cols, robots) = (self.rows, self.cols, self.robots());
        (self.t1..self.t1 + self.horizon).flat_map(move |t| {
            (0..rows).flat_map(move |y| {
                (0..cols).flat_map(move |x| (0..robots).map(move |r| DeploymentFactor::new(x, y, r, t)))
            })
        })
    }
}

/// Predicted variance maps (mm²) for each step of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSet {
    pub t1: usize,
    pub maps: Vec<HeightMap>,
}

impl VarianceSet {
    pub fn new(t1: usize, maps: Vec<HeightMap>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::Invalid("variance set is empty".into()));
        };
        if maps.iter().any(|m| !m.same_dims(first)) {
            return Err(Error::Shape("variance maps differ in size".into()));
        }
        if maps.iter().flat_map(|m| m.values()).any(|&v| v < 0.0) {
            return Err(Error::Invalid("variances must be non-negative".into()));
        }
        Ok(Self { t1, maps })
    }

    pub fn horizon(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn get(&self, f: &DeploymentFactor) -> Result<f64> {
        let idx = f
            .t
            .checked_sub(self.t1)
            .filter(|&i| i < self.maps.len())
            .ok_or(Error::OutOfRange {
                index: f.t,
                len: self.maps.len(),
            })?;
        let m = &self.maps[idx];
        if f.y >= m.rows() || f.x >= m.cols() {
            return Err(Error::OutOfRange {
                index: f.y * m.cols() + f.x,
                len: m.len(),
            });
        }
        Ok(m.get(f.y, f.x))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            t1: self.t1,
            maps: self.maps.iter().map(|m| m.map(|v| v * factor)).collect(),
        }
    }

    /// True when every variance is zero (planning degenerates to the penalty).
    pub fn is_all_zero(&self) -> bool {
        self.maps.iter().all(|m| m.values().iter().all(|&v| v == 0.0))
    }

    pub fn check_matches(&self, ground: &GroundSet) -> Result<()> {
        if self.t1 != ground.t1 || self.horizon() != ground.horizon {
            return Err(Error::Shape(format!(
                "variance horizon [{}, +{}) does not match ground set [{}, +{})",
                self.t1,
                self.horizon(),
                ground.t1,
                ground.horizon
            )));
        }
        if self.dims() != (ground.rows, ground.cols) {
            return Err(Error::Shape(format!(
                "variance maps are {:?}, ground set grid is {}x{}",
                self.dims(),
                ground.rows,
                ground.cols
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerWeights {
    /// Waiting penalty per time step.
    pub w1: f64,
    /// Log spatial distance weight.
    pub w2: f64,
    /// Time difference weight.
    pub w3: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            w1: 5.0,
            w2: 0.1,
            w3: 1.0,
        }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1.is_finite() && self.w2.is_finite() && self.w3.is_finite()) {
            return Err(Error::Invalid("planner weights must be finite".into()));
        }
        if self.w2 < 0.0 || self.w3 < 0.0 {
            return Err(Error::Invalid("w2 and w3 must be non-negative".into()));
        }
        Ok(())
    }
}
