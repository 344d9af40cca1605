use std::collections::BTreeMap;

use super::DeploymentFactor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetConstraint {
    /// Maximum selections within one time step.
    pub per_day: usize,
    /// Maximum number of distinct time steps with any selection.
    pub total_days: usize,
}

impl BudgetConstraint {
    pub fn new(per_day: usize, total_days: usize) -> Result<Self> {
        if per_day == 0 || total_days == 0 {
            return Err(Error::Invalid(format!(
                "budgets must be >= 1 (per_day={per_day}, total_days={total_days})"
            )));
        }
        Ok(Self { per_day, total_days })
    }
}

fn day_counts(set: &[DeploymentFactor]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for f in set {
        *counts.entry(f.t).or_insert(0) += 1;
    }
    counts
}

/// Partition matroid: at most `per_day` factors in each time slice.
pub fn per_day_independent(set: &[DeploymentFactor], c: &BudgetConstraint) -> bool {
    day_counts(set).values().all(|&n| n <= c.per_day)
}

/// At most `total_days` time slices carry a selection.
pub fn total_days_independent(set: &[DeploymentFactor], c: &BudgetConstraint) -> bool {
    day_counts(set).len() <= c.total_days
}

/// Membership in the intersection of both budget constraints.
pub fn is_independent(set: &[DeploymentFactor], c: &BudgetConstraint) -> bool {
    let counts = day_counts(set);
    counts.len() <= c.total_days && counts.values().all(|&n| n <= c.per_day)
}
