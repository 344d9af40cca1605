//! Exhaustive optimum, curvature and the greedy ratio certificate for small
//! ground sets.

use super::{is_independent, BudgetConstraint, DeploymentFactor, GroundSet, Objective, PlannerWeights, VarianceSet};
use crate::error::{Error, Result};

pub const MAX_EXHAUSTIVE_GROUND_SET: usize = 20;

fn materialize(ground: &GroundSet) -> Result<Vec<DeploymentFactor>> {
    if ground.len() > MAX_EXHAUSTIVE_GROUND_SET {
        return Err(Error::GroundSetTooLarge {
            size: ground.len(),
            max: MAX_EXHAUSTIVE_GROUND_SET,
        });
    }
    Ok(ground.iter().collect())
}

fn subset(all: &[DeploymentFactor], mask: u32) -> Vec<DeploymentFactor> {
    all.iter()
        .enumerate()
        .filter(|&(i, _)| mask & (1 << i) != 0)
        .map(|(_, f)| *f)
        .collect()
}

/// Maximizer of the objective over all independent subsets. Among equal
/// values the first subset in bitmask order wins, so ∅ is returned when no
/// subset is strictly positive.
pub fn brute_force_plan(
    ground: &GroundSet,
    variances: &VarianceSet,
    weights: PlannerWeights,
    budget: BudgetConstraint,
) -> Result<(Vec<DeploymentFactor>, f64)> {
    variances.check_matches(ground)?;
    let all = materialize(ground)?;
    let obj = Objective::new(ground, variances, weights);
    let mut best = (Vec::new(), 0.0);
    for mask in 1u32..(1u32 << all.len()) {
        let s = subset(&all, mask);
        if !is_independent(&s, &budget) {
            continue;
        }
        let v = obj.value(&s)?;
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    /// `1 - min_v (f(V) - f(V \ v)) / f(v)` over factors with `f(v) > 0`.
    pub raw: f64,
    /// `raw` clamped to `[0, 1]`.
    pub clamped: f64,
    pub out_of_range: bool,
    /// Factors skipped because `f(v) <= 0`.
    pub skipped: usize,
    /// Per-factor marginal ratio `(f(V) - f(V \ v)) / f(v)`.
    pub ratios: Vec<(DeploymentFactor, f64)>,
}

/// Total curvature from tabulated values: `full = f(V)` and, per factor,
/// `(f(V \ v), f({v}))`. A modular function gives 0; a factor that adds
/// nothing on top of the rest gives 1.
pub fn curvature_from_table(full: f64, entries: &[(f64, f64)]) -> Result<(f64, Vec<Option<f64>>)> {
    let ratios: Vec<Option<f64>> = entries
        .iter()
        .map(|&(without, single)| (single > 0.0).then(|| (full - without) / single))
        .collect();
    let min = ratios
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return Err(Error::Invalid(
            "curvature undefined: every singleton value is non-positive".into(),
        ));
    }
    Ok((1.0 - min, ratios))
}

pub fn curvature(ground: &GroundSet, variances: &VarianceSet, weights: PlannerWeights) -> Result<CurvatureReport> {
    variances.check_matches(ground)?;
    let all = materialize(ground)?;
    let obj = Objective::new(ground, variances, weights);
    let full = obj.value(&all)?;
    let mut entries = Vec::with_capacity(all.len());
    for i in 0..all.len() {
        let without: Vec<_> = all
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, f)| *f)
            .collect();
        entries.push((obj.value(&without)?, obj.value(&all[i..=i])?));
    }
    let (raw, per_factor) = curvature_from_table(full, &entries)?;
    let skipped = per_factor.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("curvature: skipped {skipped} factors with non-positive singleton value");
    }
    let ratios = all
        .iter()
        .zip(&per_factor)
        .filter_map(|(f, r)| r.map(|r| (*f, r)))
        .collect();
    let clamped = raw.clamp(0.0, 1.0);
    if clamped != raw {
        log::warn!("curvature {raw} outside [0, 1]; objective is not monotone submodular here");
    }
    Ok(CurvatureReport {
        raw,
        clamped,
        out_of_range: clamped != raw,
        skipped,
        ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub greedy_value: f64,
    pub optimal_value: f64,
    pub curvature: f64,
    /// `optimal / (2 + c_f)`.
    pub bound: f64,
    /// `greedy / optimal`, 1 when both are zero.
    pub ratio: f64,
    pub pass: bool,
}

/// Checks `greedy >= optimal / (2 + c_f)`, allowing for rounding at the
/// level of a few ulps of the optimum.
pub fn certificate(greedy_value: f64, optimal_value: f64, curvature: f64) -> Certificate {
    let bound = optimal_value / (2.0 + curvature);
    let slack = 1e-12 * optimal_value.abs();
    let ratio = if optimal_value == 0.0 {
        if greedy_value >= 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        greedy_value / optimal_value
    };
    Certificate {
        greedy_value,
        optimal_value,
        curvature,
        bound,
        ratio,
        pass: greedy_value >= bound - slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightmap::HeightMap;

    #[test]
    fn singleton_ground_set() {
        let ground = GroundSet::uniform(1, 1, 1, 0, 1).unwrap();
        let c = BudgetConstraint::new(1, 1).unwrap();
        let pos = VarianceSet::new(0, vec![HeightMap::filled(1, 1, 3.0)]).unwrap();
        let (s, v) = brute_force_plan(&ground, &pos, PlannerWeights::default(), c).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(v, 3.0);
        let zero = VarianceSet::new(0, vec![HeightMap::filled(1, 1, 0.0)]).unwrap();
        let (s, v) = brute_force_plan(&ground, &zero, PlannerWeights::default(), c).unwrap();
        assert!(s.is_empty());
        assert_eq!(v, 0.0);
    }

    #[test]
    fn one_day_budget_caps_optimum() {
        let ground = GroundSet::uniform(2, 3, 2, 0, 1).unwrap();
        let maps = vec![HeightMap::from_fn(2, 3, |r, c| 1.0 + (r + 2 * c) as f64)];
        let var = VarianceSet::new(0, maps).unwrap();
        let c = BudgetConstraint::new(2, 1).unwrap();
        let (s, _) = brute_force_plan(&ground, &var, PlannerWeights::default(), c).unwrap();
        assert!(s.len() <= 2);
    }

    #[test]
    fn refuses_large_ground_sets() {
        let ground = GroundSet::uniform(3, 3, 1, 0, 3).unwrap();
        let var = VarianceSet::new(0, vec![HeightMap::filled(3, 3, 1.0); 3]).unwrap();
        let c = BudgetConstraint::new(1, 1).unwrap();
        assert!(matches!(
            brute_force_plan(&ground, &var, PlannerWeights::default(), c),
            Err(Error::GroundSetTooLarge { size: 27, .. })
        ));
        assert!(curvature(&ground, &var, PlannerWeights::default()).is_err());
    }

    #[test]
    fn modular_function_has_zero_curvature() {
        // f(S) = sum of var(s) with the dispersion factor pinned to 1
        let var = [2.0, 0.5, 3.0, 1.25];
        let full: f64 = var.iter().sum();
        let entries: Vec<_> = var.iter().map(|&v| (full - v, v)).collect();
        let (c, ratios) = curvature_from_table(full, &entries).unwrap();
        assert_eq!(c, 0.0);
        assert!(ratios.iter().all(|r| *r == Some(1.0)));

        // a lone factor is trivially modular through the objective too
        let ground = GroundSet::uniform(1, 1, 1, 0, 1).unwrap();
        let v = VarianceSet::new(0, vec![HeightMap::filled(1, 1, 2.0)]).unwrap();
        let w = PlannerWeights {
            w1: 0.0,
            w2: 0.0,
            w3: 0.0,
        };
        assert_eq!(curvature(&ground, &v, w).unwrap().raw, 0.0);
    }

    #[test]
    fn null_contribution_gives_ratio_zero() {
        // second factor adds nothing on top of the first
        let (c, ratios) = curvature_from_table(4.0, &[(1.0, 3.0), (4.0, 1.0)]).unwrap();
        assert_eq!(ratios[1], Some(0.0));
        assert_eq!(c, 1.0);
        // non-positive singletons are skipped
        let (_, ratios) = curvature_from_table(4.0, &[(1.0, 3.0), (4.0, 0.0)]).unwrap();
        assert_eq!(ratios[1], None);
    }

    #[test]
    fn certificate_boundaries() {
        let c = certificate(5.0, 5.0, 0.3);
        assert!(c.pass);
        assert_eq!(c.ratio, 1.0);
        let bound = 9.0 / (2.0 + 0.4);
        let c = certificate(bound, 9.0, 0.4);
        assert!(c.pass);
        assert!(!certificate(bound * 0.99, 9.0, 0.4).pass);
        assert_eq!(certificate(0.0, 0.0, 0.0).ratio, 1.0);
    }

    #[test]
    fn curvature_all_nonpositive_errors() {
        let ground = GroundSet::uniform(1, 2, 1, 0, 1).unwrap();
        let var = VarianceSet::new(0, vec![HeightMap::filled(1, 2, 0.0)]).unwrap();
        assert!(curvature(&ground, &var, PlannerWeights::default()).is_err());
    }
}
