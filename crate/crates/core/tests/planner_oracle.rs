//! Planner checks against a literal, fully materialized greedy and the
//! exhaustive optimum.

use pasture_core::planner::{
    brute_force_plan, certificate, curvature, curvature_from_table, greedy_plan, is_independent,
    per_day_independent, total_days_independent, BudgetConstraint, DeploymentFactor, GreedyOptions,
    GroundSet, Objective, PlannerWeights, VarianceSet,
};
use pasture_core::HeightMap;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Algorithm as printed: scan all unchecked factors for the best marginal
/// gain `f(S + v) - f(S)`, add it if the result stays independent, mark it
/// checked either way. `order` is the enumeration order of V.
fn literal_greedy(
    order: &[DeploymentFactor],
    obj: &Objective,
    c: &BudgetConstraint,
) -> Vec<DeploymentFactor> {
    let mut selected: Vec<DeploymentFactor> = Vec::new();
    let mut checked = vec![false; order.len()];
    let mut current = 0.0;
    while checked.iter().any(|c| !c) {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in order.iter().enumerate() {
            if checked[i] {
                continue;
            }
            let mut with = selected.clone();
            with.push(*v);
            let gain = obj.value(&with).unwrap() - current;
            let better = match best {
                None => true,
                Some((j, g)) => gain > g || (gain == g && v.order_key() < order[j].order_key()),
            };
            if better {
                best = Some((i, gain));
            }
        }
        let (i, _) = best.unwrap();
        checked[i] = true;
        let mut with = selected.clone();
        with.push(order[i]);
        if is_independent(&with, c) {
            current = obj.value(&with).unwrap();
            selected = with;
        }
    }
    selected
}

fn random_instance(rng: &mut ChaCha8Rng, rows: usize, cols: usize, robots: usize, horizon: usize) -> (GroundSet, VarianceSet) {
    let t1 = rng.gen_range(0..5);
    let weights = (0..robots).map(|_| rng.gen_range(0.5..1.5)).collect();
    let ground = GroundSet::new(rows, cols, weights, t1, horizon).unwrap();
    let maps = (0..horizon)
        .map(|_| HeightMap::from_fn(rows, cols, |_, _| rng.gen_range(0.5..20.0)))
        .collect();
    (ground, VarianceSet::new(t1, maps).unwrap())
}

#[test]
fn greedy_matches_literal_algorithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..40 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(1..=3);
        let robots = rng.gen_range(1..=2);
        let horizon = rng.gen_range(1..=4);
        let (ground, var) = random_instance(&mut rng, rows, cols, robots, horizon);
        let w = PlannerWeights {
            w1: rng.gen_range(0.0..3.0),
            w2: rng.gen_range(0.0..0.5),
            w3: rng.gen_range(0.0..2.0),
        };
        let c = BudgetConstraint::new(rng.gen_range(1..=3), rng.gen_range(1..=3)).unwrap();
        let plan = greedy_plan(&ground, &var, w, c, GreedyOptions::default()).unwrap();
        let obj = Objective::new(&ground, &var, w);
        let mut order: Vec<_> = ground.iter().collect();
        let reference = literal_greedy(&order, &obj, &c);
        assert_eq!(plan.selected, reference, "case {case}");
        // enumeration order of V does not matter
        order.shuffle(&mut rng);
        assert_eq!(literal_greedy(&order, &obj, &c), reference, "case {case} shuffled");
        assert!((plan.value - obj.value(&reference).unwrap()).abs() < 1e-9);
        // trace gains are the true marginal gains
        let mut prefix = Vec::new();
        let mut prev = 0.0;
        for e in plan.trace.iter().filter(|e| e.accepted) {
            prefix.push(e.factor);
            let now = obj.value(&prefix).unwrap();
            assert!((e.gain - (now - prev)).abs() < 1e-9, "case {case}");
            prev = now;
        }
    }
}

#[test]
fn toy_twelve_element_instance() {
    // 2x1 grid, 2 robots, 3 days, one factor per day, two days
    let ground = GroundSet::new(1, 2, vec![1.0, 1.2], 0, 3).unwrap();
    let maps = vec![
        HeightMap::new(1, 2, vec![6.0, 2.0]).unwrap(),
        HeightMap::new(1, 2, vec![3.0, 9.0]).unwrap(),
        HeightMap::new(1, 2, vec![4.0, 5.0]).unwrap(),
    ];
    let var = VarianceSet::new(0, maps).unwrap();
    let w = PlannerWeights {
        w1: 0.5,
        w2: 0.1,
        w3: 1.0,
    };
    let c = BudgetConstraint::new(1, 2).unwrap();
    assert_eq!(ground.len(), 12);
    let greedy = greedy_plan(&ground, &var, w, c, GreedyOptions::default()).unwrap();
    let (opt_set, opt) = brute_force_plan(&ground, &var, w, c).unwrap();
    assert!(is_independent(&opt_set, &c));
    assert!(opt >= greedy.value);
    let cf = curvature(&ground, &var, w).unwrap();

    // recompute the curvature from a tabulated f
    let obj = Objective::new(&ground, &var, w);
    let all: Vec<_> = ground.iter().collect();
    let full = obj.value(&all).unwrap();
    let mut min_ratio = f64::INFINITY;
    for v in &all {
        let single = obj.value(&[*v]).unwrap();
        if single <= 0.0 {
            continue;
        }
        let rest: Vec<_> = all.iter().filter(|f| *f != v).copied().collect();
        min_ratio = min_ratio.min((full - obj.value(&rest).unwrap()) / single);
    }
    assert!((cf.raw - (1.0 - min_ratio)).abs() < 1e-12);

    let cert = certificate(greedy.value, opt, cf.clamped);
    assert!(cert.pass, "{cert:?}");
}

#[test]
fn curvature_table_matches_objective_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (ground, var) = random_instance(&mut rng, 2, 2, 1, 3);
    let w = PlannerWeights::default();
    let obj = Objective::new(&ground, &var, w);
    let all: Vec<_> = ground.iter().collect();
    let entries: Vec<_> = all
        .iter()
        .map(|v| {
            let rest: Vec<_> = all.iter().filter(|f| *f != v).copied().collect();
            (obj.value(&rest).unwrap(), obj.value(&[*v]).unwrap())
        })
        .collect();
    let (raw, _) = curvature_from_table(obj.value(&all).unwrap(), &entries).unwrap();
    assert_eq!(raw, curvature(&ground, &var, w).unwrap().raw);
}

fn subsets(all: &[DeploymentFactor]) -> Vec<Vec<DeploymentFactor>> {
    (0u32..(1 << all.len()))
        .map(|m| {
            all.iter()
                .enumerate()
                .filter(|&(i, _)| m & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect()
        })
        .collect()
}

#[test]
fn budget_constraints_satisfy_matroid_axioms_on_small_ground_sets() {
    // |V| = 8: 2 cells x 1 robot x 4 days
    let ground = GroundSet::uniform(1, 2, 1, 0, 4).unwrap();
    let all: Vec<_> = ground.iter().collect();
    let family = subsets(&all);
    for (per_day, total_days) in [(1, 1), (1, 2), (2, 1), (2, 3)] {
        let c = BudgetConstraint::new(per_day, total_days).unwrap();
        assert!(is_independent(&[], &c));
        for s in &family {
            if !is_independent(s, &c) {
                continue;
            }
            for sub in subsets(s) {
                assert!(is_independent(&sub, &c));
            }
        }
        let partition: Vec<_> = family.iter().filter(|s| per_day_independent(s, &c)).collect();
        for a in &partition {
            for b in &partition {
                if b.len() < a.len() {
                    assert!(a.iter().filter(|v| !b.contains(v)).any(|v| {
                        let mut grown = (*b).clone();
                        grown.push(*v);
                        per_day_independent(&grown, &c)
                    }));
                }
            }
        }
        let days: Vec<_> = family.iter().filter(|s| total_days_independent(s, &c)).collect();
        for s in &days {
            for sub in subsets(s) {
                assert!(total_days_independent(&sub, &c));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_output_is_independent(seed in any::<u64>(), per_day in 1usize..5, days in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ground, var) = random_instance(&mut rng, 4, 3, 3, 5);
        let c = BudgetConstraint::new(per_day, days).unwrap();
        let plan = greedy_plan(&ground, &var, PlannerWeights::default(), c, GreedyOptions::default()).unwrap();
        prop_assert!(is_independent(&plan.selected, &c));
        prop_assert_eq!(plan.selected.len(), per_day * days.min(5));
    }

    #[test]
    fn variance_scaling_keeps_selection(seed in any::<u64>(), k in 0i32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ground, var) = random_instance(&mut rng, 3, 3, 2, 4);
        let w = PlannerWeights { w1: 0.0, w2: 0.1, w3: 1.0 };
        let c = BudgetConstraint::new(2, 3).unwrap();
        let lambda = 2f64.powi(k - 2);
        let a = greedy_plan(&ground, &var, w, c, GreedyOptions::default()).unwrap();
        let scaled = var.scaled(lambda);
        let b = greedy_plan(&ground, &scaled, w, c, GreedyOptions::default()).unwrap();
        prop_assert_eq!(&a.selected, &b.selected);
        let obj = Objective::new(&ground, &var, w);
        let obj_scaled = Objective::new(&ground, &scaled, w);
        let sv = obj.value(&a.selected).unwrap();
        prop_assert!((obj_scaled.value(&a.selected).unwrap() - lambda * sv).abs() <= 1e-9 * sv.abs().max(1.0));
    }
}
