//! Greedy selection under the per-day and total-days budgets.
//!
//! Neither the objective nor the budgets distinguish robots except through the
//! robot's wait-penalty weight, so the search runs over `(cell, day)` slots:
//! each slot keeps its robots ordered by penalty and hands out the cheapest
//! unchecked one. Dispersion sums against the current selection are kept per
//! slot and updated once per accepted factor.
//!
//! Feasibility of adding a factor depends only on its day, and the selection
//! only grows, so the first rejection on a day retires every factor of that
//! day. The selected set is the same as checking those factors one at a time.

use super::objective::separation_distance;
use super::{BudgetConstraint, DeploymentFactor, GroundSet, Objective, PlannerWeights, VarianceSet};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GreedyOptions {
    /// Stop once the best remaining marginal gain is not positive.
    pub stop_at_nonpositive_gain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub factor: DeploymentFactor,
    /// Marginal gain `f({v} | S)` at the time `factor` was the argmax.
    pub gain: f64,
    pub accepted: bool,
    /// Unchecked factors of the same day retired with a rejection.
    pub retired: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPlan {
    /// Accepted factors in selection order.
    pub selected: Vec<DeploymentFactor>,
    pub trace: Vec<TraceEntry>,
    /// Objective value of `selected`.
    pub value: f64,
}

struct SelectionState {
    n: usize,
    /// Sum over ordered pairs in S of var(s) * d(s, s').
    pair_sum: f64,
    /// Current uncertainty term of f(S).
    uncertainty: f64,
}

pub fn greedy_plan(
    ground: &GroundSet,
    variances: &VarianceSet,
    weights: PlannerWeights,
    budget: BudgetConstraint,
    options: GreedyOptions,
) -> Result<GreedyPlan> {
    weights.validate()?;
    variances.check_matches(ground)?;
    let (rows, cols, horizon, robots) = (ground.rows, ground.cols, ground.horizon, ground.robots());
    let cells_per_day = rows * cols;
    let slots = cells_per_day * horizon;

    // Robots per day ordered by wait penalty, ties by id.
    let robot_order: Vec<Vec<usize>> = (0..horizon)
        .map(|d| {
            let mut order: Vec<usize> = (0..robots).collect();
            let pen = |r: usize| weights.w1 * ground.robot_weights[r] * d as f64;
            order.sort_by(|&a, &b| pen(a).total_cmp(&pen(b)).then(a.cmp(&b)));
            order
        })
        .collect();
    let penalty = |d: usize, r: usize| weights.w1 * ground.robot_weights[r] * d as f64;

    let var: Vec<f64> = variances
        .maps
        .iter()
        .flat_map(|m| m.values().iter().copied())
        .collect();
    let slot_xyt = |s: usize| {
        let d = s / cells_per_day;
        let rem = s % cells_per_day;
        (rem % cols, rem / cols, d)
    };

    let mut next_robot = vec![0usize; slots];
    let mut day_retired = vec![false; horizon];
    let mut day_count = vec![0usize; horizon];
    let mut active_days = 0usize;
    // sum_{s in S} d(v, s) and sum_{s in S} var(s) d(s, v) per slot
    let mut disp = vec![0.0f64; slots];
    let mut weighted = vec![0.0f64; slots];
    let mut state = SelectionState {
        n: 0,
        pair_sum: 0.0,
        uncertainty: 0.0,
    };

    let mut selected = Vec::new();
    let mut trace = Vec::new();

    loop {
        let mut best: Option<(usize, f64)> = None;
        for s in 0..slots {
            let d = s / cells_per_day;
            if day_retired[d] || next_robot[s] >= robots {
                continue;
            }
            let r = robot_order[d][next_robot[s]];
            let gain = if state.n == 0 {
                var[s] - penalty(d, r)
            } else {
                (state.pair_sum + weighted[s] + var[s] * disp[s]) / state.n as f64
                    - state.uncertainty
                    - penalty(d, r)
            };
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((s, gain));
            }
        }
        let Some((s, gain)) = best else { break };
        if options.stop_at_nonpositive_gain && gain <= 0.0 {
            break;
        }
        let (x, y, d) = slot_xyt(s);
        let robot = robot_order[d][next_robot[s]];
        let factor = DeploymentFactor::new(x, y, robot, ground.t1 + d);

        let feasible = day_count[d] < budget.per_day && (day_count[d] > 0 || active_days < budget.total_days);
        if !feasible {
            day_retired[d] = true;
            let retired = (d * cells_per_day..(d + 1) * cells_per_day)
                .map(|slot| robots - next_robot[slot])
                .sum::<usize>()
                - 1;
            trace.push(TraceEntry {
                factor,
                gain,
                accepted: false,
                retired,
            });
            continue;
        }

        next_robot[s] += 1;
        if day_count[d] == 0 {
            active_days += 1;
        }
        day_count[d] += 1;
        state.pair_sum += weighted[s] + var[s] * disp[s];
        state.n += 1;
        state.uncertainty = if state.n == 1 {
            var[s]
        } else {
            state.pair_sum / (state.n - 1) as f64
        };
        let (sx, sy, sd) = (x as f64, y as f64, d as f64);
        for other in 0..slots {
            let (ox, oy, od) = slot_xyt(other);
            let dx = ox as f64 - sx;
            let dy = oy as f64 - sy;
            let dist = separation_distance((dx * dx + dy * dy).sqrt(), od as f64 - sd, &weights);
            disp[other] += dist;
            weighted[other] += var[s] * dist;
        }
        selected.push(factor);
        trace.push(TraceEntry {
            factor,
            gain,
            accepted: true,
            retired: 0,
        });
    }

    let value = Objective::new(ground, variances, weights).value(&selected)?;
    Ok(GreedyPlan { selected, trace, value })
}
