//! Baseline deployment policies and simulated measurements.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;
use crate::planner::{BudgetConstraint, DeploymentFactor, GroundSet};

/// Uniform random factors, each drawn from the factors that keep the set
/// independent, until none remain.
pub fn random_policy<R: Rng + ?Sized>(
    ground: &GroundSet,
    budget: &BudgetConstraint,
    rng: &mut R,
) -> Vec<DeploymentFactor> {
    let per_day_slots = ground.rows * ground.cols * ground.robots();
    let mut chosen: HashSet<DeploymentFactor> = HashSet::new();
    let mut count = vec![0usize; ground.horizon];
    let mut active = 0usize;
    let mut out = Vec::new();
    loop {
        // feasible factors left on each day
        let room: Vec<usize> = (0..ground.horizon)
            .map(|d| {
                let open = count[d] < budget.per_day && (count[d] > 0 || active < budget.total_days);
                if open {
                    per_day_slots - count[d]
                } else {
                    0
                }
            })
            .collect();
        let total: usize = room.iter().sum();
        if total == 0 {
            break;
        }
        let mut pick = rng.gen_range(0..total);
        let day = room
            .iter()
            .position(|&r| {
                if pick < r {
                    true
                } else {
                    pick -= r;
                    false
                }
            })
            .expect("pick < total");
        let t = ground.t1 + day;
        let f = loop {
            let x = rng.gen_range(0..ground.cols);
            let y = rng.gen_range(0..ground.rows);
            let r = rng.gen_range(0..ground.robots());
            let f = DeploymentFactor::new(x, y, r, t);
            if !chosen.contains(&f) {
                break f;
            }
        };
        if count[day] == 0 {
            active += 1;
        }
        count[day] += 1;
        chosen.insert(f);
        out.push(f);
    }
    out
}

/// Fixed-interval days `t1, t1 + Δ, ...` with `Δ = max(1, ⌊horizon/ℓ⌋)`;
/// each day covers a `g x g` lattice (`g = ⌊√ℓ_t⌋`) at
/// `⌊(k + 0.5)·n/g⌋`, with leftover sensors at the centre cell. Robots
/// are assigned round-robin across the whole plan.
pub fn heuristic_policy(ground: &GroundSet, budget: &BudgetConstraint) -> Vec<DeploymentFactor> {
    let interval = (ground.horizon / budget.total_days).max(1);
    let days: Vec<usize> = (0..budget.total_days)
        .map(|k| k * interval)
        .take_while(|&d| d < ground.horizon)
        .collect();
    let g = ((budget.per_day as f64).sqrt().floor() as usize).max(1);
    let lattice = |k: usize, n: usize| (((k as f64 + 0.5) * n as f64 / g as f64).floor() as usize).min(n - 1);
    let mut cells = Vec::with_capacity(budget.per_day);
    for i in 0..g {
        for j in 0..g {
            cells.push((lattice(j, ground.cols), lattice(i, ground.rows)));
        }
    }
    cells.truncate(budget.per_day);
    while cells.len() < budget.per_day {
        cells.push((ground.cols / 2, ground.rows / 2));
    }
    let robots = ground.robots();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut next_robot = 0;
    for d in days {
        for &(x, y) in &cells {
            let f = DeploymentFactor::new(x, y, next_robot % robots, ground.t1 + d);
            next_robot += 1;
            if seen.insert(f) {
                out.push(f);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub factor: DeploymentFactor,
    /// Measured height, mm.
    pub value: f64,
}

/// Reads `truth[t - t1]` at each factor and adds N(0, `std`²) noise.
pub fn collect_measurements<R: Rng + ?Sized>(
    policy: &[DeploymentFactor],
    truth: &[HeightMap],
    t1: usize,
    std: f64,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    policy
        .iter()
        .map(|f| {
            let step = f.t.checked_sub(t1).filter(|&s| s < truth.len()).ok_or(
                Error::OutOfRange {
                    index: f.t,
                    len: t1 + truth.len(),
                },
            )?;
            let map = &truth[step];
            if f.y >= map.rows() || f.x >= map.cols() {
                return Err(Error::OutOfRange {
                    index: f.y * map.cols() + f.x,
                    len: map.len(),
                });
            }
            let noise = if std > 0.0 {
                std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            Ok(Observation {
                factor: *f,
                value: map.get(f.y, f.x) + noise,
            })
        })
        .collect()
}

/// How observations enter the last map of the re-prediction window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FoldRule {
    /// Replace the cell by the measured height.
    Overwrite,
    /// Replace the cell by the measured height moved to the window's last
    /// time along the predicted trajectory: `pred_last + (obs - pred_obs)`.
    #[default]
    Carry,
    /// Carried residuals `obs - pred_obs` of the observed cells, smoothed
    /// over the whole map with a Gaussian kernel of this bandwidth (cells)
    /// and added to the last map.
    Spread(f64),
}

impl std::str::FromStr for FoldRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overwrite" => Ok(FoldRule::Overwrite),
            "carry" => Ok(FoldRule::Carry),
            _ => match s.strip_prefix("spread:").map(str::parse::<f64>) {
                Some(Ok(b)) if b > 0.0 && b.is_finite() => Ok(FoldRule::Spread(b)),
                _ => Err(Error::Parse(format!(
                    "unknown fold rule {s:?} (expected overwrite, carry or spread:<cells>)"
                ))),
            },
        }
    }
}

/// Folds observations into the last of `window` (predicted maps for times
/// `t1..t1+len`). Per cell the most recent observation wins; ties keep the
/// first in policy order.
pub fn fold_observations(
    window: &[HeightMap],
    t1: usize,
    obs: &[Observation],
    rule: FoldRule,
) -> Result<HeightMap> {
    let last = window
        .last()
        .ok_or_else(|| Error::Invalid("empty prediction window".into()))?;
    let mut out = last.clone();
    let mut stamp: Vec<Option<usize>> = vec![None; last.len()];
    for o in obs {
        let f = o.factor;
        let step = f.t.checked_sub(t1).filter(|&s| s < window.len()).ok_or(Error::OutOfRange {
            index: f.t,
            len: t1 + window.len(),
        })?;
        if f.y >= last.rows() || f.x >= last.cols() {
            return Err(Error::OutOfRange {
                index: f.y * last.cols() + f.x,
                len: last.len(),
            });
        }
        let i = f.y * last.cols() + f.x;
        if stamp[i].is_some_and(|s| s >= step) {
            continue;
        }
        stamp[i] = Some(step);
        let v = match rule {
            FoldRule::Overwrite => o.value,
            FoldRule::Carry | FoldRule::Spread(_) => last.get(f.y, f.x) + o.value - window[step].get(f.y, f.x),
        };
        out.set(f.y, f.x, v);
    }
    if let FoldRule::Spread(bw) = rule {
        let cols = last.cols();
        let residuals: Vec<(f64, f64, f64)> = stamp
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| ((i / cols) as f64, (i % cols) as f64, out.values()[i] - last.values()[i]))
            .collect();
        if residuals.is_empty() {
            return Ok(out);
        }
        let inv = 1.0 / (2.0 * bw * bw);
        out = HeightMap::from_fn(last.rows(), cols, |r, c| {
            let (mut num, mut den) = (0.0, 0.0);
            for &(y, x, d) in &residuals {
                let k = (-((y - r as f64).powi(2) + (x - c as f64).powi(2)) * inv).exp();
                num += k * d;
                den += k;
            }
            last.get(r, c) + if den > 1e-300 { num / den } else { 0.0 }
        });
    }
    Ok(out)
}
