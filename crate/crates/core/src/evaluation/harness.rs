//! Policy comparison: plan with each method on predicted uncertainty,
//! measure, fold the measurements into the prediction and re-predict.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::metrics::mean_abs_error;
use super::policies::{collect_measurements, fold_observations, heuristic_policy, random_policy, FoldRule};
use crate::error::{Error, Result};
use crate::heightmap::HeightMap;
use crate::manifest::Manifest;
use crate::planner::{
    greedy_plan, is_independent, write_policy, BudgetConstraint, DeploymentFactor, GreedyOptions,
    GroundSet, Objective, PlannerWeights, PolicyFile, TraceEntry, VarianceSet,
};
use crate::predictor::{
    build_sequences, mc_predict, predict, train, NetConfig, Network, NormStats, SequenceSample,
    TrainConfig, TrainReport,
};
use crate::rng;

/// Candidate total-day budgets.
pub const TOTAL_DAY_CHOICES: std::ops::RangeInclusive<usize> = 5..=12;
/// Candidate per-day budgets (perfect squares).
pub const PER_DAY_CHOICES: [usize; 7] = [4, 9, 16, 25, 36, 49, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub seed: u64,
    /// ℓ: maximum number of deployment days.
    pub total_days: usize,
    /// ℓ_t: maximum deployments per day.
    pub per_day: usize,
    pub horizon: usize,
    pub weights: PlannerWeights,
    /// One wait-penalty weight per robot; there are `per_day * total_days`.
    pub robot_weights: Vec<f64>,
}

impl TrialConfig {
    pub fn sample<R: Rng + ?Sized>(seed: u64, horizon: usize, weights: PlannerWeights, rng: &mut R) -> Self {
        let total_days = rng.gen_range(TOTAL_DAY_CHOICES);
        let per_day = PER_DAY_CHOICES[rng.gen_range(0..PER_DAY_CHOICES.len())];
        let robot_weights = (0..total_days * per_day).map(|_| rng.gen_range(0.5..=1.5)).collect();
        Self {
            seed,
            total_days,
            per_day,
            horizon,
            weights,
            robot_weights,
        }
    }

    pub fn budget(&self) -> Result<BudgetConstraint> {
        BudgetConstraint::new(self.per_day, self.total_days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Intermittent,
    Heuristic,
    Random,
    NoUpdate,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Intermittent, Method::Heuristic, Method::Random, Method::NoUpdate];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Intermittent => "intermittent",
            Method::Heuristic => "heuristic",
            Method::Random => "random",
            Method::NoUpdate => "no_update",
        }
    }
}

/// A trained network with the normalisation it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub net: Network,
    pub stats: NormStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConfig {
    pub trials: usize,
    pub seed: u64,
    /// δ: dataset steps between consecutive maps of a window.
    pub stride: usize,
    /// α: maps per input window and per prediction.
    pub window: usize,
    /// Leading steps of the re-prediction that are scored.
    pub repredict_steps: usize,
    pub mc_samples: usize,
    pub dropout: f64,
    /// Measurement noise, mm.
    pub meas_std: f64,
    pub weights: PlannerWeights,
    pub fold: FoldRule,
    /// Smallest window origin a trial may use.
    pub test_start: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            stride: 2,
            window: 15,
            repredict_steps: 10,
            mc_samples: 30,
            dropout: 0.4,
            meas_std: 4.0,
            weights: PlannerWeights::default(),
            fold: FoldRule::Spread(3.0),
            test_start: 0,
        }
    }
}

impl ComparisonConfig {
    /// Dataset steps spanned by one trial starting at its origin.
    pub fn span(&self) -> usize {
        (2 * self.window + self.repredict_steps - 1) * self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub trial: usize,
    pub method: Method,
    pub f_value: f64,
    pub uncertainty: f64,
    pub wait_penalty: f64,
    /// Mean absolute re-prediction error, mm.
    pub error_mm: f64,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub config: TrialConfig,
    pub origin: usize,
    pub rows: Vec<ComparisonRow>,
    pub policies: Vec<(Method, PolicyFile)>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub trials: Vec<TrialOutcome>,
}

impl Comparison {
    pub fn rows(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.trials.iter().flat_map(|t| &t.rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,method,f_value,uncertainty_term,wait_penalty,mean_pred_error_mm\n");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.trial,
                r.method.name(),
                r.f_value,
                r.uncertainty,
                r.wait_penalty,
                r.error_mm
            );
        }
        out
    }

    /// Per-method means of `(f_value, error_mm)`.
    pub fn method_means(&self, method: Method) -> (f64, f64) {
        let rows: Vec<&ComparisonRow> = self.rows().filter(|r| r.method == method).collect();
        let n = rows.len().max(1) as f64;
        (
            rows.iter().map(|r| r.f_value).sum::<f64>() / n,
            rows.iter().map(|r| r.error_mm).sum::<f64>() / n,
        )
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("method mean_f mean_error_mm\n");
        for m in Method::ALL {
            let (f, e) = self.method_means(m);
            let _ = writeln!(out, "{} {f:.4} {e:.4}", m.name());
        }
        out
    }
}

fn maps_at(maps: &[HeightMap], start: usize, stride: usize, count: usize) -> Vec<HeightMap> {
    (0..count).map(|j| maps[start + j * stride].clone()).collect()
}

fn policy_file(method: Method, trial: &TrialConfig, selected: Vec<TraceEntry>) -> PolicyFile {
    let mut header = Manifest::new();
    header.set("method", method.name());
    header.set("seed", trial.seed);
    header.set("per_day", trial.per_day);
    header.set("total_days", trial.total_days);
    header.set("w1", trial.weights.w1);
    header.set("w2", trial.weights.w2);
    header.set("w3", trial.weights.w3);
    PolicyFile {
        header,
        entries: selected,
    }
}

fn accepted(factors: &[DeploymentFactor]) -> Vec<TraceEntry> {
    factors
        .iter()
        .map(|&factor| TraceEntry {
            factor,
            gain: 0.0,
            accepted: true,
            retired: 0,
        })
        .collect()
}

/// One trial on `maps` (mm). Planner time indices are prediction steps, so
/// the horizon starts at `t1 = 0`.
pub fn run_trial(
    forecaster: &Forecaster,
    maps: &[HeightMap],
    cfg: &ComparisonConfig,
    trial: usize,
) -> Result<TrialOutcome> {
    let last_origin = maps
        .len()
        .checked_sub(cfg.span())
        .filter(|&o| o >= cfg.test_start)
        .ok_or_else(|| {
            Error::Invalid(format!(
                "{} maps leave no trial window of {} steps after origin {}",
                maps.len(),
                cfg.span(),
                cfg.test_start
            ))
        })?;
    let seed = rng::stream(cfg.seed, trial as u64).gen::<u64>();
    let mut rng = rng::seeded(seed);
    let origin = rng.gen_range(cfg.test_start..=last_origin);
    let tc = TrialConfig::sample(seed, cfg.window, cfg.weights, &mut rng);
    let budget = tc.budget()?;
    let (a, d) = (cfg.window, cfg.stride);

    let inputs = maps_at(maps, origin, d, a);
    let truth = maps_at(maps, origin + a * d, d, a);
    let later = maps_at(maps, origin + 2 * a * d, d, cfg.repredict_steps);
    let pred = mc_predict(&forecaster.net, &forecaster.stats, &inputs, cfg.mc_samples, cfg.dropout, seed)?;

    let (rows, cols) = inputs[0].dims();
    let ground = GroundSet::new(rows, cols, tc.robot_weights.clone(), 0, a)?;
    let variances = VarianceSet::new(0, pred.variances.clone())?;
    let objective = Objective::new(&ground, &variances, tc.weights);

    let greedy = greedy_plan(&ground, &variances, tc.weights, budget, GreedyOptions::default())?;
    let plans: Vec<(Method, Vec<DeploymentFactor>, PolicyFile)> = vec![
        (
            Method::Intermittent,
            greedy.selected.clone(),
            policy_file(Method::Intermittent, &tc, greedy.trace.clone()),
        ),
        {
            let p = heuristic_policy(&ground, &budget);
            let file = policy_file(Method::Heuristic, &tc, accepted(&p));
            (Method::Heuristic, p, file)
        },
        {
            let p = random_policy(&ground, &budget, &mut rng);
            let file = policy_file(Method::Random, &tc, accepted(&p));
            (Method::Random, p, file)
        },
        (Method::NoUpdate, Vec::new(), policy_file(Method::NoUpdate, &tc, Vec::new())),
    ];

    let mut out = Vec::with_capacity(plans.len());
    let mut files = Vec::with_capacity(plans.len());
    for (method, policy, file) in plans {
        debug_assert!(is_independent(&policy, &budget));
        let b = objective.breakdown(&policy)?;
        let obs = collect_measurements(&policy, &truth, 0, cfg.meas_std, &mut rng)?;
        let mut window = pred.means.clone();
        let folded = fold_observations(&pred.means, 0, &obs, cfg.fold)?;
        *window.last_mut().expect("window >= 1") = folded;
        let again = predict(&forecaster.net, &forecaster.stats, &window)?;
        let error_mm = mean_abs_error(&later, &again[..cfg.repredict_steps])?;
        out.push(ComparisonRow {
            trial,
            method,
            f_value: b.value(),
            uncertainty: b.uncertainty,
            wait_penalty: b.wait_penalty,
            error_mm,
        });
        files.push((method, file));
    }
    Ok(TrialOutcome {
        trial,
        config: tc,
        origin,
        rows: out,
        policies: files,
    })
}

pub fn run_comparison(forecaster: &Forecaster, maps: &[HeightMap], cfg: &ComparisonConfig) -> Result<Comparison> {
    if cfg.repredict_steps == 0 || cfg.repredict_steps > cfg.window {
        return Err(Error::Invalid(format!(
            "re-prediction steps must lie in 1..={}, got {}",
            cfg.window, cfg.repredict_steps
        )));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(forecaster, maps, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { trials })
}

/// Writes `summary.csv` and one planner-format policy file per trial and
/// method under `policies/`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    let pdir = dir.join("policies");
    std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    let csv = dir.join("summary.csv");
    std::fs::write(&csv, cmp.to_csv()).map_err(|e| Error::io(&csv, e))?;
    for t in &cmp.trials {
        for (m, file) in &t.policies {
            write_policy(pdir.join(format!("trial_{:03}_{}.txt", t.trial, m.name())), file)?;
        }
    }
    Ok(())
}

/// Which windows of a dataset train the forecaster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastSetup {
    pub stride: usize,
    pub window: usize,
    /// Training windows must end before this dataset index.
    pub train_end: usize,
    /// Upper bound on windows used (evenly spaced over the valid origins).
    pub max_windows: usize,
    /// Every n-th selected window goes to validation.
    pub val_every: usize,
}

/// Selects windows, normalises with training-window statistics and trains
/// a fresh network.
pub fn fit_forecaster(
    maps: &[HeightMap],
    setup: &ForecastSetup,
    net_cfg: NetConfig,
    train_cfg: &TrainConfig,
) -> Result<(Forecaster, TrainReport)> {
    let end = setup.train_end.min(maps.len());
    let all = build_sequences(end, setup.stride, setup.window)?;
    let take = setup.max_windows.clamp(2, all.len().max(2)).min(all.len());
    let chosen: Vec<SequenceSample> = (0..take)
        .map(|i| all[if take > 1 { i * (all.len() - 1) / (take - 1) } else { 0 }].clone())
        .collect();
    let every = setup.val_every.max(2);
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (i, s) in chosen.into_iter().enumerate() {
        if i % every == every - 1 {
            va.push(s);
        } else {
            tr.push(s);
        }
    }
    if va.is_empty() {
        va.push(tr.pop().ok_or_else(|| Error::Invalid("no training windows".into()))?);
    }
    let used = tr.iter().map(SequenceSample::last_index).max().unwrap_or(0) + 1;
    let stats = NormStats::from_maps(&maps[..used])?;
    let frames: Vec<Vec<f64>> = maps[..end].iter().map(|m| stats.normalize(m)).collect();
    let mut net = Network::new(net_cfg, &mut rng::stream(train_cfg.seed, 0))?;
    let report = train(&mut net, &frames, &tr, &va, train_cfg)?;
    Ok((Forecaster { net, stats }, report))
}
