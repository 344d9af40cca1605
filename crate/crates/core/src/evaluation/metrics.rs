//! Prediction error and uncertainty metrics.

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;
use crate::predictor::PredictionResult;

/// Cells whose true height is below this (mm) are left out of MAPE.
pub const MAPE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when every cell was masked.
    pub mape: Option<f64>,
    pub astd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub overall: StepMetrics,
    pub per_step: Vec<StepMetrics>,
    /// Number of prediction instances `H`.
    pub instances: usize,
    /// Cells left out of MAPE because the truth was (near) zero.
    pub mape_skipped: usize,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sq: f64,
    abs: f64,
    pct: f64,
    pct_n: usize,
    var: f64,
    n: usize,
    skipped: usize,
}

impl Acc {
    fn add(&mut self, truth: &HeightMap, mean: &HeightMap, var: &HeightMap) {
        for ((&y, &p), &v) in truth.values().iter().zip(mean.values()).zip(var.values()) {
            let e = y - p;
            self.sq += e * e;
            self.abs += e.abs();
            self.var += v;
            self.n += 1;
            if y.abs() < MAPE_FLOOR {
                self.skipped += 1;
            } else {
                self.pct += (e / y).abs();
                self.pct_n += 1;
            }
        }
    }

    fn finish(&self) -> StepMetrics {
        let n = self.n as f64;
        StepMetrics {
            rmse: (self.sq / n).sqrt(),
            mae: self.abs / n,
            mape: (self.pct_n > 0).then(|| 100.0 * self.pct / self.pct_n as f64),
            astd: (self.var / n).sqrt(),
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.sq += o.sq;
        self.abs += o.abs;
        self.pct += o.pct;
        self.pct_n += o.pct_n;
        self.var += o.var;
        self.n += o.n;
        self.skipped += o.skipped;
    }
}

/// RMSE, MAE, MAPE and ASTD over `H` instances. Every (instance, step,
/// cell) triple carries equal weight; the per-step breakdown averages over
/// instances and cells only.
pub fn metrics(truth: &[Vec<HeightMap>], pred: &[PredictionResult]) -> Result<MetricReport> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} truth instances vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let steps = truth[0].len();
    let mut per_step = vec![Acc::default(); steps];
    for (h, (ys, p)) in truth.iter().zip(pred).enumerate() {
        if ys.len() != steps || p.means.len() != steps || p.variances.len() != steps {
            return Err(Error::Shape(format!("instance {h} has a different step count")));
        }
        for (t, y) in ys.iter().enumerate() {
            if !y.same_dims(&p.means[t]) || !y.same_dims(&p.variances[t]) {
                return Err(Error::Shape(format!("instance {h} step {t}: map dims differ")));
            }
            per_step[t].add(y, &p.means[t], &p.variances[t]);
        }
    }
    let mut total = Acc::default();
    per_step.iter().for_each(|a| total.merge(a));
    Ok(MetricReport {
        overall: total.finish(),
        per_step: per_step.iter().map(Acc::finish).collect(),
        instances: truth.len(),
        mape_skipped: total.skipped,
    })
}

/// Mean absolute difference over all cells of paired map sequences.
pub fn mean_abs_error(truth: &[HeightMap], pred: &[HeightMap]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truth maps vs {} predictions", truth.len(), pred.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (y, p) in truth.iter().zip(pred) {
        if !y.same_dims(p) {
            return Err(Error::Shape("map dims differ".into()));
        }
        sum += y.values().iter().zip(p.values()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        n += y.len();
    }
    Ok(sum / n as f64)
}
