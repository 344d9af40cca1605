//! Monte-Carlo dropout prediction.

use std::path::Path;

use rayon::prelude::*;

use super::data::NormStats;
use super::network::{DropoutMask, Network};
use crate::error::{Error, Result};
use crate::heightmap::HeightMap;
use crate::manifest::Manifest;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// Mean prediction per horizon step, mm.
    pub means: Vec<HeightMap>,
    /// Population variance per horizon step, mm².
    pub variances: Vec<HeightMap>,
    pub samples: usize,
}

fn check_inputs(net: &Network, inputs: &[HeightMap]) -> Result<()> {
    let c = &net.config;
    if let Some(m) = inputs.iter().find(|m| m.dims() != (c.rows, c.cols)) {
        return Err(Error::Shape(format!(
            "input map is {}x{}, network expects {}x{}",
            m.rows(),
            m.cols(),
            c.rows,
            c.cols
        )));
    }
    Ok(())
}

/// Single pass without dropout, in mm.
pub fn predict(net: &Network, stats: &NormStats, inputs: &[HeightMap]) -> Result<Vec<HeightMap>> {
    check_inputs(net, inputs)?;
    let x: Vec<Vec<f64>> = inputs.iter().map(|m| stats.normalize(m)).collect();
    net.forward(&x, None)?
        .iter()
        .map(|y| stats.denormalize(net.config.rows, net.config.cols, y))
        .collect()
}

/// The `k` raw stochastic passes in mm. Pass `i` draws its mask from RNG
/// stream `i` of `seed`, so the result does not depend on scheduling.
pub fn mc_samples(
    net: &Network,
    stats: &NormStats,
    inputs: &[HeightMap],
    k: usize,
    p: f64,
    seed: u64,
) -> Result<Vec<Vec<HeightMap>>> {
    if k == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Invalid(format!("dropout must lie in [0, 1), got {p}")));
    }
    check_inputs(net, inputs)?;
    let x: Vec<Vec<f64>> = inputs.iter().map(|m| stats.normalize(m)).collect();
    let (rows, cols) = (net.config.rows, net.config.cols);
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mask = DropoutMask::sample(&net.config, p, &mut rng::stream(seed, i as u64));
            net.forward(&x, Some(&mask))?
                .iter()
                .map(|y| stats.denormalize(rows, cols, y))
                .collect()
        })
        .collect()
}

/// Elementwise mean and population variance over samples.
pub fn aggregate(samples: &[Vec<HeightMap>]) -> Result<PredictionResult> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Invalid("no samples to aggregate".into()))?;
    let k = samples.len() as f64;
    let mut means = Vec::with_capacity(first.len());
    let mut variances = Vec::with_capacity(first.len());
    for (step, proto) in first.iter().enumerate() {
        let (rows, cols) = proto.dims();
        if samples.iter().any(|s| s.len() != first.len() || s[step].dims() != (rows, cols)) {
            return Err(Error::Shape("samples disagree in shape".into()));
        }
        let mut mean = vec![0.0; rows * cols];
        for s in samples {
            mean.iter_mut().zip(s[step].values()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= k);
        let mut var = vec![0.0; rows * cols];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s[step].values()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= k);
        means.push(HeightMap::new(rows, cols, mean)?);
        variances.push(HeightMap::new(rows, cols, var)?);
    }
    Ok(PredictionResult {
        means,
        variances,
        samples: samples.len(),
    })
}

pub fn mc_predict(
    net: &Network,
    stats: &NormStats,
    inputs: &[HeightMap],
    k: usize,
    p: f64,
    seed: u64,
) -> Result<PredictionResult> {
    aggregate(&mc_samples(net, stats, inputs, k, p, seed)?)
}

/// Writes `mean_XX.hmap`, `var_XX.hmap` and `manifest.txt` into `dir`.
pub fn write_prediction(dir: &Path, result: &PredictionResult, manifest: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (m, v)) in result.means.iter().zip(&result.variances).enumerate() {
        m.write_hmap(dir.join(format!("mean_{i:02}.hmap")))?;
        v.write_hmap(dir.join(format!("var_{i:02}.hmap")))?;
    }
    let mut manifest = manifest.clone();
    manifest.set("samples", result.samples.to_string());
    manifest.set("steps", result.means.len().to_string());
    manifest.set("variance", "population");
    manifest.write(dir.join("manifest.txt"))
}

pub fn read_prediction(dir: &Path) -> Result<PredictionResult> {
    let means = crate::heightmap::read_hmap_dir(dir, "mean_")?;
    let variances = crate::heightmap::read_hmap_dir(dir, "var_")?;
    if means.len() != variances.len() || means.is_empty() {
        return Err(Error::Invalid(format!(
            "{} mean maps and {} variance maps in {}",
            means.len(),
            variances.len(),
            dir.display()
        )));
    }
    let manifest = Manifest::read(dir.join("manifest.txt"))?;
    let samples = manifest
        .get("samples")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    Ok(PredictionResult {
        means,
        variances,
        samples,
    })
}
