//! Sequence windows and height normalisation.

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;

/// One training window: `count` inputs `stride` apart, followed by `count`
/// targets continuing the same cadence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSample {
    pub origin: usize,
    pub stride: usize,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
}

impl SequenceSample {
    pub fn new(origin: usize, stride: usize, count: usize) -> Self {
        let at = |j: usize| origin + j * stride;
        Self {
            origin,
            stride,
            inputs: (0..count).map(at).collect(),
            targets: (count..2 * count).map(at).collect(),
        }
    }

    /// Last dataset index the window touches.
    pub fn last_index(&self) -> usize {
        *self.targets.last().expect("count >= 1")
    }

    pub fn gather<'a, T>(&self, frames: &'a [T]) -> (Vec<&'a T>, Vec<&'a T>) {
        (
            self.inputs.iter().map(|&i| &frames[i]).collect(),
            self.targets.iter().map(|&i| &frames[i]).collect(),
        )
    }
}

/// Every window that fits in a dataset of `len` maps, one per origin.
/// Requires `len >= 2 * count * stride`.
pub fn build_sequences(len: usize, stride: usize, count: usize) -> Result<Vec<SequenceSample>> {
    if stride == 0 || count == 0 {
        return Err(Error::Invalid("stride and count must be at least 1".into()));
    }
    let need = 2 * count * stride;
    if len < need {
        return Err(Error::Invalid(format!(
            "dataset of {len} maps is too short for {count} inputs at stride {stride} (need {need})"
        )));
    }
    let span = (2 * count - 1) * stride;
    Ok((0..len - span)
        .map(|origin| SequenceSample::new(origin, stride, count))
        .collect())
}

/// Global affine normalisation to zero mean, unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { mean: 0.0, std: 1.0 };

    /// Statistics over every cell of `maps`. A zero spread falls back to
    /// unit scale so normalising only removes the mean.
    pub fn from_maps<'a>(maps: impl IntoIterator<Item = &'a HeightMap>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let maps: Vec<&HeightMap> = maps.into_iter().collect();
        for m in &maps {
            n += m.len();
            sum += m.values().iter().sum::<f64>();
        }
        if n == 0 {
            return Err(Error::Invalid("cannot compute statistics of no maps".into()));
        }
        let mean = sum / n as f64;
        for m in &maps {
            sq += m.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let mut std = (sq / n as f64).sqrt();
        if !(std > 0.0) {
            log::warn!("training maps have zero variance; normalisation only removes the mean");
            std = 1.0;
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, m: &HeightMap) -> Vec<f64> {
        m.values().iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn denormalize(&self, rows: usize, cols: usize, v: &[f64]) -> Result<HeightMap> {
        HeightMap::new(rows, cols, v.iter().map(|x| x * self.std + self.mean).collect())
    }
}
