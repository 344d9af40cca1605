//! Spatiotemporal heightmap synthesis from an average-height series.
//!
//! A fixed set of Gaussian kernels is placed over the field; their weights
//! drift over time along squared-exponential Gaussian-process sample paths.
//! Each time slice of the resulting mixture is shifted so its spatial mean
//! equals the historical average for that day, clamped at zero, and
//! perturbed with small Gaussian noise.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;
use crate::manifest::Manifest;
use crate::rng;

/// Kernel values below this are flushed to zero.
const KERNEL_FLOOR: f64 = 1e-300;
const GP_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalSeries {
    pub values: Vec<f64>,
    pub start_index: i64,
}

impl HistoricalSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("historical series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite height at entry {i}")));
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::Invalid(format!(
                "negative height {} at entry {i}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            start_index: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {line:?}: {e}", lineno + 1)))?;
            values.push(v);
        }
        Self::new(values)
    }
}

pub fn load_historical_series(path: impl AsRef<Path>) -> Result<HistoricalSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    HistoricalSeries::parse(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFunction {
    /// Kernel centre in field metres.
    pub center: (f64, f64),
    /// Length-scale in metres.
    pub length_scale: f64,
}

impl BasisFunction {
    pub fn new(center: (f64, f64), length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "basis length-scale must be positive, got {length_scale}"
            )));
        }
        Ok(Self {
            center,
            length_scale,
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let v = (-(dx * dx + dy * dy) / (2.0 * self.length_scale * self.length_scale)).exp();
        if v < KERNEL_FLOOR {
            0.0
        } else {
            v
        }
    }
}

/// One kernel together with the mean of its weight trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub basis: BasisFunction,
    pub initial_weight: f64,
}

/// The seven-kernel layout used for the reference 10 m x 10 m pasture.
pub fn reference_bases() -> Vec<BasisSpec> {
    const ROWS: [((f64, f64), f64, f64); 7] = [
        ((5.0, 5.0), 0.13, 4.17),
        ((3.0, 4.0), 0.13, 4.17),
        ((2.0, 1.5), 0.15, 2.50),
        ((8.0, 8.0), 0.18, 6.67),
        ((8.0, 1.5), 0.13, 3.33),
        ((1.0, 1.0), 0.13, 3.33),
        ((1.0, 9.0), 0.25, 4.17),
    ];
    ROWS.iter()
        .map(|&(center, length_scale, initial_weight)| BasisSpec {
            basis: BasisFunction {
                center,
                length_scale,
            },
            initial_weight,
        })
        .collect()
}

/// Grid geometry: `rows` x `cols` cells covering `width_m` x `height_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub width_m: f64,
    pub height_m: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, width_m: f64, height_m: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("grid dims must be >= 1, got {rows}x{cols}")));
        }
        if !(width_m > 0.0 && height_m > 0.0) {
            return Err(Error::Invalid("field extent must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            width_m,
            height_m,
        })
    }

    pub fn cell_width(&self) -> f64 {
        self.width_m / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.height_m / self.rows as f64
    }

    /// Field coordinates (m) of the centre of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_width(),
            (row as f64 + 0.5) * self.cell_height(),
        )
    }
}

/// Hyperparameters of the squared-exponential GP driving each weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    /// Length-scale in time steps.
    pub length_scale: f64,
    pub variance: GpVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GpVariance {
    /// Same marginal variance for every basis.
    Absolute(f64),
    /// Per-basis variance `(fraction * initial_weight)^2`.
    RelativeToWeight(f64),
}

impl GpParams {
    /// 10% of the horizon for the length-scale and a standard deviation of
    /// a quarter of each basis' initial weight.
    pub fn default_for_horizon(horizon: usize) -> Self {
        Self {
            length_scale: (0.1 * horizon as f64).max(1.0),
            variance: GpVariance::RelativeToWeight(0.25),
        }
    }

    fn variance_for(&self, initial_weight: f64) -> f64 {
        match self.variance {
            GpVariance::Absolute(v) => v,
            GpVariance::RelativeToWeight(frac) => (frac * initial_weight).powi(2),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "GP length-scale must be positive, got {}",
                self.length_scale
            )));
        }
        let v = match self.variance {
            GpVariance::Absolute(v) | GpVariance::RelativeToWeight(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!(
                "GP variance parameter must be non-negative, got {v}"
            )));
        }
        Ok(())
    }
}

/// Per-basis weight sequences `w_i(t)`, `t = 0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrajectories {
    pub weights: Vec<Vec<f64>>,
    pub gp: GpParams,
}

impl WeightTrajectories {
    pub fn basis_count(&self) -> usize {
        self.weights.len()
    }

    pub fn horizon(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

fn se_cholesky(horizon: usize, length_scale: f64) -> Result<DMatrix<f64>> {
    // Unit-variance correlation; scaled per basis afterwards.
    let mut jitter = GP_JITTER;
    loop {
        let k = DMatrix::from_fn(horizon, horizon, |i, j| {
            let d = i as f64 - j as f64;
            let mut v = (-d * d / (2.0 * length_scale * length_scale)).exp();
            if i == j {
                v += jitter;
            }
            v
        });
        if let Some(chol) = k.cholesky() {
            if jitter > GP_JITTER {
                log::warn!("GP covariance needed jitter {jitter:e} to factorize");
            }
            return Ok(chol.l());
        }
        jitter *= 10.0;
        if jitter > 1e-2 {
            return Err(Error::Invalid(
                "GP covariance could not be factorized".into(),
            ));
        }
    }
}

pub fn sample_weight_trajectories<R: Rng + ?Sized>(
    basis_count: usize,
    horizon: usize,
    gp: GpParams,
    initial_weights: &[f64],
    rng: &mut R,
) -> Result<WeightTrajectories> {
    if basis_count == 0 || horizon == 0 {
        return Err(Error::Invalid("need at least one basis and one time step".into()));
    }
    if initial_weights.len() != basis_count {
        return Err(Error::Shape(format!(
            "{} initial weights for {basis_count} bases",
            initial_weights.len()
        )));
    }
    gp.validate()?;
    let chol = se_cholesky(horizon, gp.length_scale)?;
    let weights = initial_weights
        .iter()
        .map(|&mean| {
            let z = DVector::from_fn(horizon, |_, _| rng.sample::<f64, _>(StandardNormal));
            let var = gp.variance_for(mean);
            if var == 0.0 {
                return vec![mean; horizon];
            }
            let path = &chol * z;
            let sd = var.sqrt();
            path.iter().map(|v| mean + sd * v).collect()
        })
        .collect();
    Ok(WeightTrajectories { weights, gp })
}

#[derive(Debug, Clone)]
pub struct DynamicField {
    bases: Vec<BasisFunction>,
    trajectories: WeightTrajectories,
    grid: GridSpec,
    /// `basis_grid[i][r * cols + c]` = basis `i` at the centre of `(r, c)`.
    basis_grid: Vec<Vec<f64>>,
}

impl DynamicField {
    pub fn new(
        bases: Vec<BasisFunction>,
        trajectories: WeightTrajectories,
        grid: GridSpec,
    ) -> Result<Self> {
        if bases.len() != trajectories.basis_count() {
            return Err(Error::Shape(format!(
                "{} bases but {} weight trajectories",
                bases.len(),
                trajectories.basis_count()
            )));
        }
        let basis_grid = bases
            .iter()
            .map(|b| {
                let mut v = Vec::with_capacity(grid.rows * grid.cols);
                for r in 0..grid.rows {
                    for c in 0..grid.cols {
                        let (x, y) = grid.cell_center(r, c);
                        v.push(b.eval(x, y));
                    }
                }
                v
            })
            .collect();
        Ok(Self {
            bases,
            trajectories,
            grid,
            basis_grid,
        })
    }

    pub fn bases(&self) -> &[BasisFunction] {
        &self.bases
    }

    pub fn trajectories(&self) -> &WeightTrajectories {
        &self.trajectories
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.horizon()
    }

    /// Mixture value at every cell centre for time index `t`.
    pub fn eval(&self, t: usize) -> Result<HeightMap> {
        let horizon = self.horizon();
        if t >= horizon {
            return Err(Error::OutOfRange {
                index: t,
                len: horizon,
            });
        }
        let mut values = vec![0.0; self.grid.rows * self.grid.cols];
        for (basis_vals, traj) in self.basis_grid.iter().zip(&self.trajectories.weights) {
            let w = traj[t];
            for (out, b) in values.iter_mut().zip(basis_vals) {
                *out += w * b;
            }
        }
        HeightMap::new(self.grid.rows, self.grid.cols, values)
    }
}

pub fn eval_field(field: &DynamicField, t: usize) -> Result<HeightMap> {
    field.eval(t)
}

/// Shifts each map uniformly so its mean equals the matching historical value.
pub fn adjust_to_history(raw: &[HeightMap], history: &HistoricalSeries) -> Result<Vec<HeightMap>> {
    if raw.len() != history.len() {
        return Err(Error::Shape(format!(
            "{} maps but {} historical values",
            raw.len(),
            history.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(&history.values)
        .map(|(m, &h)| {
            let shift = h - m.mean();
            m.map(|v| v + shift)
        })
        .collect())
}

/// Clamps negatives to zero, adds i.i.d. `N(0, noise_std^2)` noise and clamps
/// again. Noise draws follow row-major cell order.
pub fn truncate_and_noise<R: Rng + ?Sized>(map: &HeightMap, noise_std: f64, rng: &mut R) -> HeightMap {
    assert!(noise_std >= 0.0, "noise_std must be non-negative");
    let mut out = map.map(|v| v.max(0.0));
    if noise_std > 0.0 {
        for v in out.values_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v + noise_std * n).max(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub bases: Vec<BasisSpec>,
    /// Time-step length-scale of the weight GP; `None` means 10% of the horizon.
    pub gp_length_scale: Option<f64>,
    pub gp_variance: GpVariance,
    pub noise_std: f64,
    /// Disable to keep negative heights (useful when checking the mean match).
    pub truncate: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                rows: 100,
                cols: 100,
                width_m: 10.0,
                height_m: 10.0,
            },
            bases: reference_bases(),
            gp_length_scale: None,
            gp_variance: GpVariance::RelativeToWeight(0.25),
            noise_std: 2.0,
            truncate: true,
        }
    }
}

impl SynthConfig {
    /// Multiplies every basis length-scale. Small grids need wider bumps to
    /// show any spatial structure at all.
    pub fn with_length_scale_factor(mut self, factor: f64) -> Self {
        for b in &mut self.bases {
            b.basis.length_scale *= factor;
        }
        self
    }

    pub fn gp_params(&self, horizon: usize) -> GpParams {
        let mut gp = GpParams::default_for_horizon(horizon);
        if let Some(ls) = self.gp_length_scale {
            gp.length_scale = ls;
        }
        gp.variance = self.gp_variance;
        gp
    }

    fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.rows, self.grid.cols, self.grid.width_m, self.grid.height_m)?;
        if self.bases.is_empty() {
            return Err(Error::Invalid("at least one basis function is required".into()));
        }
        for b in &self.bases {
            BasisFunction::new(b.basis.center, b.basis.length_scale)?;
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Invalid(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Final dataset, one map per historical entry.
    pub maps: Vec<HeightMap>,
    /// History-matched maps before truncation and noise.
    pub adjusted: Vec<HeightMap>,
    pub field: DynamicField,
    pub manifest: Manifest,
}

/// Full synthesis pipeline; a pure function of `(cfg, history, seed)`.
///
/// Stream 0 of the seed drives the weight GP, stream `t + 1` the noise of
/// time index `t`.
pub fn synthesize_dataset(cfg: &SynthConfig, history: &HistoricalSeries, seed: u64) -> Result<SynthOutput> {
    cfg.validate()?;
    let horizon = history.len();
    let gp = cfg.gp_params(horizon);
    let initial: Vec<f64> = cfg.bases.iter().map(|b| b.initial_weight).collect();
    let mut gp_rng = rng::stream(seed, 0);
    let trajectories = sample_weight_trajectories(cfg.bases.len(), horizon, gp, &initial, &mut gp_rng)?;
    let field = DynamicField::new(
        cfg.bases.iter().map(|b| b.basis).collect(),
        trajectories,
        cfg.grid,
    )?;
    let raw = (0..horizon)
        .into_par_iter()
        .map(|t| field.eval(t))
        .collect::<Result<Vec<_>>>()?;
    let adjusted = adjust_to_history(&raw, history)?;
    let maps = adjusted
        .par_iter()
        .enumerate()
        .map(|(t, m)| {
            if cfg.truncate {
                let mut r = rng::stream(seed, t as u64 + 1);
                truncate_and_noise(m, cfg.noise_std, &mut r)
            } else if cfg.noise_std > 0.0 {
                let mut r = rng::stream(seed, t as u64 + 1);
                let mut out = m.clone();
                for v in out.values_mut() {
                    let n: f64 = r.sample(StandardNormal);
                    *v += cfg.noise_std * n;
                }
                out
            } else {
                m.clone()
            }
        })
        .collect();

    let mut manifest = Manifest::new();
    manifest.set("kind", "synth");
    manifest.set("seed", seed);
    manifest.set("grid_rows", cfg.grid.rows);
    manifest.set("grid_cols", cfg.grid.cols);
    manifest.set("field_width_m", cfg.grid.width_m);
    manifest.set("field_height_m", cfg.grid.height_m);
    manifest.set("horizon", horizon);
    manifest.set("basis_count", cfg.bases.len());
    for (i, b) in cfg.bases.iter().enumerate() {
        manifest.set(
            format!("basis_{i}"),
            format!(
                "{:?},{:?},{:?},{:?}",
                b.basis.center.0, b.basis.center.1, b.basis.length_scale, b.initial_weight
            ),
        );
    }
    manifest.set("gp_length_scale", gp.length_scale);
    match gp.variance {
        GpVariance::Absolute(v) => manifest.set("gp_variance", v),
        GpVariance::RelativeToWeight(f) => manifest.set("gp_variance_fraction", f),
    }
    manifest.set("gp_jitter", GP_JITTER);
    manifest.set("noise_std", cfg.noise_std);
    manifest.set("truncate", cfg.truncate);

    Ok(SynthOutput {
        maps,
        adjusted,
        field,
        manifest,
    })
}

/// Writes `map_0000.hmap`, ... and `manifest.txt` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, maps: &[HeightMap], manifest: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, m) in maps.iter().enumerate() {
        m.write_hmap(dir.join(format!("map_{t:04}.hmap")))?;
    }
    manifest.write(dir.join("manifest.txt"))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<HeightMap>> {
    crate::heightmap::read_hmap_dir(dir, "map_")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn parses_series_with_comments() {
        let s = HistoricalSeries::parse("# header\n100.0\n120.5 # note\n\n").unwrap();
        assert_eq!(s.values, vec![100.0, 120.5]);
    }

    #[test]
    fn series_errors() {
        assert!(HistoricalSeries::parse("").is_err());
        assert!(HistoricalSeries::parse("# only comment\n").is_err());
        assert!(HistoricalSeries::parse("10\n-3\n").is_err());
        assert!(HistoricalSeries::parse("abc\n").is_err());
        assert!(HistoricalSeries::parse("inf\n").is_err());
    }

    #[test]
    fn basis_values() {
        let b = BasisFunction::new((5.0, 5.0), 0.13).unwrap();
        assert_eq!(b.eval(5.0, 5.0), 1.0);
        assert!((b.eval(5.13, 5.0) - (-0.5f64).exp()).abs() < 1e-12);
        let far = BasisFunction::new((3.0, 4.0), 0.13).unwrap();
        // exp(-41/(2*0.0169)) underflows the floor
        assert_eq!(far.eval(8.0, 8.0), 0.0);
        assert!(BasisFunction::new((0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn zero_variance_gp_is_constant() {
        let gp = GpParams {
            length_scale: 3.0,
            variance: GpVariance::Absolute(0.0),
        };
        let w = sample_weight_trajectories(2, 10, gp, &[1.5, 2.5], &mut seeded(3)).unwrap();
        assert!(w.weights[0].iter().all(|&v| v == 1.5));
        assert!(w.weights[1].iter().all(|&v| v == 2.5));
    }

    #[test]
    fn gp_rejects_bad_params() {
        let bad = GpParams {
            length_scale: 0.0,
            variance: GpVariance::Absolute(1.0),
        };
        assert!(sample_weight_trajectories(1, 4, bad, &[1.0], &mut seeded(1)).is_err());
        let bad = GpParams {
            length_scale: 1.0,
            variance: GpVariance::Absolute(-1.0),
        };
        assert!(sample_weight_trajectories(1, 4, bad, &[1.0], &mut seeded(1)).is_err());
        let ok = GpParams::default_for_horizon(4);
        assert!(sample_weight_trajectories(2, 4, ok, &[1.0], &mut seeded(1)).is_err());
    }

    #[test]
    fn reference_weights_centre_trajectories() {
        let bases = reference_bases();
        let init: Vec<f64> = bases.iter().map(|b| b.initial_weight).collect();
        assert_eq!(init, vec![4.17, 4.17, 2.50, 6.67, 3.33, 3.33, 4.17]);
        // Short length-scale so the sample mean concentrates on the GP mean.
        let gp = GpParams {
            length_scale: 1.0,
            variance: GpVariance::RelativeToWeight(0.25),
        };
        let w = sample_weight_trajectories(7, 1200, gp, &init, &mut seeded(11)).unwrap();
        for (traj, &mean) in w.weights.iter().zip(&init) {
            let m = traj.iter().sum::<f64>() / traj.len() as f64;
            // sd of the sample mean of a correlated path, generously bounded
            assert!((m - mean).abs() < 0.1 * mean, "mean {m} vs {mean}");
        }
    }

    #[test]
    fn gp_is_deterministic() {
        let gp = GpParams::default_for_horizon(30);
        let a = sample_weight_trajectories(3, 30, gp, &[1.0, 2.0, 3.0], &mut seeded(9)).unwrap();
        let b = sample_weight_trajectories(3, 30, gp, &[1.0, 2.0, 3.0], &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    fn const_traj(weights: &[f64], horizon: usize) -> WeightTrajectories {
        WeightTrajectories {
            weights: weights.iter().map(|&w| vec![w; horizon]).collect(),
            gp: GpParams::default_for_horizon(horizon),
        }
    }

    #[test]
    fn field_zero_weights_and_centre_cell() {
        let grid = GridSpec::new(10, 10, 10.0, 10.0).unwrap();
        // centre of cell (2, 3) is (3.5, 2.5)
        let basis = BasisFunction::new((3.5, 2.5), 0.7).unwrap();
        let f = DynamicField::new(vec![basis], const_traj(&[0.0], 2), grid).unwrap();
        assert!(f.eval(0).unwrap().values().iter().all(|&v| v == 0.0));
        let f = DynamicField::new(vec![basis], const_traj(&[1.0], 2), grid).unwrap();
        assert_eq!(f.eval(1).unwrap().get(2, 3), 1.0);
        assert!(matches!(f.eval(2), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn adjust_shifts_to_history() {
        let m = HeightMap::new(1, 2, vec![40.0, 60.0]).unwrap();
        let h = HistoricalSeries::new(vec![120.0]).unwrap();
        let out = adjust_to_history(std::slice::from_ref(&m), &h).unwrap();
        assert_eq!(out[0].values(), &[110.0, 130.0]);
        let h = HistoricalSeries::new(vec![50.0]).unwrap();
        assert_eq!(adjust_to_history(std::slice::from_ref(&m), &h).unwrap()[0], m);

        let raw: Vec<_> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&v| HeightMap::filled(2, 2, v))
            .collect();
        let h = HistoricalSeries::new(vec![100.0; 3]).unwrap();
        let out = adjust_to_history(&raw, &h).unwrap();
        for (o, r) in out.iter().zip(&raw) {
            let shift = o.get(0, 0) - r.get(0, 0);
            assert_eq!(shift, 100.0 - r.get(0, 0));
        }
        assert!(adjust_to_history(&raw[..2], &h).is_err());
    }

    #[test]
    fn truncate_then_noise() {
        let m = HeightMap::new(1, 2, vec![-5.0, 10.0]).unwrap();
        assert_eq!(truncate_and_noise(&m, 0.0, &mut seeded(0)).values(), &[0.0, 10.0]);
        let pos = HeightMap::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(truncate_and_noise(&pos, 0.0, &mut seeded(0)), pos);

        // replay the RNG stream independently
        let noisy = truncate_and_noise(&m, 1.0, &mut seeded(42));
        let mut r = seeded(42);
        let expected: Vec<f64> = m
            .values()
            .iter()
            .map(|&v| {
                let n: f64 = r.sample(StandardNormal);
                (v.max(0.0) + n).max(0.0)
            })
            .collect();
        assert_eq!(noisy.values(), expected.as_slice());
        assert!(noisy.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_basis_manual_composition() {
        let grid = GridSpec::new(2, 2, 2.0, 2.0).unwrap();
        let cfg = SynthConfig {
            grid,
            bases: vec![BasisSpec {
                basis: BasisFunction::new((0.5, 0.5), 1.0).unwrap(),
                initial_weight: 3.0,
            }],
            gp_length_scale: Some(1.0),
            gp_variance: GpVariance::Absolute(0.0),
            noise_std: 0.0,
            truncate: true,
        };
        let h = HistoricalSeries::new(vec![10.0]).unwrap();
        let out = synthesize_dataset(&cfg, &h, 1).unwrap();
        let b = cfg.bases[0].basis;
        let raw: Vec<f64> = [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)]
            .iter()
            .map(|&(x, y)| 3.0 * b.eval(x, y))
            .collect();
        let mean = raw.iter().sum::<f64>() / 4.0;
        for (got, r) in out.maps[0].values().iter().zip(&raw) {
            assert!((got - (r + 10.0 - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = SynthConfig {
            grid: GridSpec::new(12, 12, 10.0, 10.0).unwrap(),
            ..SynthConfig::default()
        };
        let h = HistoricalSeries::new((0..20).map(|t| 50.0 + t as f64).collect()).unwrap();
        let a = synthesize_dataset(&cfg, &h, 5).unwrap();
        let b = synthesize_dataset(&cfg, &h, 5).unwrap();
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.manifest, b.manifest);
        let c = synthesize_dataset(&cfg, &h, 6).unwrap();
        assert_ne!(a.maps, c.maps);
    }

    proptest! {
        #[test]
        fn basis_in_unit_interval(x in -20.0f64..20.0, y in -20.0f64..20.0, c in 0.05f64..5.0) {
            let b = BasisFunction::new((1.0, 2.0), c).unwrap();
            let v = b.eval(x, y);
            prop_assert!((0.0..=1.0).contains(&v));
            if (x, y) != (1.0, 2.0) && v == 1.0 {
                // only possible when the displacement underflows relative to c
                prop_assert!(((x - 1.0).powi(2) + (y - 2.0).powi(2)) / (2.0 * c * c) < 1e-15);
            }
        }

        #[test]
        fn field_is_linear_in_weights(a in proptest::collection::vec(-5.0f64..5.0, 3),
                                      b in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let grid = GridSpec::new(6, 5, 10.0, 10.0).unwrap();
            let bases = vec![
                BasisFunction::new((2.0, 2.0), 1.5).unwrap(),
                BasisFunction::new((7.0, 3.0), 2.0).unwrap(),
                BasisFunction::new((5.0, 8.0), 1.0).unwrap(),
            ];
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let fa = DynamicField::new(bases.clone(), const_traj(&a, 1), grid).unwrap().eval(0).unwrap();
            let fb = DynamicField::new(bases.clone(), const_traj(&b, 1), grid).unwrap().eval(0).unwrap();
            let fs = DynamicField::new(bases, const_traj(&sum, 1), grid).unwrap().eval(0).unwrap();
            for i in 0..fs.len() {
                prop_assert!((fs.values()[i] - fa.values()[i] - fb.values()[i]).abs() < 1e-9);
            }
        }
    }
}
