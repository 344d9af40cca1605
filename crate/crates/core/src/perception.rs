//! Point cloud to heightmap: crop, ground-plane fit, height extraction,
//! rasterization and 3x3 denoising.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heightmap::HeightMap;

const DEGENERATE_DET: f64 = 1e-12;

/// Percentiles listed in perception reports.
pub const REPORT_PERCENTILES: [f64; 7] = [50.0, 75.0, 90.0, 95.0, 97.5, 99.0, 99.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// Optional per-point perimeter label, parallel to `points`.
    pub perimeter: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, perimeter: Option<Vec<bool>>) -> Result<Self> {
        if let Some(flags) = &perimeter {
            if flags.len() != points.len() {
                return Err(Error::Shape(format!(
                    "{} perimeter flags for {} points",
                    flags.len(),
                    points.len()
                )));
            }
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::Invalid(format!("non-finite coordinate at point {i}")));
        }
        Ok(Self { points, perimeter })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 48);
        for (i, p) in self.points.iter().enumerate() {
            match &self.perimeter {
                Some(flags) => {
                    let _ = writeln!(out, "{:?} {:?} {:?} {}", p.x, p.y, p.z, flags[i] as u8);
                }
                None => {
                    let _ = writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z);
                }
            }
        }
        out
    }

    /// Parses `x y z [p]` lines. Blank lines and `#` comments are skipped;
    /// the flag column must be present on every line or on none.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut flags = Vec::new();
        let mut flagged: Option<bool> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let has_flag = match fields.len() {
                3 => false,
                4 => true,
                k => {
                    return Err(Error::Parse(format!(
                        "line {}: expected 3 or 4 fields, found {k}",
                        n + 1
                    )))
                }
            };
            if *flagged.get_or_insert(has_flag) != has_flag {
                return Err(Error::Parse(format!(
                    "line {}: perimeter flag present on some lines only",
                    n + 1
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {s:?}", n + 1)))
            };
            points.push(Point {
                x: num(fields[0])?,
                y: num(fields[1])?,
                z: num(fields[2])?,
            });
            if has_flag {
                flags.push(match fields[3] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: perimeter flag must be 0 or 1, found {other:?}",
                            n + 1
                        )))
                    }
                });
            }
        }
        Self::new(points, flagged.unwrap_or(false).then_some(flags))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Plane `A x + B y + z + D = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl Plane {
    pub const HORIZONTAL: Plane = Plane {
        a: 0.0,
        b: 0.0,
        d: 0.0,
    };

    pub fn new(a: f64, b: f64, d: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && d.is_finite()) {
            return Err(Error::Invalid("plane coefficients must be finite".into()));
        }
        Ok(Self { a, b, d })
    }

    /// Height of the plane above `(x, y)`.
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        -(self.a * x + self.b * y + self.d)
    }

    /// Perpendicular signed distance in metres, positive above the plane.
    pub fn signed_distance(&self, p: &Point) -> f64 {
        (self.a * p.x + self.b * p.y + p.z + self.d)
            / (self.a * self.a + self.b * self.b + 1.0).sqrt()
    }
}

/// Axis-aligned rectangle, half-open: `[min_x, max_x) x [min_y, max_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let finite = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite());
        if !finite || min_x >= max_x || min_y >= max_y {
            return Err(Error::Invalid(format!(
                "rectangle needs min < max on both axes: x [{min_x}, {max_x}) y [{min_y}, {max_y})"
            )));
        }
        Ok(Self {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x < self.max_x && y >= self.min_y && y < self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Inner plot rectangle surrounded by a perimeter band out to `outer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropBox {
    pub plot: Rect,
    pub outer: Rect,
}

impl CropBox {
    pub fn new(plot: Rect, outer: Rect) -> Result<Self> {
        let inside = outer.min_x < plot.min_x
            && outer.min_y < plot.min_y
            && plot.max_x < outer.max_x
            && plot.max_y < outer.max_y;
        if !inside {
            return Err(Error::Invalid(
                "plot rectangle must lie strictly inside the perimeter band".into(),
            ));
        }
        Ok(Self { plot, outer })
    }

    /// Plot `[0, width) x [0, height)` with a band of `band` metres around it.
    pub fn with_band(width: f64, height: f64, band: f64) -> Result<Self> {
        Self::new(
            Rect::new(0.0, 0.0, width, height)?,
            Rect::new(-band, -band, width + band, height + band)?,
        )
    }

    pub fn in_perimeter(&self, x: f64, y: f64) -> bool {
        self.outer.contains(x, y) && !self.plot.contains(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Points per square metre over the whole outer rectangle.
    pub density: f64,
    /// Vertical noise, mm.
    pub lidar_std_mm: f64,
    pub dropout_frac: f64,
    /// Ground surface the grass stands on.
    pub ground: Plane,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            density: 500.0,
            lidar_std_mm: 4.0,
            dropout_frac: 0.0,
            ground: Plane::HORIZONTAL,
        }
    }
}

/// Simulated scan of `truth` (mm) laid over `crop.plot`. Plot points carry
/// grass height above the ground plane, perimeter points sit on the ground.
/// Points outside the outer rectangle are never produced.
pub fn sample_point_cloud<R: Rng>(
    truth: &HeightMap,
    crop: &CropBox,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<PointCloud> {
    if !(cfg.density > 0.0 && cfg.density.is_finite()) {
        return Err(Error::Invalid(format!("density must be positive, got {}", cfg.density)));
    }
    if !(cfg.lidar_std_mm >= 0.0) {
        return Err(Error::Invalid("lidar noise must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&cfg.dropout_frac) {
        return Err(Error::Invalid(format!(
            "dropout fraction must lie in [0, 1], got {}",
            cfg.dropout_frac
        )));
    }
    let outer = crop.outer;
    let n = (cfg.density * outer.area()).round() as usize;
    let cw = crop.plot.width() / truth.cols() as f64;
    let ch = crop.plot.height() / truth.rows() as f64;
    let mut points = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(outer.min_x..outer.max_x);
        let y = rng.gen_range(outer.min_y..outer.max_y);
        let noise = if cfg.lidar_std_mm > 0.0 {
            rng.sample::<f64, _>(StandardNormal) * cfg.lidar_std_mm
        } else {
            0.0
        };
        let on_plot = crop.plot.contains(x, y);
        let grass = if on_plot {
            truth.bilinear((x - crop.plot.min_x) / cw, (y - crop.plot.min_y) / ch)
        } else {
            0.0
        };
        points.push(Point {
            x,
            y,
            z: cfg.ground.z_at(x, y) + (grass + noise) / 1000.0,
        });
        flags.push(!on_plot);
    }
    let drop = (cfg.dropout_frac * n as f64).round() as usize;
    if drop > 0 {
        let mut keep = vec![true; n];
        for i in index::sample(rng, n, drop) {
            keep[i] = false;
        }
        let mut k = keep.iter();
        points.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        flags.retain(|_| *k.next().unwrap());
    }
    PointCloud::new(points, Some(flags))
}

/// Splits `cloud` into (plot, perimeter); points outside both are dropped.
pub fn crop_box_filter(cloud: &PointCloud, crop: &CropBox) -> (PointCloud, PointCloud) {
    let mut plot = PointCloud::default();
    let mut band = PointCloud::default();
    for p in &cloud.points {
        if crop.plot.contains(p.x, p.y) {
            plot.points.push(*p);
        } else if crop.outer.contains(p.x, p.y) {
            band.points.push(*p);
        }
    }
    (plot, band)
}

/// Least-squares plane through `points`, solved in the centroid frame.
pub fn fit_ground_plane(points: &[Point]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let (mut cx, mut cy, mut cz) = (0.0, 0.0, 0.0);
    for p in points {
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    cx /= n;
    cy /= n;
    cz /= n;
    let (mut sxx, mut syy, mut sxy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (x, y, z) = (p.x - cx, p.y - cy, p.z - cz);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        sxz += x * z;
        syz += y * z;
    }
    // minimise sum (z + A x + B y)^2 in the centred frame
    let det = sxx * syy - sxy * sxy;
    if det.abs() < DEGENERATE_DET {
        return Err(Error::DegenerateGeometry(format!(
            "points are collinear (determinant {det:e})"
        )));
    }
    let a = (-sxz * syy + syz * sxy) / det;
    let b = (-syz * sxx + sxz * sxy) / det;
    let d = -(cz + a * cx + b * cy);
    Plane::new(a, b, d)
}

/// Signed perpendicular heights above `plane`, in mm.
pub fn point_heights(points: &[Point], plane: &Plane) -> Vec<f64> {
    points.iter().map(|p| plane.signed_distance(p) * 1000.0).collect()
}

/// Linear-interpolation percentile at rank `q/100 * (n - 1)`.
pub fn percentile_heights(heights: &[f64], q: f64) -> Result<f64> {
    if heights.is_empty() {
        return Err(Error::Invalid("percentile of an empty height list".into()));
    }
    let mut sorted = heights.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

fn percentile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Invalid(format!("percentile must lie in [0, 100], got {q}")));
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellStatistic {
    Mean,
    Min,
    Max,
    Percentile(f64),
}

impl Default for CellStatistic {
    fn default() -> Self {
        CellStatistic::Percentile(95.0)
    }
}

impl CellStatistic {
    fn reduce(&self, values: &mut [f64]) -> f64 {
        match *self {
            CellStatistic::Mean => values.iter().sum::<f64>() / values.len() as f64,
            CellStatistic::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            CellStatistic::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            CellStatistic::Percentile(q) => {
                values.sort_by(f64::total_cmp);
                percentile_sorted(values, q).expect("percentile validated at parse time")
            }
        }
    }
}

impl std::str::FromStr for CellStatistic {
    type Err = Error;

    /// Accepts `mean`, `min`, `max`, `median`, or `pNN` such as `p95`.
    fn from_str(s: &str) -> Result<Self> {
        let stat = match s {
            "mean" => CellStatistic::Mean,
            "min" => CellStatistic::Min,
            "max" => CellStatistic::Max,
            "median" => CellStatistic::Percentile(50.0),
            _ => {
                let q = s
                    .strip_prefix('p')
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown cell statistic {s:?}")))?;
                if !(0.0..=100.0).contains(&q) {
                    return Err(Error::Invalid(format!("percentile must lie in [0, 100], got {q}")));
                }
                CellStatistic::Percentile(q)
            }
        };
        Ok(stat)
    }
}

/// A height sample at plot position `(x, y)` in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightSample {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

/// Aggregates samples into a `rows x cols` grid over `area`. Samples on the
/// far edge fall into the last cell; samples outside `area` are ignored.
/// Empty cells copy their nearest non-empty cell.
pub fn rasterize(
    samples: &[HeightSample],
    area: &Rect,
    rows: usize,
    cols: usize,
    stat: CellStatistic,
) -> Result<HeightMap> {
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("raster must be at least 1x1, got {rows}x{cols}")));
    }
    let cw = area.width() / cols as f64;
    let ch = area.height() / rows as f64;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); rows * cols];
    for s in samples {
        if s.x < area.min_x || s.x > area.max_x || s.y < area.min_y || s.y > area.max_y {
            continue;
        }
        let c = (((s.x - area.min_x) / cw) as usize).min(cols - 1);
        let r = (((s.y - area.min_y) / ch) as usize).min(rows - 1);
        bins[r * cols + c].push(s.h);
    }
    if bins.iter().all(Vec::is_empty) {
        return Err(Error::Invalid("no samples fall inside the raster area".into()));
    }
    let cells: Vec<Option<f64>> = bins
        .par_iter_mut()
        .map(|b| (!b.is_empty()).then(|| stat.reduce(b)))
        .collect();
    let values = (0..rows * cols)
        .into_par_iter()
        .map(|i| cells[i].unwrap_or_else(|| nearest_filled(&cells, rows, cols, i / cols, i % cols)))
        .collect();
    HeightMap::new(rows, cols, values)
}

/// Value of the closest filled cell by Euclidean index distance; ties go to
/// the first in row-major order.
fn nearest_filled(cells: &[Option<f64>], rows: usize, cols: usize, r: usize, c: usize) -> f64 {
    let mut best: Option<(usize, usize)> = None;
    let max_ring = rows.max(cols);
    for ring in 1..=max_ring {
        if let Some((d2, _)) = best {
            if ring * ring > d2 {
                break;
            }
        }
        let r0 = r.saturating_sub(ring);
        let r1 = (r + ring).min(rows - 1);
        let c0 = c.saturating_sub(ring);
        let c1 = (c + ring).min(cols - 1);
        for rr in r0..=r1 {
            for cc in c0..=c1 {
                if rr.abs_diff(r).max(cc.abs_diff(c)) != ring {
                    continue;
                }
                let i = rr * cols + cc;
                if cells[i].is_none() {
                    continue;
                }
                let d2 = rr.abs_diff(r).pow(2) + cc.abs_diff(c).pow(2);
                if best.map_or(true, |(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
                    best = Some((d2, i));
                }
            }
        }
    }
    let (_, i) = best.expect("at least one filled cell");
    cells[i].unwrap()
}

fn filter_3x3(m: &HeightMap, reduce: impl Fn(&mut [f64; 9]) -> f64 + Sync) -> HeightMap {
    let (rows, cols) = m.dims();
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        let mut window = [0.0; 9];
        for (c, slot) in row.iter_mut().enumerate() {
            let mut k = 0;
            for dr in [-1isize, 0, 1] {
                let rr = (r as isize + dr).clamp(0, rows as isize - 1) as usize;
                for dc in [-1isize, 0, 1] {
                    let cc = (c as isize + dc).clamp(0, cols as isize - 1) as usize;
                    window[k] = m.get(rr, cc);
                    k += 1;
                }
            }
            *slot = reduce(&mut window);
        }
    });
    HeightMap::new(rows, cols, out).expect("same shape as input")
}

/// 3x3 median with edge replication.
pub fn median_filter_3x3(m: &HeightMap) -> HeightMap {
    filter_3x3(m, |w| {
        w.sort_by(f64::total_cmp);
        w[4]
    })
}

/// 3x3 box mean with edge replication.
pub fn flat_conv_3x3(m: &HeightMap) -> HeightMap {
    filter_3x3(m, |w| w.iter().sum::<f64>() / 9.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denoise {
    None,
    #[default]
    Median,
    Flat,
    MedianThenFlat,
}

impl Denoise {
    pub fn apply(&self, m: &HeightMap) -> HeightMap {
        match self {
            Denoise::None => m.clone(),
            Denoise::Median => median_filter_3x3(m),
            Denoise::Flat => flat_conv_3x3(m),
            Denoise::MedianThenFlat => flat_conv_3x3(&median_filter_3x3(m)),
        }
    }
}

impl std::str::FromStr for Denoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Denoise::None),
            "median" => Ok(Denoise::Median),
            "flat" => Ok(Denoise::Flat),
            "median+flat" => Ok(Denoise::MedianThenFlat),
            _ => Err(Error::Parse(format!("unknown denoise filter {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerceptionOutput {
    pub plane: Plane,
    pub plot_points: usize,
    pub perimeter_points: usize,
    /// Per-point plot heights in mm.
    pub heights: Vec<f64>,
    pub raw: HeightMap,
    pub filtered: HeightMap,
}

impl PerceptionOutput {
    pub fn report(&self) -> String {
        let mut out = String::new();
        let p = &self.plane;
        let _ = writeln!(out, "plane A={:.9} B={:.9} D={:.9}", p.a, p.b, p.d);
        let _ = writeln!(out, "plot_points {}", self.plot_points);
        let _ = writeln!(out, "perimeter_points {}", self.perimeter_points);
        let _ = writeln!(out, "raw_mean_mm {:.3}", self.raw.mean());
        let _ = writeln!(out, "filtered_mean_mm {:.3}", self.filtered.mean());
        let _ = writeln!(out, "percentile height_mm");
        let mut sorted = self.heights.clone();
        sorted.sort_by(f64::total_cmp);
        for q in REPORT_PERCENTILES {
            if let Ok(v) = percentile_sorted(&sorted, q) {
                let _ = writeln!(out, "{q} {v:.3}");
            }
        }
        out
    }
}

/// Crop, fit the ground on the perimeter band, measure plot heights,
/// rasterize and denoise.
pub fn process_cloud(
    cloud: &PointCloud,
    crop: &CropBox,
    rows: usize,
    cols: usize,
    stat: CellStatistic,
    denoise: Denoise,
) -> Result<PerceptionOutput> {
    let (plot, band) = crop_box_filter(cloud, crop);
    let plane = fit_ground_plane(&band.points)?;
    let heights = point_heights(&plot.points, &plane);
    let samples: Vec<HeightSample> = plot
        .points
        .iter()
        .zip(&heights)
        .map(|(p, &h)| HeightSample { x: p.x, y: p.y, h })
        .collect();
    let raw = rasterize(&samples, &crop.plot, rows, cols, stat)?;
    let filtered = denoise.apply(&raw);
    log::debug!(
        "perception: {} plot / {} perimeter points, plane ({}, {}, {})",
        plot.len(),
        band.len(),
        plane.a,
        plane.b,
        plane.d
    );
    Ok(PerceptionOutput {
        plane,
        plot_points: plot.len(),
        perimeter_points: band.len(),
        heights,
        raw,
        filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(x: f64, y: f64, z: f64) -> Point {
        Point { x, y, z }
    }

    #[test]
    fn noiseless_flat_field_lands_at_truth() {
        let truth = HeightMap::filled(10, 10, 100.0);
        let crop = CropBox::with_band(2.0, 2.0, 0.5).unwrap();
        let cfg = SampleConfig {
            density: 200.0,
            lidar_std_mm: 0.0,
            ..Default::default()
        };
        let cloud = sample_point_cloud(&truth, &crop, &cfg, &mut seeded(1)).unwrap();
        let flags = cloud.perimeter.as_ref().unwrap();
        for (p, &band) in cloud.points.iter().zip(flags) {
            assert_eq!(p.z, if band { 0.0 } else { 0.1 });
        }
    }

    #[test]
    fn sampler_is_deterministic_and_honours_dropout() {
        let truth = HeightMap::filled(4, 4, 50.0);
        let crop = CropBox::with_band(1.0, 1.0, 0.25).unwrap();
        let cfg = SampleConfig {
            density: 400.0,
            dropout_frac: 0.25,
            ..Default::default()
        };
        let a = sample_point_cloud(&truth, &crop, &cfg, &mut seeded(3)).unwrap();
        let b = sample_point_cloud(&truth, &crop, &cfg, &mut seeded(3)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.len(), 900 - 225);
    }

    #[test]
    fn tiny_density_gives_empty_cloud() {
        let truth = HeightMap::filled(2, 2, 1.0);
        let crop = CropBox::with_band(0.1, 0.1, 0.01).unwrap();
        let cfg = SampleConfig {
            density: 1.0,
            ..Default::default()
        };
        assert!(sample_point_cloud(&truth, &crop, &cfg, &mut seeded(0))
            .unwrap()
            .is_empty());
        let bad = SampleConfig {
            density: 0.0,
            ..Default::default()
        };
        assert!(sample_point_cloud(&truth, &crop, &bad, &mut seeded(0)).is_err());
    }

    #[test]
    fn crop_boundaries_are_half_open() {
        let crop = CropBox::with_band(1.0, 1.0, 0.5).unwrap();
        let cloud = PointCloud::new(
            vec![
                pt(0.0, 0.0, 0.0),   // plot corner
                pt(1.0, 0.5, 0.0),   // plot right edge: band
                pt(0.5, 1.0, 0.0),   // plot top edge: band
                pt(-0.5, -0.5, 0.0), // outer corner: band
                pt(1.5, 0.0, 0.0),   // outer right edge: outside
                pt(0.99, 0.99, 0.0), // plot
                pt(-0.1, 0.5, 0.0),  // band
                pt(0.5, 1.6, 0.0),   // outside
                pt(0.5, -0.51, 0.0), // outside
                pt(1.49, 1.49, 0.0), // band
            ],
            None,
        )
        .unwrap();
        let (plot, band) = crop_box_filter(&cloud, &crop);
        let xs = |c: &PointCloud| c.points.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>();
        assert_eq!(xs(&plot), vec![(0.0, 0.0), (0.99, 0.99)]);
        assert_eq!(
            xs(&band),
            vec![(1.0, 0.5), (0.5, 1.0), (-0.5, -0.5), (-0.1, 0.5), (1.49, 1.49)]
        );
    }

    #[test]
    fn everything_outside_gives_empty_partitions() {
        let crop = CropBox::with_band(1.0, 1.0, 0.1).unwrap();
        let cloud = PointCloud::new(vec![pt(5.0, 5.0, 0.0), pt(-3.0, 0.2, 1.0)], None).unwrap();
        let (plot, band) = crop_box_filter(&cloud, &crop);
        assert!(plot.is_empty() && band.is_empty());
    }

    #[test]
    fn crop_box_rejects_plot_touching_band_edge() {
        let plot = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(CropBox::new(plot, Rect::new(0.0, -1.0, 2.0, 2.0).unwrap()).is_err());
        assert!(Rect::new(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn horizontal_and_tilted_planes() {
        let grid: Vec<(f64, f64)> = (0..5)
            .flat_map(|i| (0..4).map(move |j| (i as f64 * 0.7 - 1.0, j as f64 * 0.3 + 2.0)))
            .collect();
        let flat: Vec<_> = grid.iter().map(|&(x, y)| pt(x, y, 0.0)).collect();
        let p = fit_ground_plane(&flat).unwrap();
        assert_abs_diff_eq!(p.a, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.d, 0.0, epsilon = 1e-12);

        let tilted: Vec<_> = grid.iter().map(|&(x, y)| pt(x, y, 2.0 * x + 3.0 * y)).collect();
        let p = fit_ground_plane(&tilted).unwrap();
        assert_abs_diff_eq!(p.a, -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.b, -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.d, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let line: Vec<_> = (0..10).map(|i| pt(i as f64, 2.0 * i as f64, 1.0)).collect();
        assert!(matches!(
            fit_ground_plane(&line),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(fit_ground_plane(&line[..2]).is_err());
    }

    #[test]
    fn perpendicular_heights() {
        let h = point_heights(&[pt(0.3, 0.4, 0.05), pt(0.0, 0.0, 0.0)], &Plane::HORIZONTAL);
        assert_abs_diff_eq!(h[0], 50.0, epsilon = 1e-12);
        assert_eq!(h[1], 0.0);
        let tilted = Plane::new(-2.0, -3.0, 0.0).unwrap();
        let h = point_heights(&[pt(1.0, 1.0, 5.1), pt(2.0, -1.0, 1.0)], &tilted);
        assert_abs_diff_eq!(h[0], 100.0 / 14f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(h[0], 26.726, epsilon = 1e-3);
        assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn percentiles() {
        assert_eq!(percentile_heights(&[30.0, 10.0, 20.0], 50.0).unwrap(), 20.0);
        assert_eq!(percentile_heights(&[3.0, 9.0, 1.0], 100.0).unwrap(), 9.0);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        assert_abs_diff_eq!(percentile_heights(&ramp, 97.5).unwrap(), 96.525, epsilon = 1e-12);
        assert!(percentile_heights(&[], 50.0).is_err());
        assert!(percentile_heights(&[1.0], 101.0).is_err());
    }

    #[test]
    fn statistic_parsing() {
        assert_eq!("p97.5".parse::<CellStatistic>().unwrap(), CellStatistic::Percentile(97.5));
        assert_eq!("median".parse::<CellStatistic>().unwrap(), CellStatistic::Percentile(50.0));
        assert!("p120".parse::<CellStatistic>().is_err());
        assert!("mode".parse::<CellStatistic>().is_err());
    }

    fn samples_at(points: &[(f64, f64, f64)]) -> Vec<HeightSample> {
        points.iter().map(|&(x, y, h)| HeightSample { x, y, h }).collect()
    }

    #[test]
    fn uniform_heights_rasterize_flat() {
        let area = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let s: Vec<_> = (0..50)
            .map(|i| HeightSample {
                x: (i % 7) as f64 / 7.0,
                y: (i / 7) as f64 / 8.0,
                h: 100.0,
            })
            .collect();
        for stat in [CellStatistic::Mean, CellStatistic::Max, CellStatistic::default()] {
            let m = rasterize(&s, &area, 3, 4, stat).unwrap();
            assert!(m.values().iter().all(|&v| v == 100.0));
        }
    }

    #[test]
    fn single_point_fills_every_cell() {
        let area = Rect::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let m = rasterize(&samples_at(&[(1.7, 0.2, 42.0)]), &area, 5, 5, CellStatistic::default())
            .unwrap();
        assert!(m.values().iter().all(|&v| v == 42.0));
        assert!(rasterize(&[], &area, 2, 2, CellStatistic::Mean).is_err());
    }

    #[test]
    fn two_cell_percentiles_by_hand() {
        let area = Rect::new(0.0, 0.0, 2.0, 1.0).unwrap();
        let s = samples_at(&[
            (0.1, 0.5, 10.0),
            (0.2, 0.5, 40.0),
            (0.9, 0.1, 20.0),
            (0.5, 0.9, 30.0),
            (1.5, 0.5, 7.0),
            (1.9, 0.5, 3.0),
        ]);
        let m = rasterize(&s, &area, 1, 2, CellStatistic::Percentile(95.0)).unwrap();
        // left: [10,20,30,40] rank 2.85 -> 30 + 0.85 * 10; right: [3,7] rank 0.95
        assert_abs_diff_eq!(m.get(0, 0), 38.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(0, 1), 6.8, epsilon = 1e-12);
        let m = rasterize(&s, &area, 1, 2, CellStatistic::Mean).unwrap();
        assert_eq!(m.values(), &[25.0, 5.0]);
    }

    #[test]
    fn fill_uses_nearest_cell_with_row_major_ties() {
        let area = Rect::new(0.0, 0.0, 5.0, 1.0).unwrap();
        let s = samples_at(&[(0.5, 0.5, 1.0), (4.5, 0.5, 9.0)]);
        let m = rasterize(&s, &area, 1, 5, CellStatistic::Mean).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0, 1.0, 9.0, 9.0]);
    }

    #[test]
    fn filters_on_constant_and_ramp() {
        let c = HeightMap::filled(4, 6, 7.5);
        assert_eq!(median_filter_3x3(&c), c);
        assert_eq!(flat_conv_3x3(&c), c);
        let ramp = HeightMap::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(median_filter_3x3(&ramp).get(1, 1), 5.0);
        assert_eq!(flat_conv_3x3(&ramp).get(1, 1), 5.0);
    }

    #[test]
    fn spike_removed_by_median_spread_by_mean() {
        let mut m = HeightMap::filled(5, 5, 0.0);
        m.set(2, 2, 90.0);
        assert!(median_filter_3x3(&m).values().iter().all(|&v| v == 0.0));
        let f = flat_conv_3x3(&m);
        assert_abs_diff_eq!(f.get(2, 2), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.get(1, 3), 10.0, epsilon = 1e-12);
        assert_eq!(f.get(0, 0), 0.0);
    }

    #[test]
    fn edge_replication_at_corner() {
        let m = HeightMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // corner window: 1 1 2 / 1 1 2 / 3 3 4
        assert_abs_diff_eq!(flat_conv_3x3(&m).get(0, 0), 18.0 / 9.0, epsilon = 1e-12);
        assert_eq!(median_filter_3x3(&m).get(0, 0), 2.0);
    }

    #[test]
    fn cloud_text_round_trip() {
        let cloud =
            PointCloud::new(vec![pt(0.1, -2.0, 3.25), pt(1e-7, 5.0, 0.0)], Some(vec![false, true]))
                .unwrap();
        assert_eq!(PointCloud::parse(&cloud.to_text()).unwrap(), cloud);
        let plain = PointCloud::parse("# header\n1 2 3\n\n4 5 6\n").unwrap();
        assert_eq!(plain.len(), 2);
        assert!(plain.perimeter.is_none());
        assert!(PointCloud::parse("1 2 3 1\n4 5 6\n").is_err());
        assert!(PointCloud::parse("1 2 3 2\n").is_err());
        assert!(PointCloud::parse("1 2 nan\n").is_err());
    }

    proptest! {
        #[test]
        fn filters_stay_within_input_range(
            rows in 1usize..7,
            cols in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut r = seeded(seed);
            let m = HeightMap::from_fn(rows, cols, |_, _| r.gen_range(-50.0..250.0));
            let (lo, hi) = (m.min(), m.max());
            for f in [median_filter_3x3(&m), flat_conv_3x3(&m)] {
                for &v in f.values() {
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }

        #[test]
        fn plane_fit_exact_on_noiseless_planes(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            d in -5.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let mut r = seeded(seed);
            let truth = Plane::new(a, b, d).unwrap();
            let pts: Vec<_> = (0..40)
                .map(|_| {
                    let (x, y) = (r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0));
                    pt(x, y, truth.z_at(x, y))
                })
                .collect();
            let fit = fit_ground_plane(&pts).unwrap();
            prop_assert!((fit.a - a).abs() <= 1e-9);
            prop_assert!((fit.b - b).abs() <= 1e-9);
            prop_assert!((fit.d - d).abs() <= 1e-9);
            let mean = point_heights(&pts, &fit).iter().sum::<f64>() / pts.len() as f64;
            prop_assert!(mean.abs() <= 1e-9);
        }
    }
}
