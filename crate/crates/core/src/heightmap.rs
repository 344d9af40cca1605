//! Row-major height grids and the shared `HMAP` text format.
//!
//! ```text
//! HMAP <rows> <cols>
//! v00 v01 ... v0(cols-1)
//! ...
//! ```
//!
//! Values are heights in millimetres (variances in mm² when the map holds a
//! variance field). Decimals are written with Rust's shortest round-trip
//! formatting so a written map re-reads bit-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl HeightMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!(
                "heightmap dims must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} map needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "heightmap dims must be positive");
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "heightmap dims must be positive");
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &HeightMap) -> bool {
        self.dims() == other.dims()
    }

    /// Bilinear interpolation between cell centres; `u`/`v` are fractional
    /// column/row coordinates where cell `(r, c)` has its centre at
    /// `(c + 0.5, r + 0.5)`. Outside the centre lattice the edge value holds.
    pub fn bilinear(&self, u: f64, v: f64) -> f64 {
        let fx = (u - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let fy = (v - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let c0 = fx.floor() as usize;
        let r0 = fy.floor() as usize;
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let top = self.get(r0, c0) * (1.0 - tx) + self.get(r0, c1) * tx;
        let bottom = self.get(r1, c0) * (1.0 - tx) + self.get(r1, c1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn to_hmap_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12 + 32);
        let _ = writeln!(out, "HMAP {} {}", self.rows, self.cols);
        for row in self.values.chunks(self.cols) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_hmap(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty HMAP input".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("HMAP") {
            return Err(Error::Parse(format!("bad HMAP header: {header:?}")));
        }
        let mut dim = |name: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| Error::Parse(format!("HMAP header missing {name}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("HMAP {name}: {e}")))
        };
        let rows = dim("rows")?;
        let cols = dim("cols")?;
        let mut values = Vec::with_capacity(rows * cols);
        let mut row_count = 0;
        for line in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| Error::Parse(format!("HMAP value {tok:?}: {e}")))?;
                values.push(v);
            }
            if values.len() - before != cols {
                return Err(Error::Parse(format!(
                    "HMAP row {row_count} has {} values, expected {cols}",
                    values.len() - before
                )));
            }
            row_count += 1;
        }
        if row_count != rows {
            return Err(Error::Parse(format!(
                "HMAP has {row_count} rows, header says {rows}"
            )));
        }
        HeightMap::new(rows, cols, values)
    }

    pub fn write_hmap(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_hmap_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_hmap(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_hmap(&text)
    }
}

/// Reads every `*.hmap` file in `dir`, sorted by file name.
pub fn read_hmap_dir(dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<HeightMap>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "hmap")
                && p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(prefix))
        })
        .collect();
    paths.sort();
    paths.iter().map(HeightMap::read_hmap).collect()
}
