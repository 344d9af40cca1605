//! Flat `key=value` run configuration. Every key has a default; unknown keys
//! are rejected.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use pasture_core::manifest::Manifest;

/// `(key, default)` in the order the resolved config is written.
const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "out"),
    // empty paths resolve relative to `out`
    ("dataset", ""),
    ("model", ""),
    ("grid.rows", "16"),
    ("grid.cols", "16"),
    ("grid.width_m", "10"),
    ("grid.height_m", "10"),
    ("synth.series", "data/historical_heights.txt"),
    // 0 keeps the whole series
    ("synth.steps", "0"),
    ("synth.length_scale_factor", "10"),
    ("synth.gp_length_scale", "auto"),
    ("synth.gp_std_fraction", "0.25"),
    ("synth.noise_std", "2"),
    ("synth.truncate", "true"),
    ("seq.stride", "2"),
    ("seq.window", "15"),
    ("net.enc1", "8"),
    ("net.hid1", "8"),
    ("net.enc2", "16"),
    ("net.hid2", "16"),
    ("net.kernel", "3"),
    ("train.learning_rate", "0.001"),
    ("train.momentum", "0.9"),
    ("train.batch_size", "4"),
    ("train.max_epochs", "100"),
    ("train.patience", "10"),
    ("train.dropout", "0"),
    ("train.split", "0.8"),
    ("train.max_windows", "0"),
    ("train.val_every", "5"),
    ("predict.origin", "latest"),
    ("predict.samples", "50"),
    ("predict.dropout", "0.4"),
    ("plan.variances", ""),
    ("plan.t1", "0"),
    ("plan.per_day", "4"),
    ("plan.total_days", "3"),
    ("plan.robots", "1"),
    ("plan.robot_weights", ""),
    ("plan.stop_at_nonpositive_gain", "false"),
    ("weights.w1", "5"),
    ("weights.w2", "0.1"),
    ("weights.w3", "1"),
    ("perceive.cloud", ""),
    ("perceive.plot_width", "4"),
    ("perceive.plot_height", "4"),
    ("perceive.band", "0.5"),
    ("perceive.rows", "16"),
    ("perceive.cols", "16"),
    ("perceive.statistic", "p95"),
    ("perceive.denoise", "median"),
    ("eval.trials", "50"),
    ("eval.samples", "30"),
    ("eval.dropout", "0.4"),
    ("eval.meas_std", "4"),
    ("eval.fold", "spread:3"),
    ("eval.repredict", "10"),
    ("eval.test_start", "auto"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: Vec<(&'static str, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let m = Manifest::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        for (k, v) in m.entries() {
            cfg.set(k, v).with_context(|| format!("in config {}", path.display()))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> Result<()> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        slot.1 = value.to_string();
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("config key {key} is not declared"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| anyhow!("config key {key}: cannot parse {raw:?}: {e}"))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    /// A path key, falling back to `fallback` under the output directory.
    pub fn path_or(&self, key: &str, fallback: &str) -> PathBuf {
        match self.raw(key) {
            "" => self.out_dir().join(fallback),
            p => PathBuf::from(p),
        }
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        match self.raw(key) {
            "" => bail!("config key {key} must be set"),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn to_text(&self) -> String {
        let mut m = Manifest::new();
        for (k, v) in &self.values {
            m.set(*k, v);
        }
        m.to_text()
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("config.resolved");
        std::fs::write(&path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let mut c = RunConfig::default();
        let err = c.set("eval.trails", 3).unwrap_err().to_string();
        assert!(err.contains("eval.trails"), "{err}");
        assert!(c.apply("novalue").is_err());
    }

    #[test]
    fn typed_lookup_and_overrides() {
        let mut c = RunConfig::default();
        assert_eq!(c.get::<usize>("seq.window").unwrap(), 15);
        c.apply("seq.window = 4").unwrap();
        assert_eq!(c.get::<usize>("seq.window").unwrap(), 4);
        c.apply("grid.rows=abc").unwrap();
        assert!(c.get::<usize>("grid.rows").unwrap_err().to_string().contains("grid.rows"));
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::default();
        c.set("seed", 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, c.to_text()).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.to_text(), c.to_text());
        assert_eq!(back.raw("seed"), "42");
    }
}
