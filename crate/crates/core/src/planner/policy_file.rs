//! Policy text files.
//!
//! ```text
//! # key=value header lines (weights, budgets, seed, objective, ...)
//! t x y r gain accepted
//! 3 0 1 2 4.25 1
//! ```
//!
//! One line per trace entry; `accepted` is `1` for factors in the policy.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DeploymentFactor, TraceEntry};
use crate::error::{Error, Result};
use crate::manifest::Manifest;

const COLUMNS: &str = "t x y r gain accepted";

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub header: Manifest,
    pub entries: Vec<TraceEntry>,
}

impl PolicyFile {
    pub fn accepted(&self) -> Vec<DeploymentFactor> {
        self.entries.iter().filter(|e| e.accepted).map(|e| e.factor).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.header.entries() {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(COLUMNS);
        out.push('\n');
        for e in &self.entries {
            let f = e.factor;
            let _ = writeln!(out, "{} {} {} {} {:?} {}", f.t, f.x, f.y, f.robot, e.gain, u8::from(e.accepted));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = Manifest::new();
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line == COLUMNS {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    header.set(k.trim(), v.trim());
                }
                continue;
            }
            let bad = |msg: &str| Error::Parse(format!("policy line {}: {msg}: {line:?}", lineno + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let gain: f64 = tok[4].parse().map_err(|_| bad("bad gain"))?;
            let accepted = match tok[5] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("accepted must be 0 or 1")),
            };
            entries.push(TraceEntry {
                factor: DeploymentFactor::new(int(tok[1])?, int(tok[2])?, int(tok[3])?, int(tok[0])?),
                gain,
                accepted,
                retired: 0,
            });
        }
        Ok(Self { header, entries })
    }
}

pub fn write_policy(path: impl AsRef<Path>, policy: &PolicyFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, policy.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_policy(path: impl AsRef<Path>) -> Result<PolicyFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PolicyFile::parse(&text)
}
