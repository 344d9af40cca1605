//! Binary model file.
//!
//! Layout, all little-endian:
//! - 5 bytes magic `PSTL1`
//! - 7 x u32: rows, cols, enc1, hid1, enc2, hid2, kernel
//! - 2 x f64: normalisation mean and std
//! - u64 parameter count, then that many f64 values in block order:
//!   input conv (weights, biases), half-resolution conv (weights, biases),
//!   full-res encoder cell, half-res encoder cell, full-res decoder cell,
//!   half-res decoder cell, merge conv (weights, biases), output projection
//!   (weights, bias). Each cell block is gate kernels, gate biases, then
//!   input/forget/output peepholes.

use std::path::Path;

use super::data::NormStats;
use super::network::{NetConfig, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"PSTL1";

pub fn encode_model(net: &Network, stats: &NormStats) -> Vec<u8> {
    let c = &net.config;
    let mut out = Vec::with_capacity(5 + 28 + 24 + 8 * net.params.len());
    out.extend_from_slice(MAGIC);
    for v in [c.rows, c.cols, c.enc1, c.hid1, c.enc2, c.hid2, c.kernel] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&stats.mean.to_le_bytes());
    out.extend_from_slice(&stats.std.to_le_bytes());
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(Network, NormStats)> {
    let mut rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Parse("not a model file (bad magic)".into()))?;
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(Error::Parse("model file is truncated".into()));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    }
    let mean = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let std = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let config = NetConfig {
        rows: dims[0],
        cols: dims[1],
        enc1: dims[2],
        hid1: dims[3],
        enc2: dims[4],
        hid2: dims[5],
        kernel: dims[6],
    };
    config.validate()?;
    if count != config.param_count() {
        return Err(Error::Parse(format!(
            "model declares {count} parameters, architecture needs {}",
            config.param_count()
        )));
    }
    let raw = take(count * 8)?;
    let params = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after parameters", rest.len())));
    }
    Ok((Network::from_params(config, params)?, NormStats { mean, std }))
}

pub fn save_model(path: impl AsRef<Path>, net: &Network, stats: &NormStats) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(net, stats)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Network, NormStats)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_and_corruption() {
        let net = Network::new(NetConfig::new(4, 6), &mut seeded(1)).unwrap();
        let stats = NormStats { mean: 81.5, std: 12.25 };
        let bytes = encode_model(&net, &stats);
        let (back, s) = decode_model(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(s, stats);
        assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(decode_model(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_model(&extra).is_err());
    }
}
