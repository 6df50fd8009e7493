//! Binary cache for fitted Gaussian statistics.
//!
//! All integers and floats little-endian:
//!
//! | offset | size      | field                                  |
//! |--------|-----------|----------------------------------------|
//! | 0      | 8         | magic `FDSTATS\0`                      |
//! | 8      | 4         | format version (`u32`, currently 1)    |
//! | 12     | 4         | reserved, zero                         |
//! | 16     | 8         | dimension D (`u64`)                    |
//! | 24     | 8         | sample count N (`u64`)                 |
//! | 32     | 8·D       | mean (`f64`)                           |
//! | 32+8D  | 8·D·D     | covariance, row-major (`f64`)          |

use std::path::Path;

use faer::Mat;

use crate::error::{Error, Result};
use crate::frechet::GaussianStats;

pub const STATS_MAGIC: &[u8; 8] = b"FDSTATS\0";
const VERSION: u32 = 1;
const PREAMBLE: usize = 32;

pub fn encode_stats(stats: &GaussianStats) -> Vec<u8> {
    let d = stats.dim();
    let mut out = Vec::with_capacity(PREAMBLE + 8 * d * (d + 1));
    out.extend_from_slice(STATS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(stats.count() as u64).to_le_bytes());
    for v in stats.mean() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let cov = stats.cov();
    for i in 0..d {
        for j in 0..d {
            out.extend_from_slice(&cov[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_stats(bytes: &[u8]) -> Result<GaussianStats> {
    if bytes.len() < PREAMBLE || &bytes[..8] != STATS_MAGIC {
        return Err(Error::Format("not a stats cache (bad magic)".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported stats cache version {version}")));
    }
    let d = usize::try_from(word(16)).map_err(|_| Error::Format("dimension overflows".into()))?;
    let n = usize::try_from(word(24)).map_err(|_| Error::Format("count overflows".into()))?;
    let expected = d
        .checked_mul(d + 1)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(PREAMBLE))
        .ok_or_else(|| Error::Format("dimension overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "stats cache for D={d} should be {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let float = |k: usize| f64::from_le_bytes(bytes[PREAMBLE + 8 * k..PREAMBLE + 8 * k + 8].try_into().unwrap());
    let mean: Vec<f64> = (0..d).map(float).collect();
    let cov = Mat::from_fn(d, d, |i, j| float(d + i * d + j));
    GaussianStats::new(mean, cov, n)
}

pub fn save_stats(stats: &GaussianStats, path: &Path) -> Result<()> {
    std::fs::write(path, encode_stats(stats)).map_err(|e| Error::io(path, e))
}

pub fn load_stats(path: &Path) -> Result<GaussianStats> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_stats(&bytes)
}
