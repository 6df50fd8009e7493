//! Per-extractor scaling factors.
//!
//! For each seed, `k` rows are drawn without replacement from each of the
//! two calibration sets (set A first, then set B, from one SplitMix64
//! stream seeded with that seed), the Fréchet distance of the two
//! subsamples is computed, and the factor is the mean over seeds. The
//! spread is the population standard deviation of the per-seed distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};
use crate::frechet::{fit_gaussian, frechet_distance, FrechetResult};
use crate::rng::SplitMix64;

pub const DEFAULT_SAMPLES: usize = 5000;
pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedDistance {
    pub seed: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactor {
    pub extractor_id: String,
    pub factor: f64,
    pub spread: f64,
    pub seeds: usize,
    pub sample_size: usize,
    pub reference_pair: (String, String),
    /// Raw per-seed distances, in seed-list order.
    #[serde(default)]
    pub per_seed: Vec<SeedDistance>,
}

impl ScalingFactor {
    /// A factor given directly, e.g. copied from a published table.
    pub fn fixed(extractor_id: impl Into<String>, factor: f64) -> Self {
        Self {
            extractor_id: extractor_id.into(),
            factor,
            spread: 0.0,
            seeds: 1,
            sample_size: 0,
            reference_pair: (String::new(), String::new()),
            per_seed: Vec::new(),
        }
    }

    /// The identity scaling (factor 1).
    pub fn identity() -> Self {
        Self::fixed("identity", 1.0)
    }
}

/// The two `k`-row subsamples used for one seed.
pub fn draw_pair(a: &EmbeddingSet, b: &EmbeddingSet, k: usize, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let mut rng = SplitMix64::new(seed);
    let ia = rng.sample_indices(a.len(), k);
    let ib = rng.sample_indices(b.len(), k);
    Ok((a.select(&ia)?, b.select(&ib)?))
}

pub fn calibrate(a: &EmbeddingSet, b: &EmbeddingSet, k: usize, seeds: &[u64]) -> Result<ScalingFactor> {
    if seeds.is_empty() {
        return Err(Error::Range("calibration needs at least one seed".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "calibration sets have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let available = a.len().min(b.len());
    if k > available {
        return Err(Error::Range(format!(
            "cannot draw {k} samples per side from sets of {} and {} rows",
            a.len(),
            b.len()
        )));
    }
    if k < 2 {
        return Err(Error::Range(format!("need at least 2 samples per side, got {k}")));
    }

    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let (sa, sb) = draw_pair(a, b, k, seed)?;
            let d = frechet_distance(&fit_gaussian(&sa)?, &fit_gaussian(&sb)?)?;
            Ok(SeedDistance {
                seed,
                distance: d.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (factor, spread) = mean_and_population_std(per_seed.iter().map(|s| s.distance));
    Ok(ScalingFactor {
        extractor_id: a.extractor_id.clone(),
        factor,
        spread,
        seeds: seeds.len(),
        sample_size: k,
        reference_pair: (a.source_id.clone(), b.source_id.clone()),
        per_seed,
    })
}

/// Sorted before summation so the result does not depend on seed order.
fn mean_and_population_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn rescale(raw: &FrechetResult, scale: &ScalingFactor) -> Result<f64> {
    rescale_value(raw.value, scale)
}

pub fn rescale_value(raw: f64, scale: &ScalingFactor) -> Result<f64> {
    if !scale.factor.is_finite() || scale.factor <= 0.0 {
        return Err(Error::Range(format!(
            "scaling factor must be positive and finite, got {}",
            scale.factor
        )));
    }
    Ok(raw / scale.factor)
}
