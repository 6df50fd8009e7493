//! Feature extractors: image → `R^D`.
//!
//! Two training-free extractors are built in:
//!
//! * `raw-downsample`: grayscale, area mean-pool to `side x side`, flatten,
//!   scale to `[0, 1]`. `D = side²`.
//! * `random-projection`: the same `side x side` grayscale input fed through
//!   a randomly initialized fully connected network with ramp (`max(0, x)`)
//!   activations between layers and a linear output layer, no biases.
//!   Layer `l` has an `out x in` weight matrix whose entries are drawn
//!   i.i.d. uniform on `[-a, a]`, `a = sqrt(6 / (in + out))`, filled
//!   row-major, layer after layer, from one SplitMix64 stream seeded with
//!   the extractor seed (`w = (2u - 1) a`, `u` from [`SplitMix64::next_f64`]).
//!
//! `external` extractors stand for pretrained networks run elsewhere; their
//! embeddings arrive through NPY files.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_image, resize, DatasetManifest, EmbeddingSet, RasterImage, Resample};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_SIDE: u32 = 32;
pub const DEFAULT_WIDTHS: [usize; 2] = [4096, 2048];
/// Dimensionality of Inception / SwAV / DINO pool features.
pub const EXTERNAL_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    RawDownsample,
    RandomProjection,
    External,
}

/// Optional geometric preprocessing applied before feature computation,
/// e.g. squaring non-square datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub side: u32,
    #[serde(default)]
    pub filter: Resample,
}

/// The run-config block describing an extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub id: String,
    pub kind: ExtractorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize: Option<ResizeSpec>,
}

impl ExtractorConfig {
    pub fn raw_downsample(id: impl Into<String>, side: u32) -> Self {
        Self {
            id: id.into(),
            kind: ExtractorKind::RawDownsample,
            dim: None,
            seed: None,
            side: Some(side),
            widths: None,
            resize: None,
        }
    }

    pub fn random_projection(id: impl Into<String>, seed: u64, side: u32, widths: Vec<usize>) -> Self {
        Self {
            id: id.into(),
            kind: ExtractorKind::RandomProjection,
            dim: None,
            seed: Some(seed),
            side: Some(side),
            widths: Some(widths),
            resize: None,
        }
    }
}

#[derive(Debug, Clone)]
struct DenseLayer {
    inputs: usize,
    /// `outputs x inputs`, row-major.
    weights: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Backend {
    RawDownsample { side: u32 },
    RandomProjection { side: u32, layers: Vec<DenseLayer> },
    External,
}

/// A constructed, immutable extractor.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    id: String,
    dim: usize,
    resize: Option<ResizeSpec>,
    backend: Backend,
}

impl FeatureExtractor {
    pub fn from_config(config: &ExtractorConfig) -> Result<Self> {
        let side = config.side.unwrap_or(DEFAULT_SIDE);
        if side == 0 {
            return Err(Error::Range("extractor side must be positive".into()));
        }
        let input_dim = (side * side) as usize;
        let (dim, backend) = match config.kind {
            ExtractorKind::RawDownsample => (input_dim, Backend::RawDownsample { side }),
            ExtractorKind::RandomProjection => {
                let widths = config.widths.clone().unwrap_or_else(|| DEFAULT_WIDTHS.to_vec());
                if widths.is_empty() || widths.contains(&0) {
                    return Err(Error::Range(format!(
                        "layer widths must be a nonempty list of positive sizes, got {widths:?}"
                    )));
                }
                let layers = random_layers(config.seed.unwrap_or(0), input_dim, &widths);
                (*widths.last().unwrap(), Backend::RandomProjection { side, layers })
            }
            ExtractorKind::External => (config.dim.unwrap_or(EXTERNAL_DIM), Backend::External),
        };
        if let Some(declared) = config.dim {
            if declared != dim {
                return Err(Error::Shape(format!(
                    "extractor {:?} declares dim {declared} but produces {dim}",
                    config.id
                )));
            }
        }
        if dim == 0 {
            return Err(Error::Range("extractor dimension must be positive".into()));
        }
        Ok(Self {
            id: config.id.clone(),
            dim,
            resize: config.resize,
            backend,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ExtractorKind {
        match self.backend {
            Backend::RawDownsample { .. } => ExtractorKind::RawDownsample,
            Backend::RandomProjection { .. } => ExtractorKind::RandomProjection,
            Backend::External => ExtractorKind::External,
        }
    }

    pub fn extract(&self, image: &RasterImage) -> Result<Vec<f64>> {
        let resized;
        let image = match self.resize {
            Some(spec) => {
                resized = resize(image, spec.side, spec.side, spec.filter)?;
                &resized
            }
            None => image,
        };
        let features = match &self.backend {
            Backend::RawDownsample { side } => pooled_gray(image, *side),
            Backend::RandomProjection { side, layers } => {
                let mut x = pooled_gray(image, *side);
                for (i, layer) in layers.iter().enumerate() {
                    x = layer.forward(&x);
                    if i + 1 < layers.len() {
                        x.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                }
                x
            }
            Backend::External => {
                return Err(Error::Unsupported(format!(
                    "extractor {:?} is external; load its embeddings from a file",
                    self.id
                )))
            }
        };
        debug_assert_eq!(features.len(), self.dim);
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("extractor {:?} produced non-finite features", self.id)));
        }
        Ok(features)
    }

    /// Row `i` of the result is the embedding of manifest entry `i`.
    pub fn extract_set(&self, manifest: &DatasetManifest) -> Result<EmbeddingSet> {
        self.extract_images(manifest, load_image)
    }

    /// Like [`extract_set`](Self::extract_set) with a caller-supplied image
    /// source, e.g. one that perturbs each image after loading.
    pub fn extract_images<F>(&self, manifest: &DatasetManifest, load: F) -> Result<EmbeddingSet>
    where
        F: Fn(&Path) -> Result<RasterImage> + Sync,
    {
        if let Backend::External = self.backend {
            return Err(Error::Unsupported(format!(
                "extractor {:?} is external; load its embeddings from a file",
                self.id
            )));
        }
        if manifest.is_empty() {
            return Err(Error::Range(format!("manifest {:?} is empty", manifest.name)));
        }
        let rows: Vec<Vec<f64>> = manifest
            .entries()
            .par_iter()
            .map(|entry| {
                load(&entry.path)
                    .and_then(|img| self.extract(&img))
                    .map_err(|e| Error::Data(format!("{}: {e}", entry.path.display())))
            })
            .collect::<Result<_>>()?;
        let data = rows.concat();
        EmbeddingSet::new(data, manifest.len(), self.dim, manifest.name.clone(), self.id.clone())
    }
}

fn random_layers(seed: u64, input_dim: usize, widths: &[usize]) -> Vec<DenseLayer> {
    let mut rng = SplitMix64::new(seed);
    let mut inputs = input_dim;
    widths
        .iter()
        .map(|&outputs| {
            let bound = (6.0 / (inputs + outputs) as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
                .collect();
            let layer = DenseLayer { inputs, weights };
            inputs = outputs;
            layer
        })
        .collect()
}

/// Grayscale, area-weighted mean pool to `side x side`, scaled to `[0, 1]`.
///
/// Each output cell averages the source pixels it covers, weighting
/// partially covered pixels by their overlap, so exact divisors reduce to
/// plain block means.
pub fn pooled_gray(image: &RasterImage, side: u32) -> Vec<f64> {
    let gray = image.gray_values();
    let (w, h) = (image.width() as usize, image.height() as usize);
    let side = side as usize;
    let x_spans = overlaps(w, side);
    let y_spans = overlaps(h, side);
    let mut out = Vec::with_capacity(side * side);
    for ys in &y_spans {
        for xs in &x_spans {
            let mut acc = 0.0;
            let mut area = 0.0;
            for &(y, wy) in ys {
                for &(x, wx) in xs {
                    acc += gray[y * w + x] * wx * wy;
                    area += wx * wy;
                }
            }
            out.push(acc / area / 255.0);
        }
    }
    out
}

/// For each of `cells` output cells, the source indices it overlaps and the
/// overlap length.
fn overlaps(len: usize, cells: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len as f64 / cells as f64;
    (0..cells)
        .map(|c| {
            let lo = c as f64 * step;
            let hi = lo + step;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len).max(first + 1);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gray_image_pools_to_constant() {
        let img = RasterImage::filled(4, 4, 1, 128).unwrap();
        let ex = FeatureExtractor::from_config(&ExtractorConfig::raw_downsample("raw", 2)).unwrap();
        let v = ex.extract(&img).unwrap();
        assert_eq!(v, vec![128.0 / 255.0; 4]);
        assert!((v[0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn block_means_for_exact_divisors() {
        let px: Vec<u8> = (0..16).map(|i| (i * 10) as u8).collect();
        let img = RasterImage::new(4, 4, 1, px).unwrap();
        let v = pooled_gray(&img, 2);
        let expect = [(0.0 + 10.0 + 40.0 + 50.0) / 4.0, (20.0 + 30.0 + 60.0 + 70.0) / 4.0];
        assert!((v[0] - expect[0] / 255.0).abs() < 1e-15);
        assert!((v[1] - expect[1] / 255.0).abs() < 1e-15);
    }

    #[test]
    fn fractional_pooling_stays_in_unit_range() {
        let px: Vec<u8> = (0..7 * 5 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let img = RasterImage::new(7, 5, 3, px).unwrap();
        let v = pooled_gray(&img, 3);
        assert_eq!(v.len(), 9);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        // Area weighting keeps the global mean.
        let mean_px = img.gray_values().iter().sum::<f64>() / 35.0 / 255.0;
        let mean_out = v.iter().sum::<f64>() / 9.0;
        assert!((mean_px - mean_out).abs() < 1e-12);
    }

    #[test]
    fn external_cannot_extract() {
        let cfg = ExtractorConfig {
            id: "dino".into(),
            kind: ExtractorKind::External,
            dim: None,
            seed: None,
            side: None,
            widths: None,
            resize: None,
        };
        let ex = FeatureExtractor::from_config(&cfg).unwrap();
        assert_eq!(ex.dim(), 2048);
        let img = RasterImage::filled(2, 2, 1, 0).unwrap();
        assert!(matches!(ex.extract(&img), Err(Error::Unsupported(_))));
    }

    #[test]
    fn declared_dim_must_match() {
        let mut cfg = ExtractorConfig::raw_downsample("raw", 4);
        cfg.dim = Some(15);
        assert!(matches!(FeatureExtractor::from_config(&cfg), Err(Error::Shape(_))));
        cfg.dim = Some(16);
        assert!(FeatureExtractor::from_config(&cfg).is_ok());
    }

    #[test]
    fn random_projection_default_shape() {
        let cfg = ExtractorConfig {
            id: "rp".into(),
            kind: ExtractorKind::RandomProjection,
            dim: None,
            seed: Some(1),
            side: None,
            widths: None,
            resize: None,
        };
        let ex = FeatureExtractor::from_config(&cfg).unwrap();
        assert_eq!(ex.dim(), 2048);
        let Backend::RandomProjection { layers, .. } = &ex.backend else { panic!() };
        assert_eq!((layers[0].inputs, layers[0].weights.len()), (1024, 1024 * 4096));
        assert_eq!((layers[1].inputs, layers[1].weights.len()), (4096, 4096 * 2048));
        let bound = (6.0f64 / (1024.0 + 4096.0)).sqrt();
        assert!(layers[0].weights.iter().all(|w| w.abs() <= bound));
    }
}
