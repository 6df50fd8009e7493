//! Everything that touches the filesystem: embeddings, images, manifests,
//! statistics caches and JSON documents.

mod embedding;
mod manifest;
pub mod npy;
mod raster;
mod stats_file;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use embedding::EmbeddingSet;
pub use manifest::{
    largest_remainder, load_manifest, parse_manifest, sample_manifest, save_manifest, DatasetManifest,
    ManifestEntry, Stratify,
};
pub use npy::{load_embeddings, save_embeddings};
pub use raster::{decode_image, encode_png, load_image, resize, save_image, RasterImage, Resample};
pub(crate) use raster::{sample_bilinear, to_u8};
pub use stats_file::{decode_stats, encode_stats, load_stats, save_stats, STATS_MAGIC};

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
