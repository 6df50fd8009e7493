//! Dataset manifests: CSV files with header `path,attr1,attr2,...`.
//!
//! Relative image paths are resolved against the manifest's directory at
//! load time. Empty attribute cells mean "attribute absent".

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub attributes: BTreeMap<String, String>,
}

impl ManifestEntry {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Fails with `Data` on duplicate paths.
    pub fn new(name: impl Into<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(Error::Data(format!(
                    "duplicate manifest path {}",
                    e.path.display()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted union of attribute keys over all entries.
    pub fn attribute_keys(&self) -> Vec<String> {
        let keys: BTreeSet<&String> = self.entries.iter().flat_map(|e| e.attributes.keys()).collect();
        keys.into_iter().cloned().collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest(&text, base, name)
}

pub fn parse_manifest(text: &str, base: &Path, name: impl Into<String>) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("manifest header: {e}")))?
        .clone();
    if headers.get(0) != Some("path") {
        return Err(Error::Format(
            "manifest header must start with a `path` column".into(),
        ));
    }
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("manifest row {}: {e}", line + 1)))?;
        let raw = record.get(0).unwrap_or_default();
        if raw.is_empty() {
            return Err(Error::Data(format!("manifest row {} has an empty path", line + 1)));
        }
        let raw = PathBuf::from(raw);
        let path = if raw.is_absolute() { raw } else { base.join(raw) };
        let mut entry = ManifestEntry::new(path);
        for (key, value) in headers.iter().zip(record.iter()).skip(1) {
            if !value.is_empty() {
                entry.attributes.insert(key.to_string(), value.to_string());
            }
        }
        entries.push(entry);
    }
    DatasetManifest::new(name, entries)
}

/// Writes the manifest as CSV; paths are written as stored.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let keys = manifest.attribute_keys();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("path").chain(keys.iter().map(String::as_str)).collect();
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    writer.write_record(&header).map_err(to_err)?;
    for e in manifest.entries() {
        let mut row = vec![e.path.to_string_lossy().into_owned()];
        row.extend(keys.iter().map(|k| e.attributes.get(k).cloned().unwrap_or_default()));
        writer.write_record(&row).map_err(to_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Class-stratified sampling request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratify {
    pub attribute: String,
    /// Target share per class value. When absent, the manifest's own class
    /// shares are used. Shares are normalized to sum to one.
    #[serde(default)]
    pub targets: Option<BTreeMap<String, f64>>,
}

impl Stratify {
    pub fn by(attribute: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            targets: None,
        }
    }
}

/// Deterministic subset of `k` entries, in manifest order.
///
/// Without stratification a partial Fisher-Yates draws `k` positions. With
/// it, each class gets a quota from largest-remainder rounding of
/// `k * share` (ties go to the lexicographically smaller class name) and
/// classes are then sampled independently, in class-name order, from the
/// same stream.
pub fn sample_manifest(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
    stratify: Option<&Stratify>,
) -> Result<DatasetManifest> {
    let n = manifest.len();
    if k > n {
        return Err(Error::Range(format!("cannot sample {k} of {n} entries")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut chosen = match stratify {
        None => rng.sample_indices(n, k),
        Some(spec) => stratified_indices(manifest, k, spec, &mut rng)?,
    };
    chosen.sort_unstable();
    let entries = chosen.iter().map(|&i| manifest.entries[i].clone()).collect();
    DatasetManifest::new(manifest.name.clone(), entries)
}

fn stratified_indices(
    manifest: &DatasetManifest,
    k: usize,
    spec: &Stratify,
    rng: &mut SplitMix64,
) -> Result<Vec<usize>> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let class = e.attributes.get(&spec.attribute).ok_or_else(|| {
            Error::Data(format!(
                "entry {} lacks stratification attribute {:?}",
                e.path.display(),
                spec.attribute
            ))
        })?;
        members.entry(class.as_str()).or_default().push(i);
    }

    let shares: BTreeMap<String, f64> = match &spec.targets {
        Some(t) => {
            if let Some((bad, _)) = t.iter().find(|(_, &w)| !(w.is_finite() && w >= 0.0)) {
                return Err(Error::Data(format!("invalid target share for class {bad:?}")));
            }
            t.clone()
        }
        None => members
            .iter()
            .map(|(c, m)| (c.to_string(), m.len() as f64))
            .collect(),
    };
    let quotas = largest_remainder(&shares, k)?;

    let mut picked = Vec::with_capacity(k);
    for (class, quota) in &quotas {
        if *quota == 0 {
            continue;
        }
        let pool = members.get(class.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if *quota > pool.len() {
            return Err(Error::Range(format!(
                "class {class:?} needs {quota} entries but only {} exist",
                pool.len()
            )));
        }
        picked.extend(rng.sample_indices(pool.len(), *quota).into_iter().map(|j| pool[j]));
    }
    Ok(picked)
}

/// Splits `k` into integer quotas proportional to `weights`, summing to `k`.
pub fn largest_remainder(weights: &BTreeMap<String, f64>, k: usize) -> Result<BTreeMap<String, usize>> {
    let total: f64 = weights.values().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Data("class shares must have a positive sum".into()));
    }
    let mut quotas = BTreeMap::new();
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (class, w) in weights {
        let exact = k as f64 * w / total;
        let base = exact.floor() as usize;
        assigned += base;
        quotas.insert(class.clone(), base);
        remainders.push((exact - base as f64, class));
    }
    // Larger remainder first; BTreeMap iteration already gives name order,
    // and the stable sort keeps it for equal remainders.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, class) in remainders.into_iter().take(k.saturating_sub(assigned)) {
        *quotas.get_mut(class).unwrap() += 1;
    }
    Ok(quotas)
}
