//! Config-driven runs: the perturbation benchmark (one reference set against
//! many candidate sets) and distance-vs-checkpoint tracking.
//!
//! Relative paths inside a config are resolved against the directory that
//! holds the config file. Every source is checked before any computation
//! starts and all problems are reported together.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, rescale, ScalingFactor};
use crate::corpus::{
    load_embeddings, load_image, load_manifest, load_stats, read_json, sample_manifest, write_json, write_text,
    EmbeddingSet, Stratify,
};
use crate::error::{Error, Result};
use crate::extract::{ExtractorConfig, ExtractorKind, FeatureExtractor};
use crate::frechet::{fit_gaussian, frechet_distance, FrechetResult, GaussianStats};
use crate::perturb::{apply, PerturbationSpec};

pub const TOOL_NAME: &str = "featdist";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Optional subsampling of a manifest before extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratify: Option<Stratify>,
}

/// Where a set of embeddings (or their statistics) comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum EmbeddingSource {
    /// Precomputed embeddings, e.g. from an external network.
    Npy { npy: PathBuf },
    /// A cached statistics file written by `stats`.
    Stats { stats: PathBuf },
    /// Images listed in a manifest, optionally subsampled and perturbed,
    /// embedded with a configured extractor.
    Images {
        manifest: PathBuf,
        extractor: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        perturbation: Option<PerturbationSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample: Option<SampleSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub a: EmbeddingSource,
    pub b: EmbeddingSource,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_k() -> usize {
    crate::calibration::DEFAULT_SAMPLES
}

fn default_seeds() -> Vec<u64> {
    crate::calibration::DEFAULT_SEEDS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScalingSource {
    /// A `scale.json` written by `calibrate`.
    File { file: PathBuf },
    Factor { factor: f64 },
    Calibrate { calibrate: Box<CalibrationSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub label: String,
    pub source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub reference: EmbeddingSource,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub extractors: Vec<ExtractorConfig>,
    /// Without scaling, rescaled distances equal raw ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSource>,
    /// CSV report path; a JSON sidecar is written next to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    /// Defaults to the checkpoint's position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    pub source: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub reference: EmbeddingSource,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default)]
    pub extractors: Vec<ExtractorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Resolves sources relative to a base directory against a set of
/// constructed extractors.
pub struct Resolver {
    base: PathBuf,
    extractors: Vec<FeatureExtractor>,
}

impl Resolver {
    pub fn new(base: impl Into<PathBuf>, configs: &[ExtractorConfig]) -> Result<Self> {
        let mut problems = Vec::new();
        let mut seen = BTreeSet::new();
        let mut extractors = Vec::new();
        for cfg in configs {
            if !seen.insert(cfg.id.as_str()) {
                problems.push(format!("duplicate extractor id {:?}", cfg.id));
                continue;
            }
            match FeatureExtractor::from_config(cfg) {
                Ok(e) => extractors.push(e),
                Err(e) => problems.push(format!("extractor {:?}: {e}", cfg.id)),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Self {
            base: base.into(),
            extractors,
        })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn extractor(&self, id: &str) -> Option<&FeatureExtractor> {
        self.extractors.iter().find(|e| e.id() == id)
    }

    /// Problems that would stop `source` from resolving, prefixed by `what`.
    pub fn check(&self, what: &str, source: &EmbeddingSource, problems: &mut Vec<String>) {
        let mut need_file = |p: &Path| {
            let full = self.path(p);
            if !full.is_file() {
                problems.push(format!("{what}: file {} not found", full.display()));
            }
        };
        match source {
            EmbeddingSource::Npy { npy } => need_file(npy),
            EmbeddingSource::Stats { stats } => need_file(stats),
            EmbeddingSource::Images {
                manifest, extractor, ..
            } => {
                need_file(manifest);
                match self.extractor(extractor) {
                    None => problems.push(format!("{what}: unknown extractor {extractor:?}")),
                    Some(e) if e.kind() == ExtractorKind::External => problems.push(format!(
                        "{what}: extractor {extractor:?} is external and cannot embed images"
                    )),
                    Some(_) => {}
                }
            }
        }
    }

    pub fn embeddings(&self, source: &EmbeddingSource) -> Result<EmbeddingSet> {
        match source {
            EmbeddingSource::Npy { npy } => load_embeddings(&self.path(npy)),
            EmbeddingSource::Stats { stats } => Err(Error::Unsupported(format!(
                "{} holds statistics, not embeddings",
                stats.display()
            ))),
            EmbeddingSource::Images {
                manifest,
                extractor,
                perturbation,
                sample,
            } => {
                let extractor = self
                    .extractor(extractor)
                    .ok_or_else(|| Error::Config(vec![format!("unknown extractor {extractor:?}")]))?;
                let mut manifest = load_manifest(&self.path(manifest))?;
                if let Some(s) = sample {
                    manifest = sample_manifest(&manifest, s.k, s.seed, s.stratify.as_ref())?;
                }
                let mut set = match perturbation {
                    None => extractor.extract_set(&manifest)?,
                    Some(spec) => extractor.extract_images(&manifest, |p| apply(spec, &load_image(p)?))?,
                };
                if let Some(spec) = perturbation {
                    set.source_id = format!("{}+{}", set.source_id, spec.kind);
                }
                Ok(set)
            }
        }
    }

    pub fn stats(&self, source: &EmbeddingSource) -> Result<GaussianStats> {
        match source {
            EmbeddingSource::Stats { stats } => load_stats(&self.path(stats)),
            other => fit_gaussian(&self.embeddings(other)?),
        }
    }

    pub fn scaling(&self, source: Option<&ScalingSource>) -> Result<ScalingFactor> {
        match source {
            None => Ok(ScalingFactor::identity()),
            Some(ScalingSource::Factor { factor }) => Ok(ScalingFactor::fixed("inline", *factor)),
            Some(ScalingSource::File { file }) => read_json(&self.path(file)),
            Some(ScalingSource::Calibrate { calibrate: spec }) => {
                let a = self.embeddings(&spec.a)?;
                let b = self.embeddings(&spec.b)?;
                calibrate(&a, &b, spec.k, &spec.seeds)
            }
        }
    }

    fn check_scaling(&self, source: Option<&ScalingSource>, problems: &mut Vec<String>) {
        match source {
            None => {}
            Some(ScalingSource::Factor { factor }) => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    problems.push(format!("scaling: factor {factor} must be positive"));
                }
            }
            Some(ScalingSource::File { file }) => {
                let full = self.path(file);
                if !full.is_file() {
                    problems.push(format!("scaling: file {} not found", full.display()));
                }
            }
            Some(ScalingSource::Calibrate { calibrate: spec }) => {
                for (what, s) in [("scaling.a", &spec.a), ("scaling.b", &spec.b)] {
                    if matches!(s, EmbeddingSource::Stats { .. }) {
                        problems.push(format!("{what}: calibration needs embeddings, not statistics"));
                    } else {
                        self.check(what, s, problems);
                    }
                }
            }
        }
    }
}

fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Range(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub raw: f64,
    pub rescaled: f64,
    pub mean_term: f64,
    pub trace_term: f64,
    pub clamped_eigs: usize,
}

impl ReportRow {
    fn new(label: &str, raw: &FrechetResult, scale: &ScalingFactor) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            raw: raw.value,
            rescaled: rescale(raw, scale)?,
            mean_term: raw.mean_term,
            trace_term: raw.trace_term,
            clamped_eigs: raw.clamped_eigs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scaling: ScalingFactor,
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,raw,rescaled,mean_term,trace_term,clamped_eigs\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.label),
                r.raw,
                r.rescaled,
                r.mean_term,
                r.trace_term,
                r.clamped_eigs
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Distances of each candidate to an already fitted reference, in input
/// order.
pub fn benchmark_stats(
    reference: &GaussianStats,
    candidates: &[(String, GaussianStats)],
    scale: &ScalingFactor,
) -> Result<Vec<ReportRow>> {
    candidates
        .iter()
        .map(|(label, g)| ReportRow::new(label, &frechet_distance(reference, g)?, scale))
        .collect()
}

fn validate_benchmark(config: &BenchmarkConfig, resolver: &Resolver) -> Result<()> {
    let mut problems = Vec::new();
    if config.candidates.is_empty() {
        problems.push("no candidates configured".to_string());
    }
    let mut labels = BTreeSet::new();
    for c in &config.candidates {
        if !labels.insert(c.label.as_str()) {
            problems.push(format!("duplicate candidate label {:?}", c.label));
        }
        resolver.check(&format!("candidate {:?}", c.label), &c.source, &mut problems);
    }
    resolver.check("reference", &config.reference, &mut problems);
    resolver.check_scaling(config.scaling.as_ref(), &mut problems);
    if config.workers == Some(0) {
        problems.push("workers must be at least 1".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// Fits the reference once, then evaluates candidates concurrently (up to
/// `workers`), keeping config order in the report.
pub fn run_benchmark(config: &BenchmarkConfig, base: &Path) -> Result<BenchmarkReport> {
    let resolver = Resolver::new(base, &config.extractors)?;
    validate_benchmark(config, &resolver)?;
    let pool = worker_pool(config.workers)?;
    pool.install(|| {
        let scaling = resolver.scaling(config.scaling.as_ref())?;
        let reference = resolver.stats(&config.reference)?;
        let rows = config
            .candidates
            .par_iter()
            .map(|c| {
                let stats = resolver
                    .stats(&c.source)
                    .map_err(|e| Error::Data(format!("candidate {:?}: {e}", c.label)))?;
                let raw = frechet_distance(&reference, &stats)
                    .map_err(|e| Error::Data(format!("candidate {:?}: {e}", c.label)))?;
                ReportRow::new(&c.label, &raw, &scaling)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchmarkReport { scaling, rows })
    })
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize, R: Serialize> {
    tool: &'a str,
    version: &'a str,
    config: &'a C,
    scaling: &'a ScalingFactor,
    results: &'a R,
}

/// `report.csv` → `report.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_benchmark(report: &BenchmarkReport, config: &BenchmarkConfig, csv_path: &Path) -> Result<()> {
    write_text(&report.to_csv(), csv_path)?;
    write_json(
        &Sidecar {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config,
            scaling: &report.scaling,
            results: &report.rows,
        },
        &sidecar_path(csv_path),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: u64,
    pub raw: f64,
    pub rescaled: f64,
}

pub fn series_to_csv(series: &[SeriesPoint]) -> String {
    let mut out = String::from("step,raw,rescaled\n");
    for p in series {
        let _ = writeln!(out, "{},{},{}", p.step, p.raw, p.rescaled);
    }
    out
}

/// Rescaled distance of each checkpoint to the reference, in list order.
pub fn track_stats(
    reference: &GaussianStats,
    checkpoints: &[(u64, GaussianStats)],
    scale: &ScalingFactor,
) -> Result<Vec<SeriesPoint>> {
    if checkpoints.is_empty() {
        return Err(Error::Range("at least one checkpoint is required".into()));
    }
    checkpoints
        .iter()
        .map(|(step, g)| {
            let raw = frechet_distance(reference, g)?;
            Ok(SeriesPoint {
                step: *step,
                raw: raw.value,
                rescaled: rescale(&raw, scale)?,
            })
        })
        .collect()
}

pub fn track_checkpoints(config: &TrackConfig, base: &Path) -> Result<(Vec<SeriesPoint>, ScalingFactor)> {
    if config.checkpoints.is_empty() {
        return Err(Error::Range("at least one checkpoint is required".into()));
    }
    let resolver = Resolver::new(base, &config.extractors)?;
    let mut problems = Vec::new();
    resolver.check("reference", &config.reference, &mut problems);
    for (i, c) in config.checkpoints.iter().enumerate() {
        resolver.check(&format!("checkpoint {i}"), &c.source, &mut problems);
    }
    resolver.check_scaling(config.scaling.as_ref(), &mut problems);
    if config.workers == Some(0) {
        problems.push("workers must be at least 1".into());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let pool = worker_pool(config.workers)?;
    pool.install(|| {
        let scaling = resolver.scaling(config.scaling.as_ref())?;
        let reference = resolver.stats(&config.reference)?;
        let fitted = config
            .checkpoints
            .par_iter()
            .enumerate()
            .map(|(i, c)| Ok((c.step.unwrap_or(i as u64), resolver.stats(&c.source)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((track_stats(&reference, &fitted, &scaling)?, scaling))
    })
}

pub fn write_track(series: &[SeriesPoint], scaling: &ScalingFactor, config: &TrackConfig, csv_path: &Path) -> Result<()> {
    write_text(&series_to_csv(series), csv_path)?;
    write_json(
        &Sidecar {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config,
            scaling,
            results: &series,
        },
        &sidecar_path(csv_path),
    )
}
