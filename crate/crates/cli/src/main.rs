use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featdist_core::analysis::{load_rating_table, neighbors_of_row, nearest_neighbors, pearson, spearman, Metric};
use featdist_core::calibration::{calibrate, rescale, ScalingFactor, DEFAULT_SAMPLES};
use featdist_core::corpus::{
    load_embeddings, load_image, load_manifest, load_stats, read_json, sample_manifest, save_embeddings, save_image,
    save_manifest, save_stats, write_json, Resample, Stratify, STATS_MAGIC,
};
use featdist_core::extract::{ExtractorConfig, ExtractorKind, FeatureExtractor, ResizeSpec, DEFAULT_SIDE};
use featdist_core::frechet::{fit_gaussian, frechet_distance, GaussianStats};
use featdist_core::perturb::{apply, PerturbationKind, PerturbationParams, PerturbationSpec};
use featdist_core::pipeline::{run_benchmark, track_checkpoints, write_benchmark, write_track, BenchmarkConfig, TrackConfig};
use featdist_core::probe::{evaluate, load_labels, loss, train, LabeledEmbeddings, MlpHead, TrainConfig};
use featdist_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "featdist", version, about = "Fréchet distances between image datasets over pluggable feature spaces")]
struct Cli {
    /// Seed for stochastic commands (perturb, extract, sample, probe train).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Print results as JSON.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit mean and covariance of an embedding file and cache them.
    Stats {
        embeddings: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fréchet distance between two embedding (.npy) or statistics files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        /// Scaling factor file written by `calibrate`.
        #[arg(long)]
        scale: Option<PathBuf>,
    },
    /// Per-extractor scaling factor from two reference corpora.
    Calibrate {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        k: usize,
        /// Seed range `lo..hi` (inclusive) or comma-separated list.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply one perturbation to an image and write a PNG.
    Perturb(PerturbArgs),
    /// Embed every image of a manifest and write an .npy file.
    Extract(ExtractArgs),
    /// Deterministic (optionally stratified) subset of a manifest.
    Sample {
        manifest: PathBuf,
        #[arg(long)]
        k: usize,
        /// Attribute column to stratify on, keeping its class shares.
        #[arg(long)]
        stratify: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Nearest neighbors of one pool row, or of an external query vector.
    Neighbors {
        pool: PathBuf,
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        query_index: Option<usize>,
        /// .npy file whose first row is the query.
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value = "euclidean")]
        metric: Metric,
    },
    /// Pearson and Spearman correlation between two table columns.
    Correlate {
        table: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Train or evaluate a binary MLP probe on embeddings.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Distances of many candidate sets to one reference.
    Benchmark {
        config: PathBuf,
        /// Report path; overrides the config's `output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Distance to a reference across training checkpoints.
    Track {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    kind: PerturbationKind,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long)]
    patch_size: Option<u32>,
    #[arg(long)]
    pixels: Option<usize>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    manifest: PathBuf,
    /// Extractor config (JSON); takes precedence over the flags below.
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long, default_value = "raw-downsample", value_parser = parse_kind)]
    kind: ExtractorKind,
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    side: u32,
    /// Layer widths for random-projection, comma-separated.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Resize every image to this square side first (bilinear).
    #[arg(long)]
    resize: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum ProbeCommand {
    Train {
        embeddings: PathBuf,
        labels: PathBuf,
        /// Hidden layer widths, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "512")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    Eval {
        head: PathBuf,
        embeddings: PathBuf,
        labels: PathBuf,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ExtractorKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown extractor kind {s:?}"))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Range(format!("cannot read seeds {s:?}; use lo..hi or a comma-separated list"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        Ok((lo..=hi).collect())
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
    }
}

/// Embeddings (.npy) are fitted; statistics files are loaded as they are.
fn load_gaussian(path: &Path) -> Result<GaussianStats> {
    let mut magic = [0u8; 8];
    let head = std::fs::File::open(path)
        .and_then(|mut f| std::io::Read::read(&mut f, &mut magic))
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    if head == 8 && &magic == STATS_MAGIC {
        load_stats(path)
    } else {
        fit_gaussian(&load_embeddings(path)?)
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Range("workers must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Stats { embeddings, output } => {
            let g = fit_gaussian(&load_embeddings(&embeddings)?)?;
            save_stats(&g, &output)?;
            if cli.json {
                print_json(&json!({"dim": g.dim(), "count": g.count(), "output": output}));
            } else {
                println!("dim={} count={} output={}", g.dim(), g.count(), output.display());
            }
        }
        Command::Distance { a, b, scale } => {
            let (ga, gb) = (load_gaussian(&a)?, load_gaussian(&b)?);
            let d = frechet_distance(&ga, &gb)?;
            let scale: Option<ScalingFactor> = scale.map(|p| read_json(&p)).transpose()?;
            let rescaled = scale.as_ref().map(|s| rescale(&d, s)).transpose()?;
            if cli.json {
                let mut v = serde_json::to_value(d).expect("serializable");
                if let Some(r) = rescaled {
                    v["rescaled"] = json!(r);
                }
                print_json(&v);
            } else {
                println!("value={}", d.value);
                println!("mean_term={}", d.mean_term);
                println!("trace_term={}", d.trace_term);
                println!("clamped_eigs={}", d.clamped_eigs);
                if let Some(r) = rescaled {
                    println!("rescaled={r}");
                }
            }
        }
        Command::Calibrate { a, b, k, seeds, output } => {
            let seeds = parse_seeds(&seeds)?;
            let factor = calibrate(&load_embeddings(&a)?, &load_embeddings(&b)?, k, &seeds)?;
            write_json(&factor, &output)?;
            if cli.json {
                print_json(&serde_json::to_value(&factor).expect("serializable"));
            } else {
                println!("factor={} spread={} seeds={} k={}", factor.factor, factor.spread, factor.seeds, k);
            }
        }
        Command::Perturb(args) => {
            let spec = PerturbationSpec {
                kind: args.kind,
                seed: cli.seed,
                params: PerturbationParams {
                    strength: args.strength,
                    radius: args.radius,
                    patches: args.patches,
                    patch_size: args.patch_size,
                    pixels: args.pixels,
                },
            };
            let out = apply(&spec, &load_image(&args.input)?)?;
            save_image(&out, &args.output)?;
        }
        Command::Extract(args) => {
            let config = match &args.extractor {
                Some(path) => read_json(path)?,
                None => ExtractorConfig {
                    id: match args.kind {
                        ExtractorKind::RawDownsample => "raw-downsample".into(),
                        ExtractorKind::RandomProjection => format!("random-projection-{}", cli.seed),
                        ExtractorKind::External => "external".into(),
                    },
                    kind: args.kind,
                    dim: None,
                    seed: Some(cli.seed),
                    side: Some(args.side),
                    widths: args.widths.clone(),
                    resize: args.resize.map(|side| ResizeSpec {
                        side,
                        filter: Resample::Bilinear,
                    }),
                },
            };
            let extractor = FeatureExtractor::from_config(&config)?;
            let set = extractor.extract_set(&load_manifest(&args.manifest)?)?;
            save_embeddings(&set, &args.output)?;
            if cli.json {
                print_json(&json!({"extractor": extractor.id(), "rows": set.len(), "dim": set.dim()}));
            } else {
                println!("extractor={} rows={} dim={}", extractor.id(), set.len(), set.dim());
            }
        }
        Command::Sample {
            manifest,
            k,
            stratify,
            output,
        } => {
            let m = load_manifest(&manifest)?;
            let strat = stratify.map(Stratify::by);
            let subset = sample_manifest(&m, k, cli.seed, strat.as_ref())?;
            save_manifest(&subset, &output)?;
        }
        Command::Neighbors {
            pool,
            query_index,
            query,
            k,
            metric,
        } => {
            let pool = load_embeddings(&pool)?;
            let result = match (query_index, query) {
                (Some(i), _) => neighbors_of_row(&pool, i, k, metric)?,
                (None, Some(q)) => nearest_neighbors(load_embeddings(&q)?.row(0), &pool, k, metric)?,
                (None, None) => unreachable!("clap requires one of the query options"),
            };
            if cli.json {
                print_json(&serde_json::to_value(&result).expect("serializable"));
            } else {
                println!("rank,index,distance");
                for (rank, (i, d)) in result.indices.iter().zip(&result.distances).enumerate() {
                    println!("{},{i},{d}", rank + 1);
                }
            }
        }
        Command::Correlate { table, x, y } => {
            let t = load_rating_table(&table)?;
            let (xs, ys) = (t.column(&x)?, t.column(&y)?);
            let (r, rho) = (pearson(&xs, &ys)?, spearman(&xs, &ys)?);
            if cli.json {
                print_json(&json!({"x": x, "y": y, "n": xs.len(), "pearson": r, "spearman": rho}));
            } else {
                println!("pearson={r}");
                println!("spearman={rho}");
            }
        }
        Command::Probe(ProbeCommand::Train {
            embeddings,
            labels,
            hidden,
            epochs,
            batch,
            lr,
            output,
        }) => {
            let data = LabeledEmbeddings::new(load_embeddings(&embeddings)?, load_labels(&labels)?)?;
            let config = TrainConfig {
                hidden,
                epochs,
                batch,
                learning_rate: lr,
                seed: cli.seed,
            };
            let head = train(&data, &config)?;
            write_json(&head, &output)?;
            let (acc, l) = (evaluate(&head, &data)?, loss(&head, &data)?);
            if cli.json {
                print_json(&json!({"train_accuracy": acc, "train_loss": l, "output": output}));
            } else {
                println!("train_accuracy={acc} train_loss={l}");
            }
        }
        Command::Probe(ProbeCommand::Eval {
            head,
            embeddings,
            labels,
        }) => {
            let head: MlpHead = read_json(&head)?;
            head.validate()?;
            let data = LabeledEmbeddings::new(load_embeddings(&embeddings)?, load_labels(&labels)?)?;
            let (acc, l) = (evaluate(&head, &data)?, loss(&head, &data)?);
            if cli.json {
                print_json(&json!({"accuracy": acc, "loss": l, "samples": data.len()}));
            } else {
                println!("accuracy={acc} loss={l}");
            }
        }
        Command::Benchmark { config, output } => {
            let mut cfg: BenchmarkConfig = read_json(&config)?;
            if cfg.workers.is_none() {
                cfg.workers = cli.workers;
            }
            let base = config_dir(&config);
            let report = run_benchmark(&cfg, &base)?;
            if let Some(out) = output.or_else(|| cfg.output.as_ref().map(|p| base.join(p))) {
                write_benchmark(&report, &cfg, &out)?;
            }
            if cli.json {
                print_json(&serde_json::to_value(&report).expect("serializable"));
            } else {
                print!("{}", report.to_csv());
            }
        }
        Command::Track { config, output } => {
            let mut cfg: TrackConfig = read_json(&config)?;
            if cfg.workers.is_none() {
                cfg.workers = cli.workers;
            }
            let base = config_dir(&config);
            let (series, scaling) = track_checkpoints(&cfg, &base)?;
            if let Some(out) = output.or_else(|| cfg.output.as_ref().map(|p| base.join(p))) {
                write_track(&series, &scaling, &cfg, &out)?;
            }
            if cli.json {
                print_json(&json!({"scaling": scaling, "series": series}));
            } else {
                print!("{}", featdist_core::pipeline::series_to_csv(&series));
            }
        }
    }
    Ok(())
}

fn config_dir(config: &Path) -> PathBuf {
    match config.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprint!("{text}");
            eprintln!("error: kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
