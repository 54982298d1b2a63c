use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chromaffect::annotations::{load_annotations, Thresholds, IMAGE_ONLY_PREFIX};
use chromaffect::config::{DEFAULT_MAPPING, DEFAULT_PARTITIONS};
use chromaffect::corpus::{build_kb, BuildOptions, FetchClient, ImageSource, LocalDir, CACHE_DIR_ENV};
use chromaffect::kb::{load_kb, save_kb, BuildParams};
use chromaffect::palette::{image_palette, ResizeFilter, DEFAULT_IMAGE_COLORS};
use chromaffect::psychometrics::{analyze, analyze_trials, read_summary, read_trials, Monotonize, ProbabilityScale, SkConfig};
use chromaffect::report;
use chromaffect::scoring::{score_emotions_with, Similarity};
use chromaffect::{fingerprint, BasicColorMapping, FuzzyColorSpace, MappingConfig, PartitionConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod chart;

/// Fuzzy color-emotion knowledge bases: build, inspect, tag and serve.
#[derive(Parser)]
#[command(name = "chromaffect", version)]
struct Cli {
    /// Partition file (TOML); defaults to the built-in partitions.
    #[arg(long, global = true)]
    partitions: Option<PathBuf>,
    /// Basic-color mapping file (TOML); defaults to the built-in rules.
    #[arg(long, global = true)]
    mapping: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default partition file.
    Partitions,
    /// Print the default basic-color mapping file.
    Mapping,
    /// Build a knowledge base from an annotation table and its images.
    BuildKb(BuildKbArgs),
    /// Print the dominant fuzzy palette of an image.
    Palette {
        image: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IMAGE_COLORS)]
        k: usize,
    },
    /// Score images against a knowledge base, one JSON object per line.
    Tag {
        #[arg(long)]
        kb: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SimilarityArg::Jaccard)]
        similarity: SimilarityArg,
    },
    /// Write tables and charts describing a knowledge base.
    Report {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a two-alternative forced-choice evaluation.
    #[command(name = "analyze-2afc")]
    Analyze2afc(AnalyzeArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BuildKbArgs {
    /// Tab-separated annotation table.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Read images as `<id>.jpg|jpeg|png` from this directory instead of
    /// fetching their URLs.
    #[arg(long)]
    images_dir: Option<PathBuf>,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    /// Per-emotion threshold override, e.g. `shyness=0.3`. Repeatable.
    #[arg(long = "threshold", value_name = "EMOTION=FRACTION")]
    thresholds: Vec<String>,
    #[arg(long, default_value = IMAGE_ONLY_PREFIX)]
    column_prefix: String,
    #[arg(long, default_value_t = BuildParams::default().k_image)]
    k_image: usize,
    #[arg(long, default_value_t = BuildParams::default().k_emotion)]
    k_emotion: usize,
    #[arg(long, default_value_t = BuildParams::default().min_share)]
    min_share: f64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "bilinear")]
    filter: ResizeFilter,
    /// Write the knowledge base even if some emotions have no images.
    #[arg(long)]
    allow_partial: bool,
    /// Abort when more than this fraction of images cannot be used.
    #[arg(long, default_value_t = 1.0)]
    max_failure_rate: f64,
    /// Per-emotion build statistics (TSV).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Full build report (JSON).
    #[arg(long)]
    report_json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimilarityArg {
    Jaccard,
    Weighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Observed,
    ChanceCorrected,
}

#[derive(Clone, Copy, ValueEnum)]
enum MonotonizeArg {
    None,
    Pava,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Per-response trial table (TSV).
    #[arg(long, conflicts_with = "summary", required_unless_present = "summary")]
    trials: Option<PathBuf>,
    /// Per-emotion summary table with columns emotion, hits, n, difference.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Observed)]
    scale: ScaleArg,
    #[arg(long, value_enum, default_value_t = MonotonizeArg::None)]
    monotonize: MonotonizeArg,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Observed and fitted proportions (TSV).
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Psychometric curve chart (PNG).
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Directory holding the image index.
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Allowed CORS origin for the gallery front end.
    #[arg(long)]
    cors_origin: Option<String>,
    /// Cache for images added by URL.
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
}

struct Semantics {
    partitions: PartitionConfig,
    mapping: MappingConfig,
    fingerprint: String,
}

impl Semantics {
    fn load(cli: &Cli) -> Result<Self> {
        let partitions = match &cli.partitions {
            Some(p) => PartitionConfig::load(p)?,
            None => PartitionConfig::default(),
        };
        let mapping = match &cli.mapping {
            Some(p) => MappingConfig::load(p)?,
            None => MappingConfig::default(),
        };
        let fingerprint = fingerprint(&partitions, &mapping);
        tracing::info!("configuration fingerprint {fingerprint}");
        Ok(Self {
            partitions,
            mapping,
            fingerprint,
        })
    }

    fn space(&self) -> Result<FuzzyColorSpace> {
        Ok(FuzzyColorSpace::from_config(&self.partitions)?)
    }

    fn basic(&self) -> Result<BasicColorMapping> {
        Ok(BasicColorMapping::from_config(&self.mapping)?)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 bad input, 3 bad or mismatched configuration, 4 runtime failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    use chromaffect::Error as E;
    use chromaffect_service::ServiceError as S;
    let core = e
        .downcast_ref::<E>()
        .or_else(|| match e.downcast_ref::<S>() {
            Some(S::Core(c)) => Some(c),
            _ => None,
        });
    match core {
        Some(E::Config(_) | E::FingerprintMismatch { .. } | E::VersionMismatch { .. }) => 3,
        Some(
            E::Input(_)
            | E::Domain(_)
            | E::MissingColumn { .. }
            | E::Schema(_)
            | E::Malformed { .. }
            | E::Query { .. }
            | E::Io { .. },
        ) => 2,
        Some(_) => 4,
        None if e.downcast_ref::<InputError>().is_some() => 2,
        None => 4,
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

fn run(cli: Cli) -> Result<()> {
    let sem = Semantics::load(&cli)?;
    match cli.command {
        Command::Partitions => print!("{DEFAULT_PARTITIONS}"),
        Command::Mapping => print!("{DEFAULT_MAPPING}"),
        Command::BuildKb(args) => build(&sem, args)?,
        Command::Palette { image, k } => {
            let bytes = read(&image)?;
            let p = image_palette(&bytes, &sem.space()?, k, ResizeFilter::default())?;
            print!("{}", p.to_records());
        }
        Command::Tag { kb, images, similarity } => tag(&sem, &kb, &images, similarity)?,
        Command::Report { kb, out } => write_report(&sem, &kb, &out)?,
        Command::Analyze2afc(args) => analyze_2afc(args)?,
        Command::Serve(args) => serve(&sem, args)?,
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn build(sem: &Semantics, args: BuildKbArgs) -> Result<()> {
    let mut thresholds = Thresholds::default();
    for spec in &args.thresholds {
        thresholds.apply_override(spec)?;
    }
    let selection = load_annotations(&args.annotations, &thresholds, &args.column_prefix)?;
    if selection.rows_read == selection.skipped_rows {
        return Err(InputError(format!("{}: no usable annotation rows", args.annotations.display())).into());
    }
    for (e, n) in selection.counts() {
        tracing::info!("{e}: {n} images selected");
    }
    let source: Box<dyn ImageSource> = match &args.images_dir {
        Some(dir) => Box::new(LocalDir::new(dir)),
        None => Box::new(FetchClient::new(
            args.cache_dir.clone().unwrap_or_else(FetchClient::default_cache_dir),
        )?),
    };
    let opts = BuildOptions {
        params: BuildParams {
            k_image: args.k_image,
            k_emotion: args.k_emotion,
            min_share: args.min_share,
        },
        filter: args.filter,
        workers: args.workers,
        allow_partial: args.allow_partial,
        max_failure_rate: args.max_failure_rate,
    };
    let (kb, report) = build_kb(
        &selection.by_emotion,
        source.as_ref(),
        &sem.space()?,
        &sem.basic()?,
        &sem.fingerprint,
        &opts,
    )?;
    save_kb(&kb, &args.out)?;
    tracing::info!(
        "wrote {} ({} images, {} failed)",
        args.out.display(),
        report.unique_images,
        report.failed_images
    );
    if let Some(p) = &args.report {
        write(p, report.to_tsv())?;
    }
    if let Some(p) = &args.report_json {
        write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn tag(sem: &Semantics, kb: &Path, images: &[PathBuf], sim: SimilarityArg) -> Result<()> {
    let kb = load_kb(kb, Some(&sem.fingerprint))?;
    let space = sem.space()?;
    let sim = match sim {
        SimilarityArg::Jaccard => Similarity::Jaccard,
        SimilarityArg::Weighted => Similarity::WeightedJaccard,
    };
    for path in images {
        let palette = image_palette(&read(path)?, &space, kb.params.k_image, ResizeFilter::default())
            .with_context(|| path.display().to_string())?;
        let scores = score_emotions_with(&palette, &kb, sim);
        let line = serde_json::json!({
            "image": path,
            "predicted": scores.predicted(),
            "palette": palette,
            "scores": scores,
        });
        println!("{line}");
    }
    Ok(())
}

fn write_report(sem: &Semantics, kb: &Path, out: &Path) -> Result<()> {
    let kb = load_kb(kb, Some(&sem.fingerprint))?;
    let space = sem.space()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("hsi.tsv"), report::hsi_tsv(&kb))?;
    write(&out.join("basic_colors.tsv"), report::basic_matrix_tsv(&kb))?;
    write(&out.join("palettes.tsv"), report::palette_tsv(&kb, &space))?;
    report::render_heatmap(&kb).save(out.join("heatmap.png"))?;
    report::render_palette_strips(&kb, &space, 480).save(out.join("palettes.png"))?;
    tracing::info!("report written to {}", out.display());
    Ok(())
}

fn analyze_2afc(args: AnalyzeArgs) -> Result<()> {
    let cfg = SkConfig {
        scale: match args.scale {
            ScaleArg::Observed => ProbabilityScale::Observed,
            ScaleArg::ChanceCorrected => ProbabilityScale::ChanceCorrected,
        },
        monotonize: match args.monotonize {
            MonotonizeArg::None => Monotonize::None,
            MonotonizeArg::Pava => Monotonize::Pava,
        },
        ..SkConfig::default()
    };
    let report = match (&args.trials, &args.summary) {
        (Some(p), _) => analyze_trials(read_trials(fs::File::open(p).map_err(|e| InputError(format!("{}: {e}", p.display())))?)?, &cfg)?,
        (None, Some(p)) => analyze(read_summary(fs::File::open(p).map_err(|e| InputError(format!("{}: {e}", p.display())))?)?, None, &cfg)?,
        (None, None) => bail!(InputError("either --trials or --summary is required".into())),
    };
    let sk = &report.spearman_karber;
    tracing::info!(
        "average hit rate {:.4}, threshold {:.4} (SE {})",
        report.hit_rates.average,
        sk.mean,
        sk.se.map_or("n/a".into(), |s| format!("{s:.4}"))
    );
    if let Err(e) = &report.fit {
        tracing::warn!("logistic fit: {e}");
    }
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => write(p, json)?,
        None => println!("{json}"),
    }
    if let Some(p) = &args.plot {
        write(p, chart::plot_tsv(&report))?;
    }
    if let Some(p) = &args.chart {
        chart::render(&report).save(p)?;
    }
    Ok(())
}

fn serve(sem: &Semantics, args: ServeArgs) -> Result<()> {
    use chromaffect_service::{serve, AppState, Engine, ServiceOptions};
    let engine = Engine::new(&sem.partitions, &sem.mapping)?;
    let state = AppState::open(
        engine,
        &ServiceOptions {
            kb_path: args.kb,
            index_dir: args.index,
            cache_dir: args.cache_dir,
        },
    )?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(state, args.bind, args.cors_origin.as_deref()))?;
    Ok(())
}
