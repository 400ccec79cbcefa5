//! `biasfeed`: administrator command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 environment error (I/O, network, busy port).

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use biasfeed_core::classifier::{self, ClassifierError};
use biasfeed_core::config::{ConfigError, QualityKind};
use biasfeed_core::ingest::{article_files, read_doc, IngestReport};
use biasfeed_core::replay::{ReplayBundle, ReplayError};
use biasfeed_core::{run_pipeline, Config, PipelineInput, PipelineOutput};
use biasfeed_service::platform::{render_export, ExportFormat};
use biasfeed_service::store::StoreError;
use biasfeed_service::{Platform, ServeError, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "biasfeed", version, about = "Reader feedback on bias highlights: ingest, aggregate, report, serve")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step (bootstrap and size regression).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct BundleArgs {
    /// Directory of raw article documents, or a JSON array of articles.
    #[arg(long)]
    articles: Option<PathBuf>,
    /// Annotation CSV.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Expert label CSV.
    #[arg(long)]
    experts: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label and store every *.json article document in a directory.
    Ingest {
        dir: PathBuf,
        /// Replace stored articles whose body changed.
        #[arg(long)]
        force: bool,
    },
    /// Run the offline pipeline on an annotation dump.
    Replay {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        experts: Option<PathBuf>,
    },
    /// Quality report of the stored platform data.
    Report,
    /// Export the aggregated dataset of the stored platform data.
    Export {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        /// Overrides server.port.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Bootstrap confidence interval for alpha.
    BootstrapCi {
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        confidence: Option<f64>,
    },
    /// Regress annotation quality on random subset size.
    SizeRegression {
        #[command(flatten)]
        bundle: BundleArgs,
        #[arg(long, value_enum)]
        quality: Option<Quality>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Jsonl => ExportFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Quality {
    Alpha,
    F1,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const ENVIRONMENT: u8 = 3;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        fail(USAGE, e)
    }
}

impl From<ReplayError> for Failure {
    fn from(e: ReplayError) -> Self {
        let code = match e {
            ReplayError::Io { .. } => ENVIRONMENT,
            ReplayError::Schema { .. } | ReplayError::UnknownSentences { .. } => DATA,
        };
        fail(code, e)
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::Io { .. } => ENVIRONMENT,
            StoreError::Corrupt { .. } | StoreError::Snapshot { .. } => DATA,
        };
        fail(code, e)
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Store(s) => s.into(),
            other => fail(ENVIRONMENT, other),
        }
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        fail(ENVIRONMENT, e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "biasfeed=info,warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.bootstrap.seed = seed;
        config.regression.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Outcome {
    let mut config = load_config(&cli)?;
    let out = cli.out.clone();
    match cli.command {
        Command::Ingest { dir, force } => ingest(&config, &dir, force),
        Command::Replay {
            articles,
            annotations,
            experts,
        } => {
            let bundle = ReplayBundle {
                articles,
                annotations,
                experts: experts.or_else(|| config.experts.path.clone()),
            };
            replay(&config, &bundle, &out.unwrap_or_else(|| PathBuf::from(".")))
        }
        Command::Report => {
            let output = stored_pipeline(&config)?;
            let json = serde_json::to_string_pretty(&output.report).expect("report serializes");
            if let Some(dir) = &out {
                write_file(&dir.join("report.json"), json.as_bytes())?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Export { format } => {
            let format = ExportFormat::from(format);
            let output = stored_pipeline(&config)?;
            let body = render_export(&output.dataset, format);
            match &out {
                Some(dir) => {
                    let name = match format {
                        ExportFormat::Csv => "dataset.csv",
                        ExportFormat::Jsonl => "dataset.jsonl",
                    };
                    write_file(&dir.join(name), &body)?;
                    println!("{} records written to {}", output.dataset.len(), dir.join(name).display());
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&body).map_err(|e| fail(ENVIRONMENT, e))?;
                }
            }
            Ok(())
        }
        Command::Serve { port } => {
            if let Some(port) = port {
                config.server.port = port;
            }
            serve(config)
        }
        Command::BootstrapCi {
            bundle,
            iterations,
            confidence,
        } => {
            if let Some(i) = iterations {
                config.bootstrap.iterations = i;
            }
            if let Some(c) = confidence {
                config.bootstrap.confidence = c;
            }
            config.check()?;
            config.regression.samples = 0;
            let output = pipeline_for(&config, &bundle)?;
            let r = &output.report;
            match (r.alpha, &r.alpha_ci) {
                (Some(alpha), Some(ci)) => {
                    println!(
                        "alpha {alpha:.4}, {:.0}% CI [{:.4}, {:.4}] over {} resamples (seed {})",
                        ci.confidence * 100.0,
                        ci.lo,
                        ci.hi,
                        ci.iterations,
                        config.bootstrap.seed
                    );
                    if let Some(dir) = &out {
                        let json = serde_json::json!({"alpha": alpha, "ci": ci, "seed": config.bootstrap.seed});
                        write_file(&dir.join("bootstrap.json"), json.to_string().as_bytes())?;
                    }
                    Ok(())
                }
                _ => Err(fail(
                    DATA,
                    anyhow!("no interval: {}", r.alpha_error.as_deref().unwrap_or("alpha is undefined")),
                )),
            }
        }
        Command::SizeRegression {
            bundle,
            quality,
            samples,
        } => {
            if let Some(q) = quality {
                config.regression.quality = Some(match q {
                    Quality::Alpha => QualityKind::Alpha,
                    Quality::F1 => QualityKind::F1,
                });
            }
            if let Some(s) = samples {
                config.regression.samples = s;
            }
            if config.regression.samples == 0 {
                return Err(fail(USAGE, anyhow!("--samples must be positive")));
            }
            let output = pipeline_for(&config, &bundle)?;
            let regression = output.regression.as_ref().ok_or_else(|| {
                fail(
                    DATA,
                    anyhow!("regression failed (is an expert set configured for f1? see the log for the cause)"),
                )
            })?;
            let r = &regression.report;
            println!("quality ~ size, n = {}", r.n_observations);
            println!("  slope      {:>12.6e}  (se {:.6e}, t {:.3})", r.slope, r.slope_std_error, r.t_statistic);
            println!("  intercept  {:>12.6}", r.intercept);
            println!("  R^2        {:>12.4}  (adjusted {:.4})", r.r_squared, r.adjusted_r_squared);
            println!("  F          {:>12.4}  p = {:.4}", r.f_statistic, r.p_value);
            if let Some(dir) = &out {
                write_file(&dir.join("regression.csv"), regression.to_csv().as_bytes())?;
            }
            Ok(())
        }
    }
}

fn write_file(path: &Path, body: &[u8]) -> Outcome {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(|e| fail(ENVIRONMENT, e))?;
    }
    std::fs::write(path, body)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| fail(ENVIRONMENT, e))
}

fn ingest(config: &Config, dir: &Path, force: bool) -> Outcome {
    if !dir.is_dir() {
        return Err(fail(USAGE, anyhow!("{} is not a directory", dir.display())));
    }
    let files = article_files(dir).map_err(|e| fail(ENVIRONMENT, e))?;
    if files.is_empty() {
        return Err(fail(DATA, anyhow!("{} holds no *.json article files", dir.display())));
    }
    let platform = Platform::open(config.clone())?;
    let mut report = IngestReport::default();
    for path in &files {
        let outcome = match read_doc(path) {
            Ok(doc) => {
                let mut one = platform.ingest(std::slice::from_ref(&doc), force);
                match one.failures.pop() {
                    Some(f) => Err(f.error),
                    None => {
                        merge(&mut report, one);
                        Ok(())
                    }
                }
            }
            Err(e) => Err(e.to_string()),
        };
        if let Err(error) = outcome {
            eprintln!("{}: {error}", path.display());
            report.failures.push(biasfeed_core::ingest::IngestFailure {
                path: path.display().to_string(),
                error,
            });
        }
    }
    println!("{}", report.summary());
    println!(
        "  {} quote sentences; labels: {} biased, {} not biased",
        report.quote_sentences, report.labels.biased, report.labels.not_biased
    );
    for (lean, c) in &report.by_lean {
        println!("  lean {lean}: {} biased, {} not biased", c.biased, c.not_biased);
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(fail(
            DATA,
            anyhow!("{} of {} files failed", report.failures.len(), files.len()),
        ))
    }
}

fn merge(into: &mut IngestReport, from: IngestReport) {
    into.articles += from.articles;
    into.sentences += from.sentences;
    into.quote_sentences += from.quote_sentences;
    into.labels.biased += from.labels.biased;
    into.labels.not_biased += from.labels.not_biased;
    for (k, v) in from.by_lean {
        let e = into.by_lean.entry(k).or_default();
        e.biased += v.biased;
        e.not_biased += v.not_biased;
    }
    for (k, v) in from.by_topic {
        let e = into.by_topic.entry(k).or_default();
        e.biased += v.biased;
        e.not_biased += v.not_biased;
    }
}

fn bundle_pipeline(config: &Config, bundle: &ReplayBundle) -> Result<PipelineOutput, Failure> {
    let classifier = classifier::from_config(&config.classifier_config())?;
    let data = bundle.load(&config.replay, classifier.as_ref())?;
    Ok(run_pipeline(
        PipelineInput {
            articles: &data.articles,
            events: &data.events,
            excluded_sessions: &HashSet::new(),
            experts: data.experts.as_ref(),
            article_opens: &[],
        },
        config,
    ))
}

fn stored_pipeline(config: &Config) -> Result<PipelineOutput, Failure> {
    let platform = Platform::open(config.clone())?;
    Ok(platform.run_pipeline(&platform.pipeline_snapshot()))
}

/// The bundle when one is given, the stored platform data otherwise.
fn pipeline_for(config: &Config, args: &BundleArgs) -> Result<PipelineOutput, Failure> {
    match (&args.articles, &args.annotations) {
        (Some(articles), Some(annotations)) => bundle_pipeline(
            config,
            &ReplayBundle {
                articles: articles.clone(),
                annotations: annotations.clone(),
                experts: args.experts.clone().or_else(|| config.experts.path.clone()),
            },
        ),
        (None, None) if args.experts.is_none() => stored_pipeline(config),
        _ => Err(fail(USAGE, anyhow!("--articles and --annotations go together"))),
    }
}

fn replay(config: &Config, bundle: &ReplayBundle, out: &Path) -> Outcome {
    let output = bundle_pipeline(config, bundle)?;
    let report = serde_json::to_string_pretty(&output.report).expect("report serializes");
    write_file(&out.join("report.json"), report.as_bytes())?;
    write_file(&out.join("dataset.csv"), &render_export(&output.dataset, ExportFormat::Csv))?;
    write_file(&out.join("dataset.jsonl"), &render_export(&output.dataset, ExportFormat::Jsonl))?;
    if let Some(regression) = &output.regression {
        write_file(&out.join("regression.csv"), regression.to_csv().as_bytes())?;
    }
    let r = &output.report;
    let c = &r.counts;
    println!(
        "{} events, {} valid votes ({} annotators / {} votes removed), {} labeled, {} decided, {} undecided",
        c.raw_events, c.valid_votes, c.removed_annotators, c.removed_votes, c.labeled, c.decided, c.undecided
    );
    match r.alpha {
        Some(a) => println!("alpha {a:.3}"),
        None => println!("alpha undefined: {}", r.alpha_error.as_deref().unwrap_or("")),
    }
    if let Some(f1) = r.f1_vs_experts {
        println!("F1 vs experts {f1:.3}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn serve(config: Config) -> Outcome {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| fail(ENVIRONMENT, e))?;
    runtime.block_on(async move {
        let platform = Arc::new(Platform::open(config)?);
        let listener = biasfeed_service::bind(&platform).await.map_err(serve_failure)?;
        biasfeed_service::serve(platform, listener, biasfeed_service::shutdown_signal())
            .await
            .map_err(serve_failure)
    })
}

fn serve_failure(e: ServeError) -> Failure {
    match e {
        ServeError::Service(s) => s.into(),
        other => fail(ENVIRONMENT, other),
    }
}
