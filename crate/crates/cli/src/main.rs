//! `geobench`: validate and convert corpora, run experiments, look up
//! archived results and start the server.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use geobench_core::corpus::{convert_line_corpus, parse_unified_corpus, serialize_corpus, ColumnMap, Corpus, Genre, LineFormat};
use geobench_core::corpus::corpus_stats;
use geobench_core::experiment::{find_experiment, run_experiment, ExperimentPlan, ExperimentRecord, ExperimentStatus, DEFAULT_PARALLELISM};
use geobench_core::geoparse::{Geoparser, GeoparserFactory, GeoparserKind, GeoparserRef, GeoparserRegistration, GAZPOP_ID};
use geobench_core::metrics::{parse_metric_list, MetricValue};
use geobench_core::store::Store;
use geobench_server::{load_gazpop, Config};

const EXIT_FAILURE: u8 = 1;
const EXIT_RUN_FAILED: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "geobench", version, about = "Benchmark geoparsers on annotated corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a unified-format corpus file.
    Validate {
        corpus: PathBuf,
        /// The corpus annotates only some toponyms.
        #[arg(long)]
        partial: bool,
    },
    /// Convert CSV/TSV annotations into a unified-format corpus.
    Convert {
        #[arg(long)]
        format: LineFormat,
        /// JSON column map: {"text", "phrase", "lon", "lat", ...} to header names.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        genre: Option<Genre>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Run every geoparser on every corpus and write the report.
    Run {
        /// Fully annotated corpus file (repeatable).
        #[arg(long = "corpus")]
        corpora: Vec<PathBuf>,
        /// Partially annotated corpus file (repeatable).
        #[arg(long = "partial")]
        partial: Vec<PathBuf>,
        /// `gazpop`, a registered id, `[id=]http(s)://endpoint` or `replay:<fixture.json>` (repeatable).
        #[arg(long = "geoparser", required = true)]
        geoparsers: Vec<String>,
        /// Comma-separated metric names, or `all`.
        #[arg(long, default_value = "all")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "geobench.db")]
        store: PathBuf,
        /// Gazetteer TSV for the built-in geoparser.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
        parallelism: usize,
    },
    /// Print an archived experiment.
    Search {
        id: String,
        #[arg(long, default_value = "geobench.db")]
        store: PathBuf,
    },
    /// Start the HTTP server.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(std::io::stderr)
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(err) => {
            eprintln!("error: cannot start runtime: {err}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    match runtime.block_on(dispatch(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

async fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Validate { corpus, partial } => validate(&corpus, partial),
        Command::Convert { format, map, id, name, genre, input, output } => {
            convert(format, &map, id, name, genre, &input, &output)
        }
        Command::Run { corpora, partial, geoparsers, metrics, out, store, gazetteer, parallelism } => {
            let inputs: Vec<(PathBuf, bool)> =
                corpora.into_iter().map(|p| (p, true)).chain(partial.into_iter().map(|p| (p, false))).collect();
            run(&inputs, &geoparsers, &metrics, &out, &store, gazetteer.as_deref(), parallelism).await
        }
        Command::Search { id, store } => search(&id, &store),
        Command::Serve { config } => {
            let config = Config::load(config.as_deref())?;
            geobench_server::serve(config).await?;
            Ok(0)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_corpus(path: &Path, fully_annotated: bool) -> Result<Corpus> {
    parse_unified_corpus(&read(path)?, fully_annotated).with_context(|| format!("invalid corpus {}", path.display()))
}

fn validate(path: &Path, partial: bool) -> Result<u8> {
    let corpus = load_corpus(path, !partial)?;
    let stats = corpus_stats(&corpus);
    println!(
        "{}: valid corpus {:?}, {} entries, {} toponyms, {:.1} words and {:.1} toponyms per entry",
        path.display(),
        corpus.id,
        stats.entry_count,
        corpus.annotation_count(),
        stats.mean_words_per_entry,
        stats.mean_toponyms_per_entry,
    );
    Ok(0)
}

fn convert(
    format: LineFormat,
    map: &Path,
    id: Option<String>,
    name: Option<String>,
    genre: Option<Genre>,
    input: &Path,
    output: &Path,
) -> Result<u8> {
    let map: ColumnMap =
        serde_json::from_slice(&read(map)?).with_context(|| format!("invalid column map {}", map.display()))?;
    let (mut corpus, report) = convert_line_corpus(&read(input)?, format, &map)?;
    if let Some(id) = id {
        corpus.name = name.clone().unwrap_or_else(|| id.clone());
        corpus.id = id;
    }
    if let Some(name) = name {
        corpus.name = name;
    }
    if let Some(genre) = genre {
        corpus.genre = genre;
    }
    for note in &report.warnings {
        eprintln!("warning: row {}: {}", note.row, note.message);
    }
    for note in &report.skipped {
        eprintln!("skipped: row {}: {}", note.row, note.message);
    }
    std::fs::write(output, serialize_corpus(&corpus)).with_context(|| format!("cannot write {}", output.display()))?;
    println!(
        "{}: {} rows read, {} entries, {} toponyms, {} rows skipped",
        output.display(),
        report.rows_read,
        corpus.entries.len(),
        corpus.annotation_count(),
        report.skipped.len()
    );
    Ok(0)
}

/// Turns a `--geoparser` argument into a registration, looking ids up in
/// the store.
fn resolve_geoparser(arg: &str, store: &Store) -> Result<GeoparserRegistration> {
    if let Some(path) = arg.strip_prefix("replay:") {
        let path = Path::new(path);
        let fixture = serde_json::from_slice(&read(path)?)
            .with_context(|| format!("replay fixture {} is not JSON", path.display()))?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("replay").to_owned();
        let mut registration = GeoparserRegistration::new(GeoparserRef {
            display_name: id.clone(),
            id,
            kind: GeoparserKind::Replay,
            endpoint_url: None,
            version: "replay".into(),
            rate_limit: None,
        });
        registration.fixture = Some(fixture);
        return Ok(registration);
    }
    let (id, url) = match arg.split_once('=') {
        Some((id, url)) if url.starts_with("http://") || url.starts_with("https://") => (Some(id), Some(url)),
        _ if arg.starts_with("http://") || arg.starts_with("https://") => (None, Some(arg)),
        _ => (None, None),
    };
    if let Some(url) = url {
        let id = id.map(str::to_owned).unwrap_or_else(|| {
            let host = url.split("://").nth(1).unwrap_or(url);
            let host = host.split('/').next().unwrap_or(host);
            host.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
        });
        return Ok(GeoparserRegistration::new(GeoparserRef {
            display_name: id.clone(),
            id,
            kind: GeoparserKind::Rest,
            endpoint_url: Some(url.to_owned()),
            version: "unversioned".into(),
            rate_limit: None,
        }));
    }
    store.geoparser(arg)?.with_context(|| format!("unknown geoparser {arg:?}"))
}

async fn run(
    inputs: &[(PathBuf, bool)],
    geoparser_args: &[String],
    metrics: &str,
    out: &Path,
    store_path: &Path,
    gazetteer: Option<&Path>,
    parallelism: usize,
) -> Result<u8> {
    if inputs.is_empty() {
        bail!("select at least one corpus with --corpus or --partial");
    }
    if parallelism == 0 {
        bail!("--parallelism must be at least 1");
    }
    let metrics = parse_metric_list(metrics)?;
    let mut corpora = Vec::with_capacity(inputs.len());
    for (path, fully_annotated) in inputs {
        let corpus = load_corpus(path, *fully_annotated)?;
        if corpora.iter().any(|c: &Arc<Corpus>| c.id == corpus.id) {
            bail!("two corpora share the id {:?}", corpus.id);
        }
        corpora.push(Arc::new(corpus));
    }
    let store = Store::open(store_path).with_context(|| format!("cannot open store {}", store_path.display()))?;
    let gazpop = gazetteer.map(load_gazpop).transpose()?.map(Arc::new);
    let factory = GeoparserFactory::new(gazpop);
    let corpus_refs: Vec<&Corpus> = corpora.iter().map(Arc::as_ref).collect();
    let mut geoparsers: Vec<Arc<dyn Geoparser>> = Vec::with_capacity(geoparser_args.len());
    for arg in geoparser_args {
        let geoparser: Arc<dyn Geoparser> = if arg == GAZPOP_ID {
            factory.gazpop().context("the gazpop geoparser needs --gazetteer")?.clone()
        } else {
            let registration = resolve_geoparser(arg, &store)?;
            factory.build(&registration, &corpus_refs).with_context(|| format!("geoparser {arg:?}"))?
        };
        geoparsers.push(geoparser);
    }

    let plan = ExperimentPlan { corpora, geoparsers, metrics, parallelism };
    let record = run_experiment(&store, &plan).await?;
    let mut report = serde_json::to_vec_pretty(&record)?;
    report.push(b'\n');
    std::fs::write(out, report).with_context(|| format!("cannot write {}", out.display()))?;
    print_table(&record);
    println!("experiment {} {} (report: {})", record.experiment_id, record.status.as_str(), out.display());
    if record.status == ExperimentStatus::Failed {
        for line in record.failure_detail.iter() {
            eprintln!("{line}");
        }
        return Ok(EXIT_RUN_FAILED);
    }
    Ok(0)
}

fn print_table(record: &ExperimentRecord) {
    let Some(table) = &record.results else { return };
    let header: Vec<&str> = record.metrics.iter().map(|m| m.as_str()).collect();
    println!("corpus\tgeoparser\t{}", header.join("\t"));
    for row in &table.rows {
        let cells: Vec<String> = record
            .metrics
            .iter()
            .map(|m| match row.cells.get(m) {
                Some(MetricValue::Value(v)) => format!("{v:.4}"),
                Some(MetricValue::NotApplicable) => "n/a".into(),
                Some(MetricValue::Undefined) => "undefined".into(),
                Some(MetricValue::Failed) | None => "failed".into(),
            })
            .collect();
        println!("{}\t{}\t{}", row.corpus, row.geoparser, cells.join("\t"));
    }
}

fn search(id: &str, store_path: &Path) -> Result<u8> {
    let store = Store::open(store_path).with_context(|| format!("cannot open store {}", store_path.display()))?;
    match find_experiment(&store, id)? {
        Some(record) => {
            println!("{}", serde_json::to_string_pretty(&record)?);
            Ok(0)
        }
        None => {
            eprintln!("no experiment with id {id}");
            Ok(EXIT_FAILURE)
        }
    }
}
