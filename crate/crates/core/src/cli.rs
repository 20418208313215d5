//! Command-line front end. Exit status: 0 success, 1 validation error,
//! 2 I/O error.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::adapter::serve_generate_lines;
use crate::bench::{run_bench, BenchError};
use crate::chunk::ChunkParams;
use crate::embed::{EmbedError, Embedder, ReferenceEmbedder};
use crate::gateway::{ClientError, GatewayError, ServiceConfig};
use crate::index::{IndexError, Metric, Scheme, DEFAULT_K};
use crate::ingest::{
    corpus_stats, load_records, refine_with, write_jsonl, ConvertOptions, IdentityTranslator,
    IngestError, InputFormat, SourceRegistry,
};
use crate::rag::{
    chunks_path_for, mock_generate, retrieve_context, Citation, GenerateParams,
    KnowledgeBase, RagError,
};
use crate::select::{load_catalog, rank_candidates, HardwareProfile, Mode, SelectError};

#[derive(Debug, Parser)]
#[command(name = "medaide", version, about = "Local medical assistant: ingest, index, select, serve")]
pub struct Cli {
    /// Service configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert CSV / JSONL exports into refined instruction records.
    Ingest(IngestArgs),
    /// Chunk, embed and index a directory of .txt / .md documents.
    BuildIndex(BuildIndexArgs),
    /// Nearest chunks for a query.
    Query(QueryArgs),
    /// Rank catalog models for a hardware profile.
    Select(SelectArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Search latency and storage report.
    Bench(BenchArgs),
    /// Send one message to a running service.
    Chat(ChatArgs),
    /// Deterministic line-JSON generation backend on stdin/stdout.
    #[command(hide = true)]
    MockBackend(MockBackendArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Source registry JSON; defaults to the built-in medical source list.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Tag for every input; defaults to each file's stem.
    #[arg(long)]
    pub source_tag: Option<String>,
    /// Disease column for CSV inputs; defaults to the first column.
    #[arg(long)]
    pub disease_column: Option<String>,
    /// CSV inputs have no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub chunk_overlap: Option<usize>,
    #[arg(long)]
    pub clip_quantile: Option<f64>,
    /// Reference embedder dimensionality.
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    pub query: String,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub profile: PathBuf,
    /// Catalog JSON; defaults to the config's catalog or the built-in one.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value = "accuracy")]
    pub mode: Mode,
    #[arg(long)]
    pub overhead_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// One query per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    /// Continue an existing session instead of opening a new one.
    #[arg(long)]
    pub session: Option<String>,
    #[arg(long, env = "MEDAIDE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    pub message: String,
}

#[derive(Debug, Args)]
pub struct MockBackendArgs {
    /// Append every received prompt as a JSON string line.
    #[arg(long)]
    pub log_prompts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub delay_ms: u64,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s.to_ascii_lowercase().as_str() {
        "l2" => Ok(Metric::L2),
        "cosine" => Ok(Metric::Cosine),
        other => Err(format!("unknown metric `{other}` (expected l2 or cosine)")),
    }
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }

    fn context(self, what: &Path) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", what.display())),
            CliError::Io(m) => CliError::Io(format!("{}: {m}", what.display())),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Io(e) => e.into(),
            RagError::Index(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Io(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Io(_) | GatewayError::Bind { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Index(e) => e.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Transport(_) => CliError::Io(e.to_string()),
            ClientError::Api { .. } => CliError::Validation(e.to_string()),
        }
    }
}

/// Parse the process arguments, run, and map the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("MEDAIDE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Some(ServiceConfig::load(path)?),
        None => None,
    };
    let out = Output { json: cli.json };
    match cli.command {
        Command::Ingest(a) => ingest(a, config.as_ref(), out),
        Command::BuildIndex(a) => build_index(a, config.as_ref(), out),
        Command::Query(a) => query(a, config.as_ref(), out),
        Command::Select(a) => select(a, config.as_ref(), out),
        Command::Serve(a) => serve(a, config),
        Command::Bench(a) => bench(a, config.as_ref(), out),
        Command::Chat(a) => chat(a, out),
        Command::MockBackend(a) => mock_backend(a),
    }
}

#[derive(Clone, Copy)]
struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let text = if self.json {
            serde_json::to_string_pretty(value).expect("serializable output")
        } else {
            human()
        };
        // A closed pipe (`| head`) is not an error worth a panic.
        let _ = writeln!(std::io::stdout().lock(), "{}", text.trim_end());
    }
}

fn ingest(a: IngestArgs, config: Option<&ServiceConfig>, out: Output) -> Result<(), CliError> {
    let registry = match &a.registry {
        Some(p) => SourceRegistry::load(p).map_err(|e| CliError::from(e).context(p))?,
        None => SourceRegistry::medical_sources(),
    };
    let mut records = Vec::new();
    for path in &a.inputs {
        let tag = match &a.source_tag {
            Some(t) => t.clone(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unknown".into()),
        };
        let options = ConvertOptions {
            source_tag: tag,
            disease_column: a.disease_column.clone(),
            has_header: !a.no_header,
        };
        let bytes = std::fs::read(path).map_err(|e| CliError::from(e).context(path))?;
        let batch = load_records(&bytes, InputFormat::from_path(path), &options, &IdentityTranslator)
            .map_err(|e| CliError::from(e).context(path))?;
        records.extend(batch);
    }
    let refine_config = config.map(|c| c.refine.clone()).unwrap_or_default();
    let (kept, report) = refine_with(records, &refine_config);
    let stats = corpus_stats(&kept, &registry);

    let mut buf = Vec::new();
    write_jsonl(&kept, &mut buf)?;
    write_atomic(&a.out, &buf).map_err(|e| e.context(&a.out))?;

    out.emit(&json!({ "report": report, "stats": stats, "out": a.out }), || {
        let mut s = format!(
            "wrote {} records to {}\nkept {}  incomplete {}  deleted {}  duplicate {}  pii-scrubbed {}\n",
            kept.len(),
            a.out.display(),
            report.kept,
            report.dropped_incomplete,
            report.dropped_deleted,
            report.dropped_duplicate,
            report.dropped_pii_scrubbed
        );
        let absent = stats.sources.iter().filter(|s| s.count == 0).count();
        for src in stats.sources.iter().filter(|s| s.count > 0) {
            let expected = src.expected.map(|e| format!(" (expected {e})")).unwrap_or_default();
            let flag = if src.mismatch { "  MISMATCH" } else { "" };
            s.push_str(&format!("  {:<20}{}{expected}{flag}\n", src.source_tag, src.count));
        }
        if absent > 0 {
            s.push_str(&format!("  ({absent} registered sources have no records; see --json)\n"));
        }
        s
    });
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn embedder_for(config: Option<&ServiceConfig>, dims: usize) -> Result<Arc<dyn Embedder>, CliError> {
    let embedder = match config {
        Some(c) => c.embedder.build(),
        None => Arc::new(ReferenceEmbedder::new(dims)),
    };
    if embedder.dims() != dims {
        return Err(CliError::Validation(format!(
            "embedder produces {} dims but the index has {dims}",
            embedder.dims()
        )));
    }
    Ok(embedder)
}

fn build_index(a: BuildIndexArgs, config: Option<&ServiceConfig>, out: Output) -> Result<(), CliError> {
    let mut options = config.map(ServiceConfig::build_options).unwrap_or_default();
    if let Some(s) = a.scheme {
        options.scheme = s;
    }
    if let Some(m) = a.metric {
        options.metric = m;
    }
    if let Some(q) = a.clip_quantile {
        options.clip_quantile = q;
    }
    options.chunk_params = ChunkParams::new(
        a.chunk_size.unwrap_or(options.chunk_params.size_chars),
        a.chunk_overlap.unwrap_or(options.chunk_params.overlap_chars),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;

    let embedder: Arc<dyn Embedder> = match (a.dims, config) {
        (Some(dims), _) => Arc::new(ReferenceEmbedder::new(dims)),
        (None, Some(c)) => c.embedder.build(),
        (None, None) => Arc::new(ReferenceEmbedder::default()),
    };
    if !a.docs.is_dir() {
        return Err(CliError::Io(format!("{}: not a directory", a.docs.display())));
    }
    let docs = KnowledgeBase::read_documents(&a.docs).map_err(|e| CliError::from(e).context(&a.docs))?;
    let kb = KnowledgeBase::build(&docs, embedder.as_ref(), &options)?;
    let chunks_path = chunks_path_for(&a.out);
    kb.save_to(&a.out, &chunks_path).map_err(|e| CliError::from(e).context(&a.out))?;

    let summary = json!({
        "count": kb.index().len(),
        "dims": kb.index().dims(),
        "scheme": kb.index().scheme(),
        "documents": docs.len(),
        "chunks": kb.chunk_count(),
        "skipped": kb.skipped(),
        "index": a.out,
        "chunks_path": chunks_path,
    });
    out.emit(&summary, || {
        format!(
            "indexed {} chunks from {} documents ({} dims, {}) -> {}\n{}",
            kb.index().len(),
            docs.len(),
            kb.index().dims(),
            kb.index().scheme(),
            a.out.display(),
            if kb.skipped().is_empty() {
                String::new()
            } else {
                format!("skipped (no embeddable tokens): {}\n", kb.skipped().join(", "))
            }
        )
    });
    Ok(())
}

fn load_kb(index: &Path) -> Result<KnowledgeBase, CliError> {
    KnowledgeBase::load_from(index, &chunks_path_for(index)).map_err(|e| CliError::from(e).context(index))
}

fn query(a: QueryArgs, config: Option<&ServiceConfig>, out: Output) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Validation("k must be at least 1".into()));
    }
    let kb = load_kb(&a.index)?;
    let embedder = embedder_for(config, kb.index().dims())?;
    let hits = retrieve_context(&a.query, &kb, embedder.as_ref(), a.k)?;
    let citations: Vec<Citation> = hits
        .iter()
        .map(|(c, score)| Citation {
            chunk_id: c.id(),
            doc_id: c.doc_id.clone(),
            score: *score,
        })
        .collect();
    out.emit(&json!({ "query": a.query, "k": a.k, "citations": citations }), || {
        let mut s = String::new();
        for (rank, (chunk, score)) in hits.iter().enumerate() {
            let excerpt: String = chunk.text.chars().take(100).collect::<String>().replace('\n', " ");
            s.push_str(&format!("{}. {}  score {score:.4}\n   {excerpt}\n", rank + 1, chunk.id()));
        }
        if s.is_empty() {
            s.push_str("no results (empty index)\n");
        }
        s
    });
    Ok(())
}

fn select(a: SelectArgs, config: Option<&ServiceConfig>, out: Output) -> Result<(), CliError> {
    let profile = HardwareProfile::load(&a.profile).map_err(|e| CliError::from(e).context(&a.profile))?;
    let catalog = match (&a.catalog, config) {
        (Some(p), _) => load_catalog(p).map_err(|e| CliError::from(e).context(p))?,
        (None, Some(c)) => c.catalog()?,
        (None, None) => crate::select::builtin_catalog(),
    };
    let overhead = a
        .overhead_factor
        .or(config.map(|c| c.overhead_factor))
        .unwrap_or(crate::select::DEFAULT_OVERHEAD_FACTOR);
    let result = rank_candidates(&profile, &catalog, a.mode, overhead)?;
    out.emit(&result, || {
        let mut s = match &result.chosen {
            Some(m) => format!("chosen: {}\n", m.label()),
            None => "no feasible model\n".to_string(),
        };
        for c in &result.ranked {
            let verdict = if c.feasible {
                "ok".to_string()
            } else {
                c.violations.iter().map(|v| v.code()).collect::<Vec<_>>().join(",")
            };
            s.push_str(&format!(
                "  {:<22}{:>8.2} GB  score {:>5.1}  {verdict}\n",
                c.spec.label(),
                c.est_bytes as f64 / 1e9,
                c.spec.accuracy_score
            ));
        }
        s
    });
    if result.chosen.is_none() {
        return Err(CliError::Validation(format!(
            "no feasible model for profile `{}`",
            profile.name
        )));
    }
    Ok(())
}

fn serve(a: ServeArgs, config: Option<ServiceConfig>) -> Result<(), CliError> {
    let mut config = config.unwrap_or_default();
    if let Some(l) = a.listen {
        config.listen = l;
    }
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    if config.auth_tokens.is_empty() {
        if let Ok(token) = std::env::var("MEDAIDE_TOKEN") {
            config.auth_tokens.push(token);
        }
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::gateway::serve(config))?;
    Ok(())
}

fn bench(a: BenchArgs, config: Option<&ServiceConfig>, out: Output) -> Result<(), CliError> {
    let index = crate::index::load_index(&a.index).map_err(|e| CliError::from(e).context(&a.index))?;
    let embedder = embedder_for(config, index.dims())?;
    let file = std::fs::File::open(&a.queries).map_err(|e| CliError::from(e).context(&a.queries))?;
    let mut queries = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        queries.push(embedder.embed(&line)?.values);
    }
    let report = run_bench(&index, &queries, a.repetitions, a.k)?;
    out.emit(&report, || report.to_table());
    Ok(())
}

fn chat(a: ChatArgs, out: Output) -> Result<(), CliError> {
    let client = crate::gateway::Client::new(&a.url, a.token)?;
    let session = match a.session {
        Some(s) => s,
        None => client.create_session()?,
    };
    let reply = client.chat(&session, &a.message)?;
    out.emit(&json!({ "session_id": session, "reply": reply }), || {
        let mut s = format!("{}\n\nsession {session}  ({} ms)\n", reply.response, reply.latency_ms);
        for c in &reply.citations {
            s.push_str(&format!("  [{}] {:.4}\n", c.chunk_id, c.score));
        }
        s
    });
    Ok(())
}

fn mock_backend(a: MockBackendArgs) -> Result<(), CliError> {
    let mut log = match &a.log_prompts {
        Some(p) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| CliError::from(e).context(p))?,
        ),
        None => None,
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let served = serve_generate_lines(stdin.lock(), stdout.lock(), |req| {
        if let Some(f) = log.as_mut() {
            let line = serde_json::to_string(&req.prompt).map_err(|e| e.to_string())?;
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| e.to_string())?;
        }
        if a.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(a.delay_ms));
        }
        let params = GenerateParams {
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            seed: req.seed,
        };
        mock_generate(&req.prompt, &params).map_err(|e| e.to_string())
    });
    match served {
        // The caller hung up; nothing left to answer.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}
