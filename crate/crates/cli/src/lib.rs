//! Command-line front end: argument parsing, stage dispatch, exit codes.

pub mod api;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use contract_lineage::diff::{diff_hunks, lcs, longest_common_substring, source_lines};
use contract_lineage::embed::{EmbedConfig, EmbeddingModel};
use contract_lineage::lineage::LineageConfig;
use contract_lineage::seed::sha256_hex;
use contract_lineage::solparse::{tokenize, SourceFile};
use contract_lineage::triage::{SessionLock, TriageSession, DEFAULT_SAMPLE_FRACTION};
use contract_lineage::workspace::{PipelineOptions, StageReport, TrainScope, Workspace, WorkspaceError, SESSION};
use contract_lineage::{Address, Granularity};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USER: u8 = 1;
pub const EXIT_INTERNAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "contract-lineage",
    version,
    about = "Reconstruct and triage upgrade lineages of destructed contracts"
)]
pub struct Cli {
    /// Workspace directory holding every stage's outputs.
    #[arg(long, global = true, env = "CONTRACT_LINEAGE_WORKSPACE", default_value = "workspace")]
    pub workspace: PathBuf,
    /// Run seed; every random stage derives its own seed from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run even if upstream outputs are stale, and overwrite a session.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[value(alias = "unified")]
    Text,
    #[value(alias = "structured")]
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate and copy the corpus files into the workspace.
    Ingest {
        #[arg(long)]
        contracts: PathBuf,
        #[arg(long)]
        txs: PathBuf,
    },
    /// Normalize every contract, or dump tokens of one source.
    Normalize {
        #[arg(long, conflicts_with = "dump_normalized")]
        dump_tokens: bool,
        #[arg(long)]
        dump_normalized: bool,
        /// Source file to dump instead of a workspace contract.
        #[arg(long, conflicts_with = "contract")]
        file: Option<PathBuf>,
        #[arg(long)]
        contract: Option<String>,
    },
    /// Train the subword embedding model.
    Train(TrainArgs),
    /// Score candidate pairs and keep those above the threshold.
    Pair {
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
    },
    /// Diff every upgrade pair.
    Diff {
        #[arg(long, default_value = "line")]
        granularity: Granularity,
    },
    /// Run the detectors over the corpus, or over one contract.
    Detect {
        #[arg(long)]
        contract: Option<String>,
    },
    #[command(subcommand)]
    Triage(TriageCommand),
    /// Export the triage report.
    Report {
        #[arg(long)]
        draft: bool,
    },
    #[command(subcommand)]
    Model(ModelCommand),
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Longest common subsequence of two files.
    Lcs {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "line")]
        granularity: Granularity,
        /// Report the longest common contiguous run instead.
        #[arg(long)]
        contiguous: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub dimension: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long, default_value_t = 3)]
    pub ngram_min: usize,
    #[arg(long, default_value_t = 6)]
    pub ngram_max: usize,
    #[arg(long, default_value_t = 1 << 21)]
    pub buckets: u32,
    #[arg(long, default_value = "all")]
    pub train_scope: TrainScope,
}

impl TrainArgs {
    fn config(&self) -> EmbedConfig {
        EmbedConfig {
            dimension: self.dimension,
            window: self.window,
            epochs: self.epochs,
            negative_samples: self.negative,
            learning_rate: self.learning_rate,
            min_count: self.min_count,
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
            bucket_count: self.buckets,
            seed: 0,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum TriageCommand {
    /// Create a session from the workspace pairs.
    Init {
        #[arg(long, default_value_t = DEFAULT_SAMPLE_FRACTION)]
        fraction: f64,
    },
    /// Serve the triage API and the web client.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Session file; defaults to the workspace session.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Directory of static client assets.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ModelCommand {
    /// Print model metadata, or one token's vector.
    Inspect {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        token: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum PipelineCommand {
    /// Run every stage from ingest to triage init.
    Run {
        #[arg(long)]
        contracts: PathBuf,
        #[arg(long)]
        txs: PathBuf,
        /// Output workspace; overrides --workspace.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
        #[arg(long, default_value = "line")]
        granularity: Granularity,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_FRACTION)]
        fraction: f64,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<WorkspaceError> for CliError {
    fn from(e: WorkspaceError) -> CliError {
        if e.is_user_error() {
            CliError::User(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &StageReport, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    for d in &report.diagnostics {
        writeln!(err, "{d}").map_err(internal)?;
    }
    match format {
        Format::Text => writeln!(out, "{}", report.summary),
        Format::Json => writeln!(out, "{}", serde_json::json!({ "summary": report.summary })),
    }
    .map_err(internal)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut ws = Workspace::open(&cli.workspace);
    ws.force = cli.force;
    match &cli.command {
        Command::Ingest { contracts, txs } => emit(&ws.ingest(contracts, txs)?, cli.format, out, err),
        Command::Normalize {
            dump_tokens,
            dump_normalized,
            file,
            contract,
        } => {
            if !dump_tokens && !dump_normalized {
                return emit(&ws.normalize()?, cli.format, out, err);
            }
            let (text, origin) = match (file, contract) {
                (Some(f), _) => (
                    read_text(f)?,
                    Address::parse(&format!("0x{}", "0".repeat(40))).map_err(internal)?,
                ),
                (None, Some(a)) => {
                    let corpus = ws.corpus()?;
                    let addr = Address::parse(a).map_err(|_| user(WorkspaceError::UnknownAddress(a.clone())))?;
                    let c = corpus
                        .get(&addr)
                        .ok_or_else(|| user(WorkspaceError::UnknownAddress(a.clone())))?;
                    (c.source.clone(), addr)
                }
                (None, None) => return Err(user("a dump needs --file or --contract")),
            };
            let mut buf = String::new();
            if *dump_tokens {
                for t in tokenize(&text).map_err(user)? {
                    buf.push_str(&format!("{t}\n"));
                }
            } else {
                let file = SourceFile::parse(&text).map_err(user)?;
                for t in file.normalized(&origin).tokens {
                    buf.push_str(&t);
                    buf.push('\n');
                }
            }
            out.write_all(buf.as_bytes()).map_err(internal)
        }
        Command::Train(args) => emit(
            &ws.train(&args.config(), cli.seed, args.train_scope)?,
            cli.format,
            out,
            err,
        ),
        Command::Pair { threshold } => {
            let config = LineageConfig::new(*threshold).map_err(user)?;
            emit(&ws.pair(config)?, cli.format, out, err)
        }
        Command::Diff { granularity } => {
            let report = ws.diff(*granularity)?;
            for d in &report.diagnostics {
                writeln!(err, "{d}").map_err(internal)?;
            }
            let path = match cli.format {
                Format::Text => contract_lineage::workspace::DIFFS_UNIFIED,
                Format::Json => contract_lineage::workspace::DIFFS,
            };
            let bytes = std::fs::read(ws.path(path)).map_err(internal)?;
            out.write_all(&bytes).map_err(internal)
        }
        Command::Detect { contract } => {
            let findings = match contract {
                Some(a) => ws.detect_one(a)?,
                None => {
                    let report = ws.detect()?;
                    for d in &report.diagnostics {
                        writeln!(err, "{d}").map_err(internal)?;
                    }
                    ws.findings()?
                }
            };
            match cli.format {
                Format::Text => {
                    for f in &findings {
                        writeln!(out, "{f}").map_err(internal)?;
                    }
                    Ok(())
                }
                Format::Json => {
                    writeln!(out, "{}", serde_json::to_string_pretty(&findings).map_err(internal)?).map_err(internal)
                }
            }
        }
        Command::Triage(TriageCommand::Init { fraction }) => {
            emit(&ws.triage_init(cli.seed, *fraction)?, cli.format, out, err)
        }
        Command::Triage(TriageCommand::Serve {
            port,
            bind,
            session,
            assets,
        }) => {
            let path = session.clone().unwrap_or_else(|| ws.path(SESSION));
            serve(&path, bind, *port, assets.clone(), err)
        }
        Command::Report { draft } => {
            let report = ws.report(*draft)?;
            match cli.format {
                Format::Text => out.write_all(report.to_markdown().as_bytes()),
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(internal)?),
            }
            .map_err(internal)
        }
        Command::Model(ModelCommand::Inspect { model, token }) => {
            let path = model
                .clone()
                .unwrap_or_else(|| ws.path(contract_lineage::workspace::MODEL));
            let bytes = std::fs::read(&path).map_err(|e| user(format!("{}: {e}", path.display())))?;
            let m = EmbeddingModel::read_from(bytes.as_slice()).map_err(user)?;
            inspect(&m, &bytes, token.as_deref(), cli.format, out)
        }
        Command::Pipeline(PipelineCommand::Run {
            contracts,
            txs,
            out: dir,
            threshold,
            granularity,
            fraction,
            train,
        }) => {
            if let Some(dir) = dir {
                ws = Workspace::open(dir);
                ws.force = cli.force;
            }
            let opts = PipelineOptions {
                seed: cli.seed,
                embed: train.config(),
                train_scope: train.train_scope,
                lineage: LineageConfig::new(*threshold).map_err(user)?,
                granularity: *granularity,
                sample_fraction: *fraction,
            };
            for report in ws.run_pipeline(contracts, txs, &opts)? {
                emit(&report, cli.format, out, err)?;
            }
            Ok(())
        }
        Command::Lcs {
            a,
            b,
            granularity,
            contiguous,
        } => {
            let (ta, tb) = (read_text(a)?, read_text(b)?);
            let symbols = |text: &str| -> Result<Vec<String>, CliError> {
                match granularity {
                    Granularity::Line => Ok(source_lines(text)),
                    Granularity::NormalizedToken => {
                        let origin = Address::parse(&format!("0x{}", "0".repeat(40))).map_err(internal)?;
                        Ok(SourceFile::parse(text).map_err(user)?.normalized(&origin).tokens)
                    }
                }
            };
            let (sa, sb) = (symbols(&ta)?, symbols(&tb)?);
            let common: Vec<String> = if *contiguous {
                let (i, _, n) = longest_common_substring(&sa, &sb);
                sa[i..i + n].to_vec()
            } else {
                lcs(&sa, &sb)
            };
            match cli.format {
                Format::Text => {
                    writeln!(out, "length {}", common.len()).map_err(internal)?;
                    for s in &common {
                        writeln!(out, "{s}").map_err(internal)?;
                    }
                    Ok(())
                }
                Format::Json => {
                    let hunks = diff_hunks(&sa, &sb);
                    writeln!(
                        out,
                        "{}",
                        serde_json::json!({ "length": common.len(), "common": common, "hunks": hunks })
                    )
                    .map_err(internal)
                }
            }
        }
    }
}

fn inspect(
    m: &EmbeddingModel,
    bytes: &[u8],
    token: Option<&str>,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if let Some(t) = token {
        let v = m.token_vector(t);
        let known = m.vocabulary().get(t).is_some();
        return match format {
            Format::Text => {
                let cells: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                writeln!(
                    out,
                    "{t} ({}) {}",
                    if known { "in vocabulary" } else { "subwords only" },
                    cells.join(" ")
                )
            }
            Format::Json => writeln!(
                out,
                "{}",
                serde_json::json!({ "token": t, "in_vocabulary": known, "vector": v })
            ),
        }
        .map_err(internal);
    }
    let info = serde_json::json!({
        "sha256": sha256_hex(bytes),
        "config": m.config(),
        "vocabulary": m.vocabulary().len(),
        "materialized_ngrams": m.materialized_ngrams(),
        "finite": m.all_finite(),
    });
    match format {
        Format::Text => {
            let c = m.config();
            writeln!(out, "sha256      {}", sha256_hex(bytes)).map_err(internal)?;
            writeln!(out, "dimension   {}", c.dimension).map_err(internal)?;
            writeln!(
                out,
                "window      {}  epochs {}  negative {}",
                c.window, c.epochs, c.negative_samples
            )
            .map_err(internal)?;
            writeln!(
                out,
                "subwords    {}..={} in {} buckets ({} used)",
                c.ngram_min,
                c.ngram_max,
                c.bucket_count,
                m.materialized_ngrams()
            )
            .map_err(internal)?;
            writeln!(out, "vocabulary  {}", m.vocabulary().len()).map_err(internal)?;
            for (i, w) in m.vocabulary().words().iter().take(10).enumerate() {
                writeln!(out, "  {w}\t{}", m.vocabulary().count(i)).map_err(internal)?;
            }
            writeln!(out, "finite      {}", m.all_finite()).map_err(internal)
        }
        Format::Json => writeln!(out, "{info}").map_err(internal),
    }
}

fn serve(path: &Path, bind: &str, port: u16, assets: Option<PathBuf>, err: &mut dyn Write) -> Result<(), CliError> {
    let _lock = SessionLock::acquire(path).map_err(user)?;
    let session = TriageSession::load(path).map_err(user)?;
    let app = api::router(api::shared(session, Some(path.to_path_buf())), assets);
    let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .map_err(|e| user(format!("cannot bind {bind}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(internal)?;
        writeln!(err, "serving {} on http://{addr}", path.display()).map_err(internal)?;
        axum::serve(listener, app).await.map_err(internal)
    })
}
