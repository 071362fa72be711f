//! On-disk workspace: one directory holding every stage's outputs plus a
//! manifest of the digests each stage consumed and produced.
//!
//! A stage refuses to run when an upstream output was modified, or was
//! produced from inputs that have since changed, unless forced.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, Address, Corpus, CorpusError};
use crate::detect::{pair_delta, run_all, Finding, PairFindingDelta};
use crate::diff::{source_lines, unified, DiffReport, Granularity};
use crate::embed::{train, EmbedConfig, EmbedError, EmbeddingModel};
use crate::lineage::{
    all_candidate_pairs, filter_groups, filter_threshold, group_by_creator, score_pairs, LineageConfig, UpgradePair,
};
use crate::seed::{sha256_hex, stage_seed};
use crate::solparse::{NormalizedTokenSequence, SourceFile};
use crate::triage::{Evidence, Report, TriageError, TriageSession};

pub const CONTRACTS: &str = "inputs/contracts.json";
pub const TRANSACTIONS: &str = "inputs/transactions.json";
pub const NORMALIZED: &str = "normalized.json";
pub const MODEL: &str = "model.bin";
pub const PAIRS: &str = "pairs.json";
pub const DIFFS: &str = "diffs.json";
pub const DIFFS_UNIFIED: &str = "diffs.diff";
pub const FINDINGS: &str = "findings.json";
pub const DELTAS: &str = "deltas.json";
pub const SESSION: &str = "session.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const MANIFEST: &str = "manifest.json";

/// Context lines around changed regions in unified output and card views.
pub const DIFF_CONTEXT: usize = 3;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("stage {stage} needs {file}, which has not been produced; run {upstream} first")]
    MissingUpstream {
        stage: &'static str,
        upstream: &'static str,
        file: String,
    },
    #[error("stage {stage}: {file} is stale ({why}); rerun {upstream} or pass --force")]
    StaleUpstream {
        stage: &'static str,
        upstream: &'static str,
        file: String,
        why: &'static str,
    },
    #[error("unknown address {0}")]
    UnknownAddress(String),
    #[error("{0} already exists; pass --force to overwrite it")]
    WouldOverwrite(PathBuf),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl WorkspaceError {
    /// True for problems with the user's inputs or invocation rather than
    /// failures of the tool itself.
    pub fn is_user_error(&self) -> bool {
        match self {
            WorkspaceError::Io { source, .. } => source.kind() == io::ErrorKind::NotFound,
            WorkspaceError::Json { .. } => true,
            WorkspaceError::Embed(e) => !matches!(e, EmbedError::Io(_)),
            WorkspaceError::Triage(e) => !matches!(e, TriageError::Io(_)),
            _ => true,
        }
    }
}

type Result<T> = std::result::Result<T, WorkspaceError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Normalize,
    Train,
    Pair,
    Diff,
    Detect,
    Triage,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Normalize => "normalize",
            Stage::Train => "train",
            Stage::Pair => "pair",
            Stage::Diff => "diff",
            Stage::Detect => "detect",
            Stage::Triage => "triage",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Normalize => &[Stage::Ingest],
            Stage::Train => &[Stage::Ingest, Stage::Normalize],
            Stage::Pair => &[Stage::Ingest, Stage::Normalize, Stage::Train],
            Stage::Diff => &[Stage::Ingest, Stage::Normalize, Stage::Pair],
            Stage::Detect => &[Stage::Ingest, Stage::Pair],
            Stage::Triage => &[Stage::Ingest, Stage::Pair, Stage::Diff, Stage::Detect],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<Stage, StageRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedEntry {
    pub address: Address,
    pub name: String,
    pub recoveries: usize,
    pub tokens: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainScope {
    Grouped,
    #[default]
    All,
}

impl std::str::FromStr for TrainScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "grouped" => Ok(TrainScope::Grouped),
            "all" => Ok(TrainScope::All),
            other => Err(format!("unknown train scope {other:?}")),
        }
    }
}

/// Options for a full run.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub seed: u64,
    pub embed: EmbedConfig,
    pub train_scope: TrainScope,
    pub lineage: LineageConfig,
    pub granularity: Granularity,
    pub sample_fraction: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: 0,
            embed: EmbedConfig::default(),
            train_scope: TrainScope::All,
            lineage: LineageConfig::default(),
            granularity: Granularity::Line,
            sample_fraction: crate::triage::DEFAULT_SAMPLE_FRACTION,
        }
    }
}

/// Stage outcome: human-readable summary plus diagnostics for stderr.
#[derive(Clone, Debug, Default)]
pub struct StageReport {
    pub summary: String,
    pub diagnostics: Vec<String>,
}

pub struct Workspace {
    root: PathBuf,
    pub force: bool,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Workspace {
        Workspace {
            root: root.into(),
            force: false,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| WorkspaceError::Json { path, source }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<String> {
        let path = self.path(name);
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
        tmp.write_all(bytes).map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
        Ok(sha256_hex(bytes))
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| WorkspaceError::Json {
            path: self.path(name),
            source,
        })?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map_err(|source| WorkspaceError::Json { path, source })
    }

    fn record(
        &self,
        stage: Stage,
        config: serde_json::Value,
        inputs: &[&str],
        outputs: BTreeMap<String, String>,
    ) -> Result<()> {
        let mut manifest = self.manifest()?;
        let inputs = inputs
            .iter()
            .map(|name| Ok((name.to_string(), digest_file(&self.path(name))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        manifest.stages.insert(
            stage,
            StageRecord {
                config,
                inputs,
                outputs,
            },
        );
        self.write_json(MANIFEST, &manifest)?;
        Ok(())
    }

    /// Verifies that every upstream stage has run and that its recorded
    /// inputs and outputs still match the files on disk.
    pub fn ensure_fresh(&self, stage: Stage) -> Result<()> {
        if self.force {
            return Ok(());
        }
        let manifest = self.manifest()?;
        for &up in stage.upstream() {
            let Some(rec) = manifest.stages.get(&up) else {
                return Err(WorkspaceError::MissingUpstream {
                    stage: stage.name(),
                    upstream: up.name(),
                    file: format!("{} outputs", up.name()),
                });
            };
            for (file, digest, why) in rec
                .outputs
                .iter()
                .map(|(f, d)| (f, d, "modified after it was written"))
                .chain(
                    rec.inputs
                        .iter()
                        .map(|(f, d)| (f, d, "its inputs changed since it was produced")),
                )
            {
                let current = match fs::read(self.path(file)) {
                    Ok(bytes) => sha256_hex(&bytes),
                    Err(e) if e.kind() == io::ErrorKind::NotFound => {
                        return Err(WorkspaceError::MissingUpstream {
                            stage: stage.name(),
                            upstream: up.name(),
                            file: file.clone(),
                        })
                    }
                    Err(e) => return Err(io_err(&self.path(file))(e)),
                };
                if &current != digest {
                    return Err(WorkspaceError::StaleUpstream {
                        stage: stage.name(),
                        upstream: up.name(),
                        file: file.clone(),
                        why,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Ok(load_corpus(&self.path(CONTRACTS), &self.path(TRANSACTIONS))?)
    }

    pub fn normalized(&self) -> Result<BTreeMap<Address, NormalizedTokenSequence>> {
        let entries: Vec<NormalizedEntry> = self.read_json(NORMALIZED)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                let seq = NormalizedTokenSequence {
                    origin: e.address.clone(),
                    tokens: e.tokens,
                };
                (e.address, seq)
            })
            .collect())
    }

    pub fn model(&self) -> Result<EmbeddingModel> {
        let path = self.path(MODEL);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        Ok(EmbeddingModel::read_from(bytes.as_slice())?)
    }

    pub fn pairs(&self) -> Result<Vec<UpgradePair>> {
        self.read_json(PAIRS)
    }

    pub fn diffs(&self) -> Result<Vec<DiffReport>> {
        self.read_json(DIFFS)
    }

    pub fn findings(&self) -> Result<Vec<Finding>> {
        self.read_json(FINDINGS)
    }

    pub fn deltas(&self) -> Result<Vec<PairFindingDelta>> {
        self.read_json(DELTAS)
    }

    pub fn session(&self) -> Result<TriageSession> {
        Ok(TriageSession::load(&self.path(SESSION))?)
    }

    // ---- stages ----

    pub fn ingest(&self, contracts: &Path, transactions: &Path) -> Result<StageReport> {
        let corpus = load_corpus(contracts, transactions)?;
        let raw_contracts = fs::read(contracts).map_err(io_err(contracts))?;
        let raw_txs = fs::read(transactions).map_err(io_err(transactions))?;
        let mut outputs = BTreeMap::new();
        outputs.insert(CONTRACTS.to_string(), self.write_bytes(CONTRACTS, &raw_contracts)?);
        outputs.insert(TRANSACTIONS.to_string(), self.write_bytes(TRANSACTIONS, &raw_txs)?);
        self.record(Stage::Ingest, serde_json::Value::Null, &[], outputs)?;
        let destructed = corpus.contracts.values().filter(|c| c.is_destructed).count();
        Ok(StageReport {
            summary: format!(
                "ingested {} contracts ({} destructed), {} excluded",
                corpus.len(),
                destructed,
                corpus.exclusions.len()
            ),
            diagnostics: corpus.exclusions.iter().map(|e| e.to_string()).collect(),
        })
    }

    pub fn normalize(&self) -> Result<StageReport> {
        self.ensure_fresh(Stage::Normalize)?;
        let corpus = self.corpus()?;
        let mut entries = Vec::new();
        let mut diagnostics = Vec::new();
        for c in corpus.contracts.values() {
            match SourceFile::parse(&c.source) {
                Ok(file) => {
                    if file.recoveries > 0 {
                        diagnostics.push(format!("RECOVER {} {} region(s)", c.address, file.recoveries));
                    }
                    entries.push(NormalizedEntry {
                        address: c.address.clone(),
                        name: c.name.clone(),
                        recoveries: file.recoveries,
                        tokens: file.normalized(&c.address).tokens,
                    });
                }
                Err(e) => diagnostics.push(format!("SKIP {} {e}", c.address)),
            }
        }
        let mut outputs = BTreeMap::new();
        outputs.insert(NORMALIZED.to_string(), self.write_json(NORMALIZED, &entries)?);
        self.record(Stage::Normalize, serde_json::Value::Null, &[CONTRACTS], outputs)?;
        Ok(StageReport {
            summary: format!("normalized {} contracts", entries.len()),
            diagnostics,
        })
    }

    /// `config.seed` is ignored; the training seed is derived from `seed`.
    pub fn train(&self, config: &EmbedConfig, seed: u64, scope: TrainScope) -> Result<StageReport> {
        self.ensure_fresh(Stage::Train)?;
        let normalized = self.normalized()?;
        let docs: Vec<NormalizedTokenSequence> = match scope {
            TrainScope::All => normalized.into_values().collect(),
            TrainScope::Grouped => {
                let corpus = self.corpus()?;
                let members: Vec<Address> = filter_groups(group_by_creator(&corpus))
                    .into_iter()
                    .flat_map(|g| g.members.into_iter().map(|m| m.address))
                    .collect();
                members.iter().filter_map(|a| normalized.get(a).cloned()).collect()
            }
        };
        let config = EmbedConfig {
            seed: stage_seed(seed, "train"),
            ..config.clone()
        };
        let model = train(&docs, &config)?;
        if !model.all_finite() {
            return Err(WorkspaceError::Embed(EmbedError::DegenerateConfig(
                "training diverged to non-finite values; lower the learning rate".into(),
            )));
        }
        let mut outputs = BTreeMap::new();
        outputs.insert(MODEL.to_string(), self.write_bytes(MODEL, &model.to_bytes())?);
        let record_config = serde_json::json!({ "embed": config, "run_seed": seed, "scope": scope });
        self.record(
            Stage::Train,
            record_config,
            &[CONTRACTS, TRANSACTIONS, NORMALIZED],
            outputs,
        )?;
        Ok(StageReport {
            summary: format!(
                "trained on {} documents, vocabulary {}, dimension {}",
                docs.len(),
                model.vocabulary().len(),
                model.dimension()
            ),
            diagnostics: Vec::new(),
        })
    }

    pub fn pair(&self, config: LineageConfig) -> Result<StageReport> {
        self.ensure_fresh(Stage::Pair)?;
        let corpus = self.corpus()?;
        let normalized = self.normalized()?;
        let model = self.model()?;
        let candidates = all_candidate_pairs(&corpus);
        let (scored, diagnostics) = score_pairs(&candidates, &model, &normalized);
        let pairs = filter_threshold(&scored, config);
        let mut outputs = BTreeMap::new();
        outputs.insert(PAIRS.to_string(), self.write_json(PAIRS, &pairs)?);
        self.record(
            Stage::Pair,
            serde_json::json!({ "threshold": config.threshold }),
            &[CONTRACTS, TRANSACTIONS, NORMALIZED, MODEL],
            outputs,
        )?;
        Ok(StageReport {
            summary: format!(
                "{} candidate pairs, {} scored, {} above threshold {}",
                candidates.len(),
                scored.len(),
                pairs.len(),
                config.threshold
            ),
            diagnostics,
        })
    }

    fn symbols(
        &self,
        corpus: &Corpus,
        normalized: &BTreeMap<Address, NormalizedTokenSequence>,
        granularity: Granularity,
        addr: &Address,
    ) -> Vec<String> {
        match granularity {
            Granularity::Line => corpus.get(addr).map(|c| source_lines(&c.source)).unwrap_or_default(),
            Granularity::NormalizedToken => normalized.get(addr).map(|n| n.tokens.clone()).unwrap_or_default(),
        }
    }

    pub fn diff(&self, granularity: Granularity) -> Result<StageReport> {
        self.ensure_fresh(Stage::Diff)?;
        let corpus = self.corpus()?;
        let normalized = self.normalized()?;
        let pairs = self.pairs()?;
        let mut reports = Vec::new();
        let mut text = String::new();
        for p in &pairs {
            let a = self.symbols(&corpus, &normalized, granularity, &p.predecessor);
            let b = self.symbols(&corpus, &normalized, granularity, &p.successor);
            let report = DiffReport::build(&p.predecessor, &p.successor, granularity, &a, &b);
            text.push_str(&unified(&report, &a, &b, DIFF_CONTEXT));
            reports.push(report);
        }
        let mut outputs = BTreeMap::new();
        outputs.insert(DIFFS.to_string(), self.write_json(DIFFS, &reports)?);
        outputs.insert(
            DIFFS_UNIFIED.to_string(),
            self.write_bytes(DIFFS_UNIFIED, text.as_bytes())?,
        );
        self.record(
            Stage::Diff,
            serde_json::json!({ "granularity": granularity, "context": DIFF_CONTEXT }),
            &[CONTRACTS, NORMALIZED, PAIRS],
            outputs,
        )?;
        Ok(StageReport {
            summary: format!("diffed {} pairs", reports.len()),
            diagnostics: Vec::new(),
        })
    }

    pub fn detect(&self) -> Result<StageReport> {
        self.ensure_fresh(Stage::Detect)?;
        let corpus = self.corpus()?;
        let pairs = self.pairs()?;
        let mut findings: BTreeMap<&Address, Vec<Finding>> = BTreeMap::new();
        let mut diagnostics = Vec::new();
        for c in corpus.contracts.values() {
            match SourceFile::parse(&c.source) {
                Ok(file) => {
                    findings.insert(&c.address, run_all(&c.address, &file));
                }
                Err(e) => diagnostics.push(format!("SKIP {} {e}", c.address)),
            }
        }
        let empty = Vec::new();
        let deltas: Vec<PairFindingDelta> = pairs
            .iter()
            .map(|p| {
                pair_delta(
                    &p.predecessor,
                    &p.successor,
                    findings.get(&p.predecessor).unwrap_or(&empty),
                    findings.get(&p.successor).unwrap_or(&empty),
                )
            })
            .collect();
        let all: Vec<&Finding> = findings.values().flatten().collect();
        let mut outputs = BTreeMap::new();
        outputs.insert(FINDINGS.to_string(), self.write_json(FINDINGS, &all)?);
        outputs.insert(DELTAS.to_string(), self.write_json(DELTAS, &deltas)?);
        self.record(Stage::Detect, serde_json::Value::Null, &[CONTRACTS, PAIRS], outputs)?;
        Ok(StageReport {
            summary: format!("{} findings across {} contracts", all.len(), findings.len()),
            diagnostics,
        })
    }

    /// Findings for one contract, without touching the workspace files.
    pub fn detect_one(&self, address: &str) -> Result<Vec<Finding>> {
        let addr = Address::parse(address).map_err(|_| WorkspaceError::UnknownAddress(address.to_string()))?;
        let corpus = self.corpus()?;
        let c = corpus
            .get(&addr)
            .ok_or_else(|| WorkspaceError::UnknownAddress(address.to_string()))?;
        let file = SourceFile::parse(&c.source).map_err(|e| WorkspaceError::InvalidArgument(format!("{addr}: {e}")))?;
        Ok(run_all(&addr, &file))
    }

    pub fn triage_init(&self, seed: u64, sample_fraction: f64) -> Result<StageReport> {
        let path = self.path(SESSION);
        if path.exists() && !self.force {
            return Err(WorkspaceError::WouldOverwrite(path));
        }
        self.ensure_fresh(Stage::Triage)?;
        let corpus = self.corpus()?;
        let pairs = self.pairs()?;
        let diffs = self.diffs()?;
        let deltas = self.deltas()?;
        let mut session = TriageSession::create(&pairs, seed, sample_fraction)?;
        let diff_of: BTreeMap<(&Address, &Address), &DiffReport> =
            diffs.iter().map(|d| ((&d.predecessor, &d.successor), d)).collect();
        let delta_of: BTreeMap<(&Address, &Address), &PairFindingDelta> =
            deltas.iter().map(|d| ((&d.predecessor, &d.successor), d)).collect();
        let normalized = self.normalized()?;
        let cards: Vec<(String, UpgradePair)> = session.cards.iter().map(|c| (c.id.clone(), c.pair.clone())).collect();
        for (id, pair) in cards {
            let key = (&pair.predecessor, &pair.successor);
            let (Some(diff), Some(delta)) = (diff_of.get(&key), delta_of.get(&key)) else {
                continue;
            };
            let source = |a: &Address| corpus.get(a).map(|c| c.source.clone()).unwrap_or_default();
            let evidence = Evidence {
                pred_source: source(&pair.predecessor),
                succ_source: source(&pair.successor),
                pred_lines: self.symbols(&corpus, &normalized, diff.granularity, &pair.predecessor),
                succ_lines: self.symbols(&corpus, &normalized, diff.granularity, &pair.successor),
                diff: (*diff).clone(),
                delta: (*delta).clone(),
            };
            session.attach_evidence(&id, evidence)?;
        }
        session.save(&path)?;
        let mut outputs = BTreeMap::new();
        outputs.insert(SESSION.to_string(), digest_file(&path)?);
        self.record(
            Stage::Triage,
            serde_json::json!({ "run_seed": seed, "sample_fraction": sample_fraction }),
            &[CONTRACTS, PAIRS, DIFFS, DELTAS],
            outputs,
        )?;
        let c = session.counts();
        Ok(StageReport {
            summary: format!("session with {} cards, {} in iteration 1", c.total, c.iteration1),
            diagnostics: Vec::new(),
        })
    }

    pub fn report(&self, draft: bool) -> Result<Report> {
        let report = self.session()?.export_report(draft)?;
        self.write_json(REPORT_JSON, &report)?;
        self.write_bytes(REPORT_MD, report.to_markdown().as_bytes())?;
        Ok(report)
    }

    /// Every stage in order, ending with a fresh triage session.
    pub fn run_pipeline(
        &self,
        contracts: &Path,
        transactions: &Path,
        opts: &PipelineOptions,
    ) -> Result<Vec<StageReport>> {
        Ok(vec![
            self.ingest(contracts, transactions)?,
            self.normalize()?,
            self.train(&opts.embed, opts.seed, opts.train_scope)?,
            self.pair(opts.lineage)?,
            self.diff(opts.granularity)?,
            self.detect()?,
            self.triage_init(opts.seed, opts.sample_fraction)?,
        ])
    }
}
