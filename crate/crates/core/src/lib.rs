//! Upgrade-lineage reconstruction for destructed Ethereum contracts.
//!
//! The pipeline loads an offline corpus, groups contracts by creator, ranks
//! them by creation time, and matches each destructed contract to later
//! contracts whose normalized code embeds similarly. Matched pairs are then
//! diffed, scanned with four defect detectors, and sorted by humans in a
//! card-sorting triage session.

pub mod corpus;
pub mod detect;
pub mod diff;
pub mod embed;
pub mod lineage;
pub mod seed;
pub mod solparse;
pub mod triage;
pub mod workspace;

pub use corpus::{load_corpus, Address, ContractRecord, Corpus, CorpusError, TransactionRecord};
pub use detect::{Detector, Finding, PairFindingDelta};
pub use diff::{DiffHunk, DiffReport, Granularity, HunkKind};
pub use embed::{EmbedConfig, EmbeddingModel};
pub use lineage::{CandidatePair, CreatorGroup, LineageConfig, UpgradePair};
pub use solparse::{NormalizedTokenSequence, SourceFile};
pub use triage::{Card, Category, Phase, TriageSession};
pub use workspace::{PipelineOptions, Workspace, WorkspaceError};
