//! Open card sorting over upgrade pairs.
//!
//! A session holds one card per pair. A seeded sample of the cards forms
//! iteration 1, where categories are created while labeling; the rest are
//! sorted in iteration 2. Every mutation is appended to an audit log, and
//! replaying that log over a fresh session reproduces the same state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Finding, PairFindingDelta};
use crate::diff::DiffReport;
use crate::lineage::UpgradePair;
use crate::seed::{sha256_hex, stage_seed};

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.20;
pub const SESSION_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("no upgrade pairs to triage")]
    NoPairs,
    #[error("sample fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("unknown card {0}")]
    UnknownCard(String),
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("card {card} belongs to iteration {card_iteration} but the session is in {phase}")]
    PhaseViolation {
        card: String,
        card_iteration: u8,
        phase: Phase,
    },
    #[error("exclusion reason must not be empty")]
    EmptyReason,
    #[error("category title must not be empty")]
    EmptyTitle,
    #[error("a category titled {0:?} already exists")]
    DuplicateTitle(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("{0} card(s) still unresolved")]
    UnresolvedCards(usize),
    #[error("session is not complete; export a draft instead")]
    SessionIncomplete,
    #[error("stale revision: expected {expected}, session is at {actual}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("session file {0} is locked by another process")]
    Locked(PathBuf),
    #[error("unsupported session format {0}")]
    Format(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Iteration1,
    Iteration2,
    Complete,
}

impl Phase {
    /// Iteration number for the labeling phases.
    pub fn iteration(self) -> Option<u8> {
        match self {
            Phase::Iteration1 => Some(1),
            Phase::Iteration2 => Some(2),
            Phase::Complete => None,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Iteration1 => "iteration1",
            Phase::Iteration2 => "iteration2",
            Phase::Complete => "complete",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum CardState {
    Unlabeled,
    Labeled { category_id: String },
    Excluded { reason: String },
}

impl CardState {
    pub fn is_resolved(&self) -> bool {
        !matches!(self, CardState::Unlabeled)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CardState::Unlabeled => "unlabeled",
            CardState::Labeled { .. } => "labeled",
            CardState::Excluded { .. } => "excluded",
        }
    }
}

/// Material a reviewer looks at for one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub pred_source: String,
    pub succ_source: String,
    pub pred_lines: Vec<String>,
    pub succ_lines: Vec<String>,
    pub diff: DiffReport,
    pub delta: PairFindingDelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Card {
    pub id: String,
    pub pair: UpgradePair,
    pub iteration: u8,
    #[serde(flatten)]
    pub state: CardState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

/// Stable card id derived from the pair.
pub fn card_id(pair: &UpgradePair) -> String {
    let digest = sha256_hex(format!("{}:{}", pair.predecessor, pair.successor).as_bytes());
    digest[..16].to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub title: String,
    pub description: String,
    pub created_in_iteration: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    CreateCategory {
        category_id: String,
        title: String,
        description: String,
    },
    Label {
        card_id: String,
        category_id: String,
        previous: CardState,
    },
    Exclude {
        card_id: String,
        reason: String,
        previous: CardState,
    },
    AdvancePhase {
        from: Phase,
        to: Phase,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: u64,
    pub actor: String,
    pub action: Action,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub unlabeled: usize,
    pub labeled: usize,
    pub excluded: usize,
    pub iteration1: usize,
    pub iteration1_unresolved: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageSession {
    pub format: u32,
    pub seed: u64,
    pub sample_fraction: f64,
    pub phase: Phase,
    pub revision: u64,
    pub cards: Vec<Card>,
    pub categories: Vec<Category>,
    pub audit_log: Vec<AuditEntry>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Number of iteration-1 cards for `n` cards.
pub fn sample_size(n: usize, fraction: f64) -> usize {
    if n == 0 {
        0
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n)
    }
}

impl TriageSession {
    pub fn create(pairs: &[UpgradePair], seed: u64, sample_fraction: f64) -> Result<Self, TriageError> {
        if pairs.is_empty() {
            return Err(TriageError::NoPairs);
        }
        if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
            return Err(TriageError::BadFraction(sample_fraction));
        }
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.key().cmp(&b.key()));
        sorted.dedup_by(|a, b| a.key() == b.key());

        let k = sample_size(sorted.len(), sample_fraction);
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "triage"));
        let chosen: BTreeSet<usize> = rand::seq::index::sample(&mut rng, sorted.len(), k)
            .into_iter()
            .collect();
        let cards = sorted
            .into_iter()
            .enumerate()
            .map(|(i, pair)| Card {
                id: card_id(&pair),
                pair,
                iteration: if chosen.contains(&i) { 1 } else { 2 },
                state: CardState::Unlabeled,
                evidence: None,
            })
            .collect();
        Ok(TriageSession {
            format: SESSION_FORMAT,
            seed,
            sample_fraction,
            phase: Phase::Iteration1,
            revision: 0,
            cards,
            categories: Vec::new(),
            audit_log: Vec::new(),
        })
    }

    pub fn card(&self, id: &str) -> Option<&Card> {
        self.cards.iter().find(|c| c.id == id)
    }

    pub fn category(&self, id: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn attach_evidence(&mut self, card_id: &str, evidence: Evidence) -> Result<(), TriageError> {
        let card = self
            .cards
            .iter_mut()
            .find(|c| c.id == card_id)
            .ok_or_else(|| TriageError::UnknownCard(card_id.to_string()))?;
        card.evidence = Some(evidence);
        Ok(())
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts {
            total: self.cards.len(),
            ..Counts::default()
        };
        for card in &self.cards {
            match card.state {
                CardState::Unlabeled => c.unlabeled += 1,
                CardState::Labeled { .. } => c.labeled += 1,
                CardState::Excluded { .. } => c.excluded += 1,
            }
            if card.iteration == 1 {
                c.iteration1 += 1;
                if !card.state.is_resolved() {
                    c.iteration1_unresolved += 1;
                }
            }
        }
        c
    }

    pub fn check_revision(&self, expected: Option<u64>) -> Result<(), TriageError> {
        match expected {
            Some(expected) if expected != self.revision => Err(TriageError::StaleRevision {
                expected,
                actual: self.revision,
            }),
            _ => Ok(()),
        }
    }

    pub fn create_category(&mut self, title: &str, description: &str, actor: &str) -> Result<String, TriageError> {
        let id = format!("cat-{}", self.categories.len() + 1);
        self.commit(
            actor,
            Action::CreateCategory {
                category_id: id.clone(),
                title: title.trim().to_string(),
                description: description.to_string(),
            },
        )?;
        Ok(id)
    }

    pub fn label_card(&mut self, card_id: &str, category_id: &str, actor: &str) -> Result<(), TriageError> {
        let previous = self.card_state(card_id)?;
        self.commit(
            actor,
            Action::Label {
                card_id: card_id.to_string(),
                category_id: category_id.to_string(),
                previous,
            },
        )
    }

    pub fn exclude_card(&mut self, card_id: &str, reason: &str, actor: &str) -> Result<(), TriageError> {
        let previous = self.card_state(card_id)?;
        self.commit(
            actor,
            Action::Exclude {
                card_id: card_id.to_string(),
                reason: reason.trim().to_string(),
                previous,
            },
        )
    }

    pub fn advance_phase(&mut self, actor: &str) -> Result<Phase, TriageError> {
        let to = match self.phase {
            Phase::Iteration1 => Phase::Iteration2,
            Phase::Iteration2 => Phase::Complete,
            Phase::Complete => return Err(TriageError::SessionComplete),
        };
        self.commit(actor, Action::AdvancePhase { from: self.phase, to })?;
        Ok(to)
    }

    fn card_state(&self, card_id: &str) -> Result<CardState, TriageError> {
        self.card(card_id)
            .map(|c| c.state.clone())
            .ok_or_else(|| TriageError::UnknownCard(card_id.to_string()))
    }

    fn commit(&mut self, actor: &str, action: Action) -> Result<(), TriageError> {
        self.apply(AuditEntry {
            timestamp: now(),
            actor: actor.to_string(),
            action,
        })
    }

    /// Validates and applies one entry, appending it to the audit log.
    fn apply(&mut self, entry: AuditEntry) -> Result<(), TriageError> {
        match &entry.action {
            Action::CreateCategory {
                category_id,
                title,
                description,
            } => {
                let iteration = self.phase.iteration().ok_or(TriageError::SessionComplete)?;
                if title.is_empty() {
                    return Err(TriageError::EmptyTitle);
                }
                if self.categories.iter().any(|c| c.title.eq_ignore_ascii_case(title)) {
                    return Err(TriageError::DuplicateTitle(title.clone()));
                }
                self.categories.push(Category {
                    id: category_id.clone(),
                    title: title.clone(),
                    description: description.clone(),
                    created_in_iteration: iteration,
                });
            }
            Action::Label {
                card_id, category_id, ..
            } => {
                if self.category(category_id).is_none() {
                    return Err(TriageError::UnknownCategory(category_id.clone()));
                }
                let card = self.writable_card(card_id)?;
                card.state = CardState::Labeled {
                    category_id: category_id.clone(),
                };
            }
            Action::Exclude { card_id, reason, .. } => {
                if reason.is_empty() {
                    self.writable_card(card_id)?;
                    return Err(TriageError::EmptyReason);
                }
                let card = self.writable_card(card_id)?;
                card.state = CardState::Excluded { reason: reason.clone() };
            }
            Action::AdvancePhase { from, to } => {
                if *from != self.phase {
                    return Err(TriageError::SessionComplete);
                }
                let unresolved = self
                    .cards
                    .iter()
                    .filter(|c| !c.state.is_resolved())
                    .filter(|c| *from == Phase::Iteration2 || c.iteration == 1)
                    .count();
                if unresolved > 0 {
                    return Err(TriageError::UnresolvedCards(unresolved));
                }
                self.phase = *to;
            }
        }
        self.audit_log.push(entry);
        self.revision += 1;
        Ok(())
    }

    fn writable_card(&mut self, card_id: &str) -> Result<&mut Card, TriageError> {
        let phase = self.phase;
        let card = self
            .cards
            .iter_mut()
            .find(|c| c.id == card_id)
            .ok_or_else(|| TriageError::UnknownCard(card_id.to_string()))?;
        match phase.iteration() {
            None => Err(TriageError::SessionComplete),
            Some(it) if it != card.iteration => Err(TriageError::PhaseViolation {
                card: card_id.to_string(),
                card_iteration: card.iteration,
                phase,
            }),
            Some(_) => Ok(card),
        }
    }

    /// The session as it was before any audited action.
    pub fn initial(&self) -> TriageSession {
        TriageSession {
            phase: Phase::Iteration1,
            revision: 0,
            cards: self
                .cards
                .iter()
                .map(|c| Card {
                    state: CardState::Unlabeled,
                    ..c.clone()
                })
                .collect(),
            categories: Vec::new(),
            audit_log: Vec::new(),
            ..self.clone()
        }
    }

    /// Rebuilds the session by replaying its audit log over [`Self::initial`].
    pub fn replay(&self) -> Result<TriageSession, TriageError> {
        let mut fresh = self.initial();
        for entry in &self.audit_log {
            fresh.apply(entry.clone())?;
        }
        Ok(fresh)
    }

    pub fn load(path: &Path) -> Result<TriageSession, TriageError> {
        let session: TriageSession = serde_json::from_slice(&fs::read(path)?)?;
        if session.format != SESSION_FORMAT {
            return Err(TriageError::Format(session.format));
        }
        Ok(session)
    }

    /// Writes the session atomically: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), TriageError> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, self)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| TriageError::Io(e.error))?;
        Ok(())
    }

    pub fn export_report(&self, draft: bool) -> Result<Report, TriageError> {
        if self.phase != Phase::Complete && !draft {
            return Err(TriageError::SessionIncomplete);
        }
        Ok(Report::build(self))
    }
}

/// Exclusive ownership of a session file, released on drop.
#[derive(Debug)]
pub struct SessionLock {
    path: PathBuf,
}

impl SessionLock {
    pub fn acquire(session: &Path) -> Result<SessionLock, TriageError> {
        let mut name = session.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(SessionLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(TriageError::Locked(session.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

// ---- report ----

pub const DRAFT_WATERMARK: &str = "DRAFT: session not complete, counts may change";
const EXEMPLARS: usize = 3;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub fixed: BTreeMap<String, usize>,
    pub introduced: BTreeMap<String, usize>,
    pub persistent: BTreeMap<String, usize>,
}

fn delta_key(f: &Finding) -> String {
    match &f.subtype {
        Some(s) => format!("{}/{s}", f.detector),
        None => f.detector.to_string(),
    }
}

impl DeltaSummary {
    fn add(&mut self, delta: &PairFindingDelta) {
        for (bucket, findings) in [
            (&mut self.fixed, &delta.fixed),
            (&mut self.introduced, &delta.introduced),
            (&mut self.persistent, &delta.persistent),
        ] {
            for f in findings {
                *bucket.entry(delta_key(f)).or_default() += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySection {
    pub id: String,
    pub title: String,
    pub description: String,
    pub count: usize,
    /// Share of non-excluded cards, in percent, two decimals.
    pub percentage: f64,
    pub exemplars: Vec<String>,
    pub deltas: DeltaSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCard {
    pub card_id: String,
    pub predecessor: String,
    pub successor: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub watermark: Option<String>,
    pub phase: Phase,
    pub total_cards: usize,
    pub considered_cards: usize,
    pub unlabeled_cards: usize,
    pub categories: Vec<CategorySection>,
    pub excluded: Vec<ExcludedCard>,
}

impl Report {
    fn build(session: &TriageSession) -> Report {
        let counts = session.counts();
        let considered = counts.total - counts.excluded;
        let mut categories = Vec::new();
        for cat in &session.categories {
            let members: Vec<&Card> = session
                .cards
                .iter()
                .filter(|c| matches!(&c.state, CardState::Labeled { category_id } if *category_id == cat.id))
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut deltas = DeltaSummary::default();
            for card in &members {
                if let Some(ev) = &card.evidence {
                    deltas.add(&ev.delta);
                }
            }
            let percentage = members.len() as f64 * 100.0 / considered as f64;
            categories.push(CategorySection {
                id: cat.id.clone(),
                title: cat.title.clone(),
                description: cat.description.clone(),
                count: members.len(),
                percentage: (percentage * 100.0).round() / 100.0,
                exemplars: members.iter().take(EXEMPLARS).map(|c| c.id.clone()).collect(),
                deltas,
            });
        }
        let excluded = session
            .cards
            .iter()
            .filter_map(|c| match &c.state {
                CardState::Excluded { reason } => Some(ExcludedCard {
                    card_id: c.id.clone(),
                    predecessor: c.pair.predecessor.to_string(),
                    successor: c.pair.successor.to_string(),
                    reason: reason.clone(),
                }),
                _ => None,
            })
            .collect();
        Report {
            watermark: (session.phase != Phase::Complete).then(|| DRAFT_WATERMARK.to_string()),
            phase: session.phase,
            total_cards: counts.total,
            considered_cards: considered,
            unlabeled_cards: counts.unlabeled,
            categories,
            excluded,
        }
    }

    pub fn to_markdown(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# Self-destruct reason report\n");
        if let Some(w) = &self.watermark {
            let _ = writeln!(out, "> **{w}**\n");
        }
        let _ = writeln!(
            out,
            "Phase: {}. Cards: {} total, {} considered, {} excluded, {} unlabeled.\n",
            self.phase,
            self.total_cards,
            self.considered_cards,
            self.excluded.len(),
            self.unlabeled_cards
        );
        let _ = writeln!(out, "## Categories\n");
        if self.categories.is_empty() {
            let _ = writeln!(out, "No labeled cards.\n");
        } else {
            let _ = writeln!(out, "| Category | Cards | Share |\n|---|---:|---:|");
            for c in &self.categories {
                let _ = writeln!(out, "| {} | {} | {:.2}% |", c.title, c.count, c.percentage);
            }
            out.push('\n');
            for c in &self.categories {
                let _ = writeln!(out, "### {} ({})\n", c.title, c.id);
                if !c.description.is_empty() {
                    let _ = writeln!(out, "{}\n", c.description);
                }
                let _ = writeln!(out, "Exemplars: {}\n", c.exemplars.join(", "));
                for (label, map) in [
                    ("Fixed", &c.deltas.fixed),
                    ("Introduced", &c.deltas.introduced),
                    ("Persistent", &c.deltas.persistent),
                ] {
                    if !map.is_empty() {
                        let items: Vec<String> = map.iter().map(|(k, v)| format!("{k} x{v}")).collect();
                        let _ = writeln!(out, "- {label}: {}", items.join(", "));
                    }
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "## Excluded cards\n");
        if self.excluded.is_empty() {
            let _ = writeln!(out, "None.");
        }
        for e in &self.excluded {
            let _ = writeln!(
                out,
                "- {} ({} -> {}): {}",
                e.card_id, e.predecessor, e.successor, e.reason
            );
        }
        out
    }
}
