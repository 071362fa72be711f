//! Creator grouping, time-ranked candidate pairs and similarity filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::corpus::{Address, ContractRecord, Corpus};
use crate::embed::{cosine, DocVector, EmbeddingModel};
use crate::solparse::NormalizedTokenSequence;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Clone, Debug, PartialEq)]
pub struct CreatorGroup {
    pub creator: Address,
    /// Sorted by `(block, tx_index, address)`.
    pub members: Vec<ContractRecord>,
}

impl CreatorGroup {
    pub fn has_destructed(&self) -> bool {
        self.members.iter().any(|m| m.is_destructed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePair {
    pub predecessor: Address,
    pub successor: Address,
    pub similarity: Option<f64>,
    pub successor_destructed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpgradePair {
    pub predecessor: Address,
    pub successor: Address,
    #[serde(serialize_with = "six_decimals")]
    pub similarity: f64,
    pub successor_destructed: bool,
}

impl UpgradePair {
    pub fn key(&self) -> (&Address, &Address) {
        (&self.predecessor, &self.successor)
    }
}

fn six_decimals<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("threshold {0} outside [0, 1]")]
pub struct InvalidThreshold(pub f64);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineageConfig {
    pub threshold: f64,
}

impl LineageConfig {
    pub fn new(threshold: f64) -> Result<Self, InvalidThreshold> {
        if (0.0..=1.0).contains(&threshold) {
            Ok(LineageConfig { threshold })
        } else {
            Err(InvalidThreshold(threshold))
        }
    }
}

impl Default for LineageConfig {
    fn default() -> Self {
        LineageConfig {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

fn creation_key(c: &ContractRecord) -> (u64, u64, &Address) {
    (c.created_at.block, c.created_at.tx_index, &c.address)
}

/// Partitions the corpus by creator. Groups are ordered by creator address.
pub fn group_by_creator(corpus: &Corpus) -> Vec<CreatorGroup> {
    let mut groups: BTreeMap<&Address, Vec<ContractRecord>> = BTreeMap::new();
    for c in corpus.contracts.values() {
        groups.entry(&c.creator).or_default().push(c.clone());
    }
    groups
        .into_iter()
        .map(|(creator, mut members)| {
            members.sort_by(|a, b| creation_key(a).cmp(&creation_key(b)));
            CreatorGroup {
                creator: creator.clone(),
                members,
            }
        })
        .collect()
}

/// Keeps groups with at least one destructed member.
pub fn filter_groups(groups: Vec<CreatorGroup>) -> Vec<CreatorGroup> {
    groups.into_iter().filter(CreatorGroup::has_destructed).collect()
}

/// Pairs every destructed member with every member created after it.
pub fn candidate_pairs(group: &CreatorGroup) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for (i, pred) in group.members.iter().enumerate() {
        if !pred.is_destructed {
            continue;
        }
        for succ in &group.members[i + 1..] {
            out.push(CandidatePair {
                predecessor: pred.address.clone(),
                successor: succ.address.clone(),
                similarity: None,
                successor_destructed: succ.is_destructed,
            });
        }
    }
    out
}

/// Fills in cosine similarity. Pairs whose member has no usable document are
/// dropped and reported as a diagnostic line.
pub fn score_pairs(
    pairs: &[CandidatePair],
    model: &EmbeddingModel,
    normalized: &BTreeMap<Address, NormalizedTokenSequence>,
) -> (Vec<CandidatePair>, Vec<String>) {
    let mut vectors: BTreeMap<Address, Result<DocVector, String>> = BTreeMap::new();
    let mut vector = |addr: &Address| -> Result<DocVector, String> {
        vectors
            .entry(addr.clone())
            .or_insert_with(|| match normalized.get(addr) {
                None => Err(format!("{addr}: no normalized sequence")),
                Some(doc) => model.doc_vector(doc).map_err(|e| format!("{addr}: {e}")),
            })
            .clone()
    };
    let mut scored = Vec::new();
    let mut diagnostics = Vec::new();
    for pair in pairs {
        let sim = vector(&pair.predecessor).and_then(|p| {
            let s = vector(&pair.successor)?;
            cosine(&p.values, &s.values).map_err(|e| format!("{}: {e}", pair.successor))
        });
        match sim {
            Ok(sim) => scored.push(CandidatePair {
                similarity: Some(sim),
                ..pair.clone()
            }),
            Err(msg) => diagnostics.push(format!("DROP {} {} {msg}", pair.predecessor, pair.successor)),
        }
    }
    (scored, diagnostics)
}

/// Keeps scored pairs with similarity strictly above the threshold, sorted by
/// `(predecessor, successor)`.
pub fn filter_threshold(pairs: &[CandidatePair], config: LineageConfig) -> Vec<UpgradePair> {
    let mut out: Vec<UpgradePair> = pairs
        .iter()
        .filter_map(|p| {
            let similarity = p.similarity?;
            (similarity > config.threshold).then(|| UpgradePair {
                predecessor: p.predecessor.clone(),
                successor: p.successor.clone(),
                similarity,
                successor_destructed: p.successor_destructed,
            })
        })
        .collect();
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    out
}

/// Candidate pairs across all groups that contain a destructed contract.
pub fn all_candidate_pairs(corpus: &Corpus) -> Vec<CandidatePair> {
    filter_groups(group_by_creator(corpus))
        .iter()
        .flat_map(candidate_pairs)
        .collect()
}
