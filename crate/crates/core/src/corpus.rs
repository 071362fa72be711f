//! Offline corpus fixture loading.
//!
//! A corpus is two JSON files: verified contracts and their transactions.
//! Lifecycle facts (creator, creation time, destructor) are derived from the
//! transaction list ordered by `(block, tx_index)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// A 20-byte account or contract address, stored as `0x` + 40 lowercase hex digits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Address(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid address {0:?}: expected 0x followed by 40 hex digits")]
pub struct InvalidAddress(pub String);

impl Address {
    /// Parses and canonicalizes (lowercases) an address.
    pub fn parse(raw: &str) -> Result<Self, InvalidAddress> {
        let trimmed = raw.trim();
        let hex = trimmed
            .strip_prefix("0x")
            .or_else(|| trimmed.strip_prefix("0X"))
            .ok_or_else(|| InvalidAddress(raw.to_string()))?;
        if hex.len() != 40 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(InvalidAddress(raw.to_string()));
        }
        Ok(Address(format!("0x{}", hex.to_ascii_lowercase())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Address {
    type Err = InvalidAddress;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::parse(s)
    }
}

impl TryFrom<String> for Address {
    type Error = InvalidAddress;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Address::parse(&value)
    }
}

impl From<Address> for String {
    fn from(value: Address) -> Self {
        value.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Create,
    Call,
    Destruct,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub hash: String,
    pub contract: Address,
    #[serde(rename = "from")]
    pub sender: Address,
    pub timestamp: u64,
    pub block: u64,
    pub tx_index: u64,
    pub kind: TxKind,
}

impl TransactionRecord {
    /// Chain ordering key. Timestamps tie within a block, so they are not part of it.
    pub fn order_key(&self) -> (u64, u64) {
        (self.block, self.tx_index)
    }
}

/// Position of a contract's creation on chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CreationTime {
    pub block: u64,
    pub tx_index: u64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub address: Address,
    pub name: String,
    pub source: String,
    pub is_destructed: bool,
    pub creator: Address,
    pub created_at: CreationTime,
    pub destructor: Option<Address>,
}

/// Why a contract's lifecycle facts could not be derived.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeriveError {
    #[error("no create transaction")]
    MissingCreation,
    #[error("{0} create transactions")]
    MultipleCreations(usize),
    #[error("create transaction is not the first transaction")]
    CreateNotFirst,
    #[error("{0} destruct transactions")]
    MultipleDestructs(usize),
    #[error("destruct transaction is not the last transaction")]
    DestructNotLast,
    #[error("is_destructed flag is {flag} but transactions say {derived}")]
    DestructFlagMismatch { flag: bool, derived: bool },
}

/// Returns the sender of the single `create` transaction.
pub fn creator_of(txs: &[TransactionRecord]) -> Result<Address, DeriveError> {
    let mut creates = txs.iter().filter(|t| t.kind == TxKind::Create);
    let first = creates.next().ok_or(DeriveError::MissingCreation)?;
    let extra = creates.count();
    if extra > 0 {
        return Err(DeriveError::MultipleCreations(extra + 1));
    }
    Ok(first.sender.clone())
}

/// Returns the sender of the `destruct` transaction, if any.
///
/// `txs` must already be sorted by [`TransactionRecord::order_key`].
pub fn destructor_of(txs: &[TransactionRecord]) -> Result<Option<Address>, DeriveError> {
    let destructs: Vec<usize> = txs
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == TxKind::Destruct)
        .map(|(i, _)| i)
        .collect();
    match destructs.as_slice() {
        [] => Ok(None),
        [i] => {
            let key = txs[*i].order_key();
            if txs.iter().any(|t| t.order_key() > key) {
                Err(DeriveError::DestructNotLast)
            } else {
                Ok(Some(txs[*i].sender.clone()))
            }
        }
        many => Err(DeriveError::MultipleDestructs(many.len())),
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: schema violation at {field}")]
    SchemaViolation { path: PathBuf, field: String },
    #[error("duplicate contract address {0}")]
    DuplicateAddress(Address),
}

/// A contract dropped during loading, with the reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub address: Address,
    pub reason: String,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EXCLUDE {} {}", self.address, self.reason)
    }
}

/// A validated corpus. Immutable after loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub contracts: BTreeMap<Address, ContractRecord>,
    pub transactions: BTreeMap<Address, Vec<TransactionRecord>>,
    pub exclusions: Vec<Exclusion>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn get(&self, address: &Address) -> Option<&ContractRecord> {
        self.contracts.get(address)
    }

    /// Builds a corpus from already-parsed fixture rows.
    pub fn from_parts(
        contracts: Vec<ContractFixture>,
        transactions: Vec<TransactionRecord>,
    ) -> Result<Corpus, CorpusError> {
        let mut fixtures: BTreeMap<Address, ContractFixture> = BTreeMap::new();
        for c in contracts {
            if fixtures.contains_key(&c.address) {
                return Err(CorpusError::DuplicateAddress(c.address));
            }
            fixtures.insert(c.address.clone(), c);
        }

        let mut by_contract: BTreeMap<Address, Vec<TransactionRecord>> = BTreeMap::new();
        for tx in transactions {
            by_contract.entry(tx.contract.clone()).or_default().push(tx);
        }
        for txs in by_contract.values_mut() {
            txs.sort_by(|a, b| a.order_key().cmp(&b.order_key()).then_with(|| a.hash.cmp(&b.hash)));
        }

        let mut corpus = Corpus::default();
        for (address, fixture) in fixtures {
            let txs = by_contract.remove(&address).unwrap_or_default();
            match derive_record(fixture, &txs) {
                Ok(record) => {
                    corpus.contracts.insert(address.clone(), record);
                    corpus.transactions.insert(address, txs);
                }
                Err(err) => corpus.exclusions.push(Exclusion {
                    address,
                    reason: err.to_string(),
                }),
            }
        }
        Ok(corpus)
    }
}

/// One row of the contracts fixture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractFixture {
    pub address: Address,
    pub name: String,
    pub source: String,
    pub is_destructed: bool,
}

fn derive_record(fixture: ContractFixture, txs: &[TransactionRecord]) -> Result<ContractRecord, DeriveError> {
    let creator = creator_of(txs)?;
    let create = txs
        .iter()
        .find(|t| t.kind == TxKind::Create)
        .expect("creator_of found one");
    if txs.iter().any(|t| t.order_key() < create.order_key()) {
        return Err(DeriveError::CreateNotFirst);
    }
    let destructor = destructor_of(txs)?;
    if fixture.is_destructed != destructor.is_some() {
        return Err(DeriveError::DestructFlagMismatch {
            flag: fixture.is_destructed,
            derived: destructor.is_some(),
        });
    }
    Ok(ContractRecord {
        address: fixture.address,
        name: fixture.name,
        source: fixture.source,
        is_destructed: fixture.is_destructed,
        creator,
        created_at: CreationTime {
            block: create.block,
            tx_index: create.tx_index,
            timestamp: create.timestamp,
        },
        destructor,
    })
}

/// Loads and validates both fixture files.
///
/// Contracts whose lifecycle cannot be derived are excluded and listed in
/// [`Corpus::exclusions`]; only unreadable or malformed files are fatal.
pub fn load_corpus(contracts_path: &Path, transactions_path: &Path) -> Result<Corpus, CorpusError> {
    let contracts = read_contracts(contracts_path)?;
    let transactions = read_transactions(transactions_path)?;
    let known: BTreeSet<&Address> = contracts.iter().map(|c| &c.address).collect();
    if let Some(pos) = transactions.iter().position(|t| !known.contains(&t.contract)) {
        return Err(CorpusError::SchemaViolation {
            path: transactions_path.to_path_buf(),
            field: format!("[{pos}].contract"),
        });
    }
    Corpus::from_parts(contracts, transactions)
}

fn read_array(path: &Path) -> Result<Vec<Value>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let violation = |field: &str| CorpusError::SchemaViolation {
        path: path.to_path_buf(),
        field: field.to_string(),
    };
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(_) => Err(violation("$")),
        Err(e) => Err(violation(&format!("$ (line {}, column {})", e.line(), e.column()))),
    }
}

struct Row<'a> {
    path: &'a Path,
    index: usize,
    map: &'a Map<String, Value>,
}

impl<'a> Row<'a> {
    fn violation(&self, field: &str) -> CorpusError {
        CorpusError::SchemaViolation {
            path: self.path.to_path_buf(),
            field: format!("[{}].{}", self.index, field),
        }
    }

    fn str(&self, field: &str) -> Result<&'a str, CorpusError> {
        self.map
            .get(field)
            .and_then(Value::as_str)
            .ok_or_else(|| self.violation(field))
    }

    fn u64(&self, field: &str) -> Result<u64, CorpusError> {
        self.map
            .get(field)
            .and_then(Value::as_u64)
            .ok_or_else(|| self.violation(field))
    }

    fn bool(&self, field: &str) -> Result<bool, CorpusError> {
        self.map
            .get(field)
            .and_then(Value::as_bool)
            .ok_or_else(|| self.violation(field))
    }

    fn address(&self, field: &str) -> Result<Address, CorpusError> {
        Address::parse(self.str(field)?).map_err(|_| self.violation(field))
    }
}

fn rows<'a>(path: &'a Path, items: &'a [Value]) -> Result<Vec<Row<'a>>, CorpusError> {
    items
        .iter()
        .enumerate()
        .map(|(index, v)| match v {
            Value::Object(map) => Ok(Row { path, index, map }),
            _ => Err(CorpusError::SchemaViolation {
                path: path.to_path_buf(),
                field: format!("[{index}]"),
            }),
        })
        .collect()
}

fn read_contracts(path: &Path) -> Result<Vec<ContractFixture>, CorpusError> {
    let items = read_array(path)?;
    rows(path, &items)?
        .iter()
        .map(|row| {
            Ok(ContractFixture {
                address: row.address("address")?,
                name: row.str("name")?.to_string(),
                source: row.str("source")?.to_string(),
                is_destructed: row.bool("is_destructed")?,
            })
        })
        .collect()
}

fn read_transactions(path: &Path) -> Result<Vec<TransactionRecord>, CorpusError> {
    let items = read_array(path)?;
    rows(path, &items)?
        .iter()
        .map(|row| {
            let hash = row.str("hash")?;
            let hex = hash.strip_prefix("0x").unwrap_or("");
            if hex.len() != 64 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(row.violation("hash"));
            }
            let kind = match row.str("kind")? {
                "create" => TxKind::Create,
                "call" => TxKind::Call,
                "destruct" => TxKind::Destruct,
                _ => return Err(row.violation("kind")),
            };
            Ok(TransactionRecord {
                hash: hash.to_ascii_lowercase(),
                contract: row.address("contract")?,
                sender: row.address("from")?,
                timestamp: row.u64("timestamp")?,
                block: row.u64("block")?,
                tx_index: row.u64("tx_index")?,
                kind,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        Address::parse(&format!("0x{}", format!("{n:02x}").repeat(20))).unwrap()
    }

    fn tx(n: u64, sender: u8, block: u64, tx_index: u64, kind: TxKind) -> TransactionRecord {
        TransactionRecord {
            hash: format!("0x{n:064x}"),
            contract: addr(1),
            sender: addr(sender),
            timestamp: 1_500_000_000 + block * 15,
            block,
            tx_index,
            kind,
        }
    }

    fn fixture(is_destructed: bool) -> ContractFixture {
        ContractFixture {
            address: addr(1),
            name: "A".into(),
            source: "contract A {}".into(),
            is_destructed,
        }
    }

    #[test]
    fn address_is_canonicalized() {
        let a = Address::parse("0xABCDEFabcdef0123456789ABCDEF0123456789ab").unwrap();
        assert_eq!(a.as_str(), "0xabcdefabcdef0123456789abcdef0123456789ab");
        assert_eq!(a.as_str().len(), 42);
        assert!(Address::parse("abcdefabcdef0123456789abcdef0123456789ab").is_err());
        assert!(Address::parse("0x1234").is_err());
        assert!(Address::parse("0xgggggggggggggggggggggggggggggggggggggggg").is_err());
    }

    #[test]
    fn creator_is_sender_of_create() {
        assert_eq!(creator_of(&[tx(1, 0xaa, 1, 0, TxKind::Create)]).unwrap(), addr(0xaa));
        let txs = [tx(1, 0xaa, 1, 0, TxKind::Create), tx(2, 0xbb, 2, 0, TxKind::Call)];
        assert_eq!(creator_of(&txs).unwrap(), addr(0xaa));
        assert_eq!(creator_of(&[]), Err(DeriveError::MissingCreation));
        let twice = [tx(1, 0xaa, 1, 0, TxKind::Create), tx(2, 0xaa, 2, 0, TxKind::Create)];
        assert_eq!(creator_of(&twice), Err(DeriveError::MultipleCreations(2)));
    }

    #[test]
    fn destructor_is_sender_of_last_destruct() {
        let txs = [
            tx(1, 0xaa, 1, 0, TxKind::Create),
            tx(2, 0xbb, 2, 0, TxKind::Call),
            tx(3, 0xcc, 3, 0, TxKind::Destruct),
        ];
        assert_eq!(destructor_of(&txs).unwrap(), Some(addr(0xcc)));
        assert_eq!(destructor_of(&txs[..2]).unwrap(), None);
        let bad = [
            tx(1, 0xaa, 1, 0, TxKind::Create),
            tx(2, 0xcc, 2, 0, TxKind::Destruct),
            tx(3, 0xbb, 3, 0, TxKind::Call),
        ];
        assert_eq!(destructor_of(&bad), Err(DeriveError::DestructNotLast));
    }

    #[test]
    fn lifecycle_is_derived_from_block_order() {
        let txs = vec![tx(2, 0xbb, 9, 0, TxKind::Destruct), tx(1, 0xaa, 5, 0, TxKind::Create)];
        let corpus = Corpus::from_parts(vec![fixture(true)], txs).unwrap();
        let rec = &corpus.contracts[&addr(1)];
        assert_eq!(rec.creator, addr(0xaa));
        assert_eq!(rec.destructor, Some(addr(0xbb)));
        assert!(rec.is_destructed);
        assert_eq!(rec.created_at.block, 5);
    }

    #[test]
    fn same_block_orders_by_tx_index() {
        let mut create = tx(1, 0xaa, 5, 3, TxKind::Create);
        create.timestamp = 100;
        let mut call = tx(2, 0xbb, 5, 7, TxKind::Call);
        call.timestamp = 100;
        let corpus = Corpus::from_parts(vec![fixture(false)], vec![call, create]).unwrap();
        assert_eq!(corpus.transactions[&addr(1)][0].tx_index, 3);
        assert_eq!(corpus.contracts[&addr(1)].created_at.tx_index, 3);
    }

    #[test]
    fn contract_without_create_is_excluded() {
        let corpus = Corpus::from_parts(vec![fixture(false)], vec![tx(1, 0xbb, 5, 0, TxKind::Call)]).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(corpus.exclusions.len(), 1);
        assert_eq!(
            corpus.exclusions[0].to_string(),
            format!("EXCLUDE {} no create transaction", addr(1))
        );
    }

    #[test]
    fn destruct_flag_must_agree_with_transactions() {
        let corpus = Corpus::from_parts(vec![fixture(true)], vec![tx(1, 0xaa, 5, 0, TxKind::Create)]).unwrap();
        assert!(corpus.is_empty());
        assert!(corpus.exclusions[0].reason.contains("is_destructed"));
    }

    #[test]
    fn duplicate_address_is_fatal() {
        let err = Corpus::from_parts(vec![fixture(false), fixture(false)], vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateAddress(_)));
    }
}
