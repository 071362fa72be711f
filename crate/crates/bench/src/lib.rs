//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use contract_lineage::{load_corpus, Corpus, NormalizedTokenSequence, SourceFile};

pub fn fixture_corpus() -> Corpus {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    load_corpus(&dir.join("contracts.json"), &dir.join("transactions.json")).expect("fixture corpus")
}

pub fn normalized_docs(corpus: &Corpus) -> Vec<NormalizedTokenSequence> {
    corpus
        .contracts
        .values()
        .filter_map(|c| SourceFile::parse(&c.source).ok().map(|f| f.normalized(&c.address)))
        .collect()
}

/// Deterministic pseudo-random symbols over a small alphabet.
pub fn symbols(len: usize, alphabet: u32, seed: u64) -> Vec<u32> {
    let mut x = seed | 1;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x % alphabet as u64) as u32
        })
        .collect()
}
