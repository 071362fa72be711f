//! Subword skip-gram embeddings with negative sampling.
//!
//! Each token is represented by its own vector plus the vectors of its
//! character n-grams (taken over `<token>`), hashed into a fixed number of
//! buckets. Documents are the mean of their token vectors and are compared
//! by cosine similarity.
//!
//! The n-gram matrix is stored sparsely: only rows for buckets that occur in
//! the training vocabulary are materialized. Every other row holds its
//! deterministic initial value, derived from the seed and bucket index, and is
//! computed on demand.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Address;
use crate::solparse::NormalizedTokenSequence;

pub const MODEL_MAGIC: &[u8; 8] = b"CLNEMB01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dimension: usize,
    pub window: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    /// Initial rate, decayed linearly to zero over training.
    pub learning_rate: f64,
    pub min_count: u64,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub bucket_count: u32,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dimension: 100,
            window: 5,
            epochs: 5,
            negative_samples: 5,
            learning_rate: 0.05,
            min_count: 1,
            ngram_min: 3,
            ngram_max: 6,
            bucket_count: 1 << 21,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |msg: &str| Err(EmbedError::DegenerateConfig(msg.to_string()));
        if self.dimension < 2 {
            return bad("dimension must be at least 2");
        }
        if self.window == 0 || self.epochs == 0 || self.negative_samples == 0 || self.min_count == 0 {
            return bad("window, epochs, negative_samples and min_count must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return bad("need 1 <= ngram_min <= ngram_max");
        }
        if self.bucket_count == 0 {
            return bad("bucket_count must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no non-empty documents to train on")]
    EmptyCorpus,
    #[error("invalid embedding config: {0}")]
    DegenerateConfig(String),
    #[error("document for {0} is empty")]
    EmptyDocument(Address),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("malformed model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// FNV-1a, 32 bit.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Bucket indices of every character n-gram of `<token>` with length in
/// `min..=max`.
pub fn ngram_buckets(token: &str, min: usize, max: usize, bucket_count: u32) -> Vec<u32> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    let mut buf = String::new();
    for start in 0..chars.len() {
        for n in min..=max {
            if start + n > chars.len() {
                break;
            }
            buf.clear();
            buf.extend(&chars[start..start + n]);
            out.push(fnv1a(buf.as_bytes()) % bucket_count);
        }
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Initial value of an n-gram row.
fn init_ngram_row(seed: u64, bucket: u32, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(u64::from(bucket) + 1)));
    let bound = 1.0 / dim as f32;
    (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_counts(mut entries: Vec<(String, u64)>) -> Vocabulary {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries.iter().enumerate().map(|(i, (w, _))| (w.clone(), i)).collect();
        let (words, counts) = entries.into_iter().unzip();
        Vocabulary { words, counts, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    config: EmbedConfig,
    vocab: Vocabulary,
    /// `vocab.len() x dimension`, row-major.
    word_vectors: Vec<f32>,
    /// Context (output) vectors, same shape as `word_vectors`.
    output_vectors: Vec<f32>,
    /// Sorted bucket ids with materialized rows.
    ngram_ids: Vec<u32>,
    /// `ngram_ids.len() x dimension`.
    ngram_rows: Vec<f32>,
    /// Per vocabulary word, slots into `ngram_rows`.
    word_ngrams: Vec<Vec<usize>>,
}

impl EmbeddingModel {
    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn word_vector(&self, idx: usize) -> &[f32] {
        let d = self.config.dimension;
        &self.word_vectors[idx * d..(idx + 1) * d]
    }

    /// Stored or initial row for an n-gram bucket.
    pub fn ngram_vector(&self, bucket: u32) -> Vec<f32> {
        match self.ngram_ids.binary_search(&bucket) {
            Ok(slot) => self.ngram_slot(slot).to_vec(),
            Err(_) => init_ngram_row(self.config.seed, bucket, self.config.dimension),
        }
    }

    fn ngram_slot(&self, slot: usize) -> &[f32] {
        let d = self.config.dimension;
        &self.ngram_rows[slot * d..(slot + 1) * d]
    }

    pub fn materialized_ngrams(&self) -> usize {
        self.ngram_ids.len()
    }

    /// Word vector (if known) plus the sum of its n-gram vectors.
    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let d = self.config.dimension;
        let mut v = vec![0.0f32; d];
        if let Some(idx) = self.vocab.get(token) {
            add(&mut v, self.word_vector(idx));
            for &slot in &self.word_ngrams[idx] {
                add(&mut v, self.ngram_slot(slot));
            }
        } else {
            for bucket in self.buckets_of(token) {
                add(&mut v, &self.ngram_vector(bucket));
            }
        }
        v
    }

    fn buckets_of(&self, token: &str) -> Vec<u32> {
        let c = &self.config;
        ngram_buckets(token, c.ngram_min, c.ngram_max, c.bucket_count)
    }

    /// Mean of the token vectors of `doc`.
    pub fn doc_vector(&self, doc: &NormalizedTokenSequence) -> Result<DocVector, EmbedError> {
        if doc.tokens.is_empty() {
            return Err(EmbedError::EmptyDocument(doc.origin.clone()));
        }
        let d = self.config.dimension;
        let mut cache: HashMap<&str, Vec<f32>> = HashMap::new();
        let mut sum = vec![0.0f64; d];
        for token in &doc.tokens {
            let tv = cache.entry(token.as_str()).or_insert_with(|| self.token_vector(token));
            for (s, x) in sum.iter_mut().zip(tv.iter()) {
                *s += f64::from(*x);
            }
        }
        let n = doc.tokens.len() as f64;
        Ok(DocVector {
            values: sum.into_iter().map(|s| s / n).collect(),
            origin: doc.origin.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.word_vectors
            .iter()
            .chain(&self.output_vectors)
            .chain(&self.ngram_rows)
            .all(|x| x.is_finite())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), EmbedError> {
        let c = &self.config;
        w.write_all(MODEL_MAGIC)?;
        for v in [c.dimension, c.window, c.epochs, c.negative_samples] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_f64::<LittleEndian>(c.learning_rate)?;
        w.write_u64::<LittleEndian>(c.min_count)?;
        w.write_u32::<LittleEndian>(c.ngram_min as u32)?;
        w.write_u32::<LittleEndian>(c.ngram_max as u32)?;
        w.write_u32::<LittleEndian>(c.bucket_count)?;
        w.write_u64::<LittleEndian>(c.seed)?;

        w.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        for (word, count) in self.vocab.words.iter().zip(&self.vocab.counts) {
            w.write_u32::<LittleEndian>(word.len() as u32)?;
            w.write_all(word.as_bytes())?;
            w.write_u64::<LittleEndian>(*count)?;
        }
        for x in self.word_vectors.iter().chain(&self.output_vectors) {
            w.write_f32::<LittleEndian>(*x)?;
        }
        w.write_u32::<LittleEndian>(self.ngram_ids.len() as u32)?;
        for (slot, id) in self.ngram_ids.iter().enumerate() {
            w.write_u32::<LittleEndian>(*id)?;
            for x in self.ngram_slot(slot) {
                w.write_f32::<LittleEndian>(*x)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<EmbeddingModel, EmbedError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(EmbedError::BadModelFile("bad magic".into()));
        }
        let mut u32s = [0usize; 4];
        for v in &mut u32s {
            *v = r.read_u32::<LittleEndian>()? as usize;
        }
        let config = EmbedConfig {
            dimension: u32s[0],
            window: u32s[1],
            epochs: u32s[2],
            negative_samples: u32s[3],
            learning_rate: r.read_f64::<LittleEndian>()?,
            min_count: r.read_u64::<LittleEndian>()?,
            ngram_min: r.read_u32::<LittleEndian>()? as usize,
            ngram_max: r.read_u32::<LittleEndian>()? as usize,
            bucket_count: r.read_u32::<LittleEndian>()?,
            seed: r.read_u64::<LittleEndian>()?,
        };
        config.validate().map_err(|e| EmbedError::BadModelFile(e.to_string()))?;
        let d = config.dimension;

        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            let word = String::from_utf8(bytes)
                .map_err(|_| EmbedError::BadModelFile("vocabulary entry is not UTF-8".into()))?;
            entries.push((word, r.read_u64::<LittleEndian>()?));
        }
        let words: Vec<String> = entries.iter().map(|e| e.0.clone()).collect();
        let vocab = Vocabulary::from_counts(entries);
        if vocab.words != words {
            return Err(EmbedError::BadModelFile("vocabulary is not in canonical order".into()));
        }
        let mut read_f32s = |count: usize| -> Result<Vec<f32>, EmbedError> {
            let mut v = vec![0.0f32; count];
            r.read_f32_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let word_vectors = read_f32s(n * d)?;
        let output_vectors = read_f32s(n * d)?;
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let mut ngram_ids = Vec::with_capacity(rows);
        let mut ngram_rows = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            let id = r.read_u32::<LittleEndian>()?;
            if ngram_ids.last().is_some_and(|&last| last >= id) || id >= config.bucket_count {
                return Err(EmbedError::BadModelFile("n-gram rows out of order".into()));
            }
            ngram_ids.push(id);
            let mut row = vec![0.0f32; d];
            r.read_f32_into::<LittleEndian>(&mut row)?;
            ngram_rows.extend(row);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(EmbedError::BadModelFile("trailing bytes".into()));
        }
        let word_ngrams = vocab
            .words
            .iter()
            .map(|w| {
                ngram_buckets(w, config.ngram_min, config.ngram_max, config.bucket_count)
                    .into_iter()
                    .map(|b| {
                        ngram_ids
                            .binary_search(&b)
                            .map_err(|_| EmbedError::BadModelFile(format!("missing n-gram row {b}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingModel {
            config,
            vocab,
            word_vectors,
            output_vectors,
            ngram_ids,
            ngram_rows,
            word_ngrams,
        })
    }
}

fn add(acc: &mut [f32], x: &[f32]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains a model on `docs`. Single-threaded; the result depends only on
/// `docs` and `config`.
pub fn train(docs: &[NormalizedTokenSequence], config: &EmbedConfig) -> Result<EmbeddingModel, EmbedError> {
    config.validate()?;
    if docs.iter().all(|d| d.tokens.is_empty()) {
        return Err(EmbedError::EmptyCorpus);
    }

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let vocab = Vocabulary::from_counts(
        counts
            .into_iter()
            .filter(|(_, c)| *c >= config.min_count)
            .map(|(w, c)| (w.to_string(), c))
            .collect(),
    );
    if vocab.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }

    let d = config.dimension;
    let per_word_buckets: Vec<Vec<u32>> = vocab
        .words
        .iter()
        .map(|w| ngram_buckets(w, config.ngram_min, config.ngram_max, config.bucket_count))
        .collect();
    let mut ngram_ids: Vec<u32> = per_word_buckets.iter().flatten().copied().collect();
    ngram_ids.sort_unstable();
    ngram_ids.dedup();
    let word_ngrams: Vec<Vec<usize>> = per_word_buckets
        .iter()
        .map(|bs| bs.iter().map(|b| ngram_ids.binary_search(b).unwrap()).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / d as f32;
    let word_vectors: Vec<f32> = (0..vocab.len() * d).map(|_| rng.gen_range(-bound..bound)).collect();
    let ngram_rows: Vec<f32> = ngram_ids
        .iter()
        .flat_map(|&b| init_ngram_row(config.seed, b, d))
        .collect();

    let mut model = EmbeddingModel {
        config: config.clone(),
        output_vectors: vec![0.0; vocab.len() * d],
        vocab,
        word_vectors,
        ngram_ids,
        ngram_rows,
        word_ngrams,
    };

    let encoded: Vec<Vec<usize>> = docs
        .iter()
        .map(|doc| doc.tokens.iter().filter_map(|t| model.vocab.get(t)).collect())
        .collect();
    let weights: Vec<f64> = model.vocab.counts.iter().map(|&c| (c as f64).sqrt()).collect();
    let negatives = WeightedIndex::new(&weights).expect("vocabulary is non-empty with positive counts");

    let total = (config.epochs * encoded.iter().map(Vec::len).sum::<usize>()) as f64;
    let mut processed = 0usize;
    let mut trainer = Trainer {
        hidden: vec![0.0; d],
        grad: vec![0.0; d],
    };
    for _ in 0..config.epochs {
        for doc in &encoded {
            for pos in 0..doc.len() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / total)) as f32;
                let boundary = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(boundary);
                let hi = (pos + boundary).min(doc.len() - 1);
                for ctx in lo..=hi {
                    if ctx != pos {
                        trainer.update(&mut model, &mut rng, &negatives, doc[pos], doc[ctx], lr);
                    }
                }
                processed += 1;
            }
        }
    }
    Ok(model)
}

struct Trainer {
    hidden: Vec<f32>,
    grad: Vec<f32>,
}

impl Trainer {
    fn update(
        &mut self,
        model: &mut EmbeddingModel,
        rng: &mut ChaCha8Rng,
        negatives: &WeightedIndex<f64>,
        center: usize,
        target: usize,
        lr: f32,
    ) {
        let d = model.config.dimension;
        self.hidden.copy_from_slice(model.word_vector(center));
        for &slot in &model.word_ngrams[center] {
            add(&mut self.hidden, &model.ngram_rows[slot * d..(slot + 1) * d]);
        }
        self.grad.iter_mut().for_each(|g| *g = 0.0);

        self.logistic(model, target, 1.0, lr);
        if model.vocab.len() > 1 {
            for _ in 0..model.config.negative_samples {
                let neg = loop {
                    let n = negatives.sample(rng);
                    if n != target {
                        break n;
                    }
                };
                self.logistic(model, neg, 0.0, lr);
            }
        }

        // Split the step across the summed rows so the hidden vector moves by
        // one gradient step regardless of how many n-grams the token has.
        let share = 1.0 / (1 + model.word_ngrams[center].len()) as f32;
        self.grad.iter_mut().for_each(|g| *g *= share);
        add(&mut model.word_vectors[center * d..(center + 1) * d], &self.grad);
        for &slot in &model.word_ngrams[center] {
            add(&mut model.ngram_rows[slot * d..(slot + 1) * d], &self.grad);
        }
    }

    fn logistic(&mut self, model: &mut EmbeddingModel, target: usize, label: f32, lr: f32) {
        let d = model.config.dimension;
        let out = &mut model.output_vectors[target * d..(target + 1) * d];
        let alpha = lr * (label - sigmoid(dot(out, &self.hidden)));
        for ((g, o), h) in self.grad.iter_mut().zip(out.iter_mut()).zip(&self.hidden) {
            *g += alpha * *o;
            *o += alpha * h;
        }
    }
}

/// Mean-pooled document representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub values: Vec<f64>,
    pub origin: Address,
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine<A, B>(u: &[A], v: &[B]) -> Result<f64, EmbedError>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut uv, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a.into(), b.into());
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str]) -> NormalizedTokenSequence {
        NormalizedTokenSequence {
            origin: Address::parse(&format!("0x{}", "ab".repeat(20))).unwrap(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn small_config() -> EmbedConfig {
        EmbedConfig {
            dimension: 16,
            epochs: 3,
            bucket_count: 4096,
            seed: 42,
            ..EmbedConfig::default()
        }
    }

    fn sample_docs() -> Vec<NormalizedTokenSequence> {
        vec![
            doc(&[
                "contract",
                "TYPE",
                "function",
                "FUNC",
                "public",
                "require",
                "msg.sender",
                "==",
                "ID",
            ]),
            doc(&["uint", "ID", "=", "ID", "msg.sender", "ID", ".", "transfer", "ID"]),
            doc(&[
                "for", "uint", "ID", "=", "NUM", "ID", "<", "ID", ".", "length", "ID", "++",
            ]),
        ]
    }

    #[test]
    fn cosine_cases() {
        let v = [0.3f64, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&[1.0f64, 0.0], &[0.0f64, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0f64, 1.0], &[1.0f64, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(matches!(
            cosine(&[0.0f64, 0.0], &[1.0f64, 0.0]),
            Err(EmbedError::ZeroVector)
        ));
        assert!(matches!(
            cosine(&[1.0f64], &[1.0f64, 0.0]),
            Err(EmbedError::DimensionMismatch(1, 2))
        ));
        let (a, b) = ([0.1f64, 0.7, -0.2], [0.9f64, -0.3, 0.5]);
        assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 32-bit test vectors.
        assert_eq!(fnv1a(b""), 0x811c9dc5);
        assert_eq!(fnv1a(b"a"), 0xe40c292c);
        assert_eq!(fnv1a(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn ngrams_of_short_token() {
        // "<ID>": 3-grams "<ID", "ID>", and the 4-gram "<ID>".
        assert_eq!(ngram_buckets("ID", 3, 6, u32::MAX).len(), 3);
        assert_eq!(
            ngram_buckets("ID", 3, 6, u32::MAX),
            vec![fnv1a(b"<ID"), fnv1a(b"<ID>"), fnv1a(b"ID>")]
        );
        assert!(ngram_buckets("=", 4, 6, 100).is_empty());
    }

    #[test]
    fn vocabulary_is_observed_tokens() {
        let model = train(&[doc(&["uint", "ID", "=", "NUM"])], &small_config()).unwrap();
        let mut words = model.vocabulary().words().to_vec();
        words.sort();
        assert_eq!(words, vec!["=", "ID", "NUM", "uint"]);
    }

    #[test]
    fn empty_and_degenerate_inputs() {
        assert!(matches!(train(&[], &small_config()), Err(EmbedError::EmptyCorpus)));
        assert!(matches!(
            train(&[doc(&[])], &small_config()),
            Err(EmbedError::EmptyCorpus)
        ));
        let bad = EmbedConfig {
            ngram_min: 5,
            ngram_max: 3,
            ..small_config()
        };
        assert!(matches!(
            train(&sample_docs(), &bad),
            Err(EmbedError::DegenerateConfig(_))
        ));
        let bad = EmbedConfig {
            dimension: 1,
            ..small_config()
        };
        assert!(matches!(
            train(&sample_docs(), &bad),
            Err(EmbedError::DegenerateConfig(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&sample_docs(), &small_config()).unwrap();
        let b = train(&sample_docs(), &small_config()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = train(
            &sample_docs(),
            &EmbedConfig {
                seed: 7,
                ..small_config()
            },
        )
        .unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn vectors_stay_finite() {
        for (epochs, learning_rate) in [(1, 0.05), (5, 0.05), (4, 0.5), (20, 1.0)] {
            let config = EmbedConfig {
                epochs,
                learning_rate,
                ..small_config()
            };
            assert!(train(&sample_docs(), &config).unwrap().all_finite());
        }
    }

    #[test]
    fn token_vector_composition() {
        let model = train(&sample_docs(), &small_config()).unwrap();
        let c = model.config().clone();

        let oov = "transferx";
        assert!(model.vocabulary().get(oov).is_none());
        let mut expected = vec![0.0f32; c.dimension];
        for b in ngram_buckets(oov, c.ngram_min, c.ngram_max, c.bucket_count) {
            add(&mut expected, &model.ngram_vector(b));
        }
        assert_eq!(model.token_vector(oov), expected);

        let idx = model.vocabulary().get("uint").unwrap();
        let mut expected = model.word_vector(idx).to_vec();
        for b in ngram_buckets("uint", c.ngram_min, c.ngram_max, c.bucket_count) {
            add(&mut expected, &model.ngram_vector(b));
        }
        assert_eq!(model.token_vector("uint"), expected);

        let strict = train(
            &sample_docs(),
            &EmbedConfig {
                ngram_min: 4,
                ..small_config()
            },
        )
        .unwrap();
        assert!(strict.vocabulary().get("?").is_none());
        assert!(strict.token_vector("?").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doc_vector_is_mean() {
        let model = train(&sample_docs(), &small_config()).unwrap();
        let single = model.doc_vector(&doc(&["uint"])).unwrap();
        let tv: Vec<f64> = model.token_vector("uint").into_iter().map(f64::from).collect();
        assert_eq!(single.values, tv);

        let fwd = model.doc_vector(&doc(&["uint", "ID", "=", "NUM"])).unwrap();
        let rev = model.doc_vector(&doc(&["NUM", "=", "ID", "uint"])).unwrap();
        for (a, b) in fwd.values.iter().zip(&rev.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(model.doc_vector(&doc(&[])), Err(EmbedError::EmptyDocument(_))));
    }

    #[test]
    fn self_similarity() {
        let model = train(&sample_docs(), &small_config()).unwrap();
        for d in sample_docs() {
            let v = model.doc_vector(&d).unwrap();
            assert!((cosine(&v.values, &v.values).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let model = train(&sample_docs(), &small_config()).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let back = EmbeddingModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(EmbeddingModel::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(matches!(
            EmbeddingModel::read_from(corrupt.as_slice()),
            Err(EmbedError::BadModelFile(_))
        ));
    }

    #[test]
    fn default_bucket_count_stays_sparse() {
        let config = EmbedConfig {
            dimension: 8,
            epochs: 1,
            seed: 1,
            ..EmbedConfig::default()
        };
        let model = train(&sample_docs(), &config).unwrap();
        assert!(model.materialized_ngrams() < 500);
        assert!(model.to_bytes().len() < 100_000);
    }
}
