//! Prompt and template database with exact similarity retrieval.
//!
//! Records carry a unit-norm embedding. Retrieval is an exact scan ranked
//! by cosine similarity; ties always resolve by ascending record id so
//! results are reproducible across runs and platforms.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

/// Default embedding dimension of the hashed bag-of-words provider.
pub const DEFAULT_DIM: usize = 256;

/// Placeholder substituted by the base prompt in templates.
pub const PLACEHOLDER: &str = "{base}";

/// Lower bound on the selection weight of any retrieved candidate.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Tolerance on the Euclidean norm of stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RagError {
    #[error("text contains no tokens")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("vector for record `{id}` is not unit norm (norm {norm})")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("template must contain exactly one `{{base}}` placeholder, found {found}")]
    MissingPlaceholder { found: usize },
    #[error("no candidate records match the filter")]
    NoCandidates,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// What a stored record is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    PositiveExample,
    NegativeExample,
    PositiveTemplate,
    NegativeTemplate,
}

impl Kind {
    pub const ALL: [Kind; 4] = [
        Kind::PositiveExample,
        Kind::NegativeExample,
        Kind::PositiveTemplate,
        Kind::NegativeTemplate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::PositiveExample => "positive_example",
            Kind::NegativeExample => "negative_example",
            Kind::PositiveTemplate => "positive_template",
            Kind::NegativeTemplate => "negative_template",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Set of record kinds admitted by a retrieval.
///
/// Negative candidates may come from a dedicated pool or be shared with the
/// positives; both are expressed by combining kinds with [`KindFilter::or`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindFilter(u8);

impl KindFilter {
    pub const ALL: KindFilter = KindFilter(0b1111);

    pub const fn none() -> Self {
        KindFilter(0)
    }

    pub fn only(kind: Kind) -> Self {
        KindFilter(kind.bit())
    }

    pub fn or(self, kind: Kind) -> Self {
        KindFilter(self.0 | kind.bit())
    }

    pub fn admits(self, kind: Kind) -> bool {
        self.0 & kind.bit() != 0
    }
}

impl From<Kind> for KindFilter {
    fn from(kind: Kind) -> Self {
        KindFilter::only(kind)
    }
}

/// One row of the prompt database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    pub kind: Kind,
    pub vector: Vec<f64>,
}

impl PromptRecord {
    /// Checks the record invariants against a store dimension.
    pub fn validate(&self, dimension: usize) -> Result<(), RagError> {
        if self.text.trim().is_empty() {
            return Err(RagError::EmptyText);
        }
        if self.vector.len() != dimension {
            return Err(RagError::DimensionMismatch {
                expected: dimension,
                actual: self.vector.len(),
            });
        }
        let norm = l2_norm(&self.vector);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(RagError::NotUnitNorm {
                id: self.id.clone(),
                norm,
            });
        }
        if self.kind == Kind::PositiveTemplate {
            let found = placeholder_count(&self.text);
            if found != 1 {
                return Err(RagError::MissingPlaceholder { found });
            }
        }
        Ok(())
    }
}

/// A record paired with its similarity to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRecord<'a> {
    pub record: &'a PromptRecord,
    pub similarity: f64,
}

/// Source of text embeddings.
pub trait Embedder {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RagError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Deterministic hashed bag-of-words embedding.
///
/// Lowercases, splits on runs of non-alphanumeric characters, hashes each
/// token with FNV-1a 64 into `dimension` buckets, counts and L2-normalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError> {
        embed_text(text, self.dimension)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Bucket index of a single (already lowercased) token.
pub fn token_bucket(token: &str, dimension: usize) -> usize {
    (fnv1a64(token.as_bytes()) % dimension as u64) as usize
}

pub fn embed_text(text: &str, dimension: usize) -> Result<Vec<f64>, RagError> {
    let mut counts = vec![0.0f64; dimension];
    let mut any = false;
    for token in tokenize(text) {
        counts[token_bucket(&token, dimension)] += 1.0;
        any = true;
    }
    if !any {
        return Err(RagError::EmptyText);
    }
    normalize(&mut counts)?;
    Ok(counts)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Scales `v` to unit Euclidean norm in place.
pub fn normalize(v: &mut [f64]) -> Result<(), RagError> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(RagError::ZeroVector);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, RagError> {
    if a.len() != b.len() {
        return Err(RagError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(RagError::ZeroVector);
    }
    Ok((dot / (libm::sqrt(aa) * libm::sqrt(bb))).clamp(-1.0, 1.0))
}

/// Immutable-after-build collection of records keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    dimension: usize,
    records: BTreeMap<String, PromptRecord>,
}

impl Store {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            records: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PromptRecord> {
        self.records.get(id)
    }

    /// Records in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &PromptRecord> {
        self.records.values()
    }

    pub fn count(&self, filter: KindFilter) -> usize {
        self.iter().filter(|r| filter.admits(r.kind)).count()
    }

    pub fn insert(&mut self, record: PromptRecord) -> Result<(), RagError> {
        record.validate(self.dimension)?;
        if self.records.contains_key(&record.id) {
            return Err(RagError::DuplicateId(record.id));
        }
        self.records.insert(record.id.clone(), record);
        Ok(())
    }

    /// Embeds `text` with `embedder` and inserts the resulting record.
    pub fn insert_text(
        &mut self,
        id: &str,
        text: &str,
        kind: Kind,
        embedder: &dyn Embedder,
    ) -> Result<(), RagError> {
        let vector = embedder.embed(text)?;
        self.insert(PromptRecord {
            id: id.to_owned(),
            text: text.to_owned(),
            kind,
            vector,
        })
    }

    fn scored(
        &self,
        query: &[f64],
        k: usize,
        filter: KindFilter,
    ) -> Result<Vec<ScoredRecord<'_>>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if query.len() != self.dimension {
            return Err(RagError::DimensionMismatch {
                expected: self.dimension,
                actual: query.len(),
            });
        }
        let mut out = Vec::new();
        for record in self.iter().filter(|r| filter.admits(r.kind)) {
            out.push(ScoredRecord {
                record,
                similarity: cosine(query, &record.vector)?,
            });
        }
        if out.is_empty() {
            return Err(RagError::NoCandidates);
        }
        Ok(out)
    }

    /// The `k` most similar records, descending; ties by ascending id.
    pub fn top_k(
        &self,
        query: &[f64],
        k: usize,
        filter: impl Into<KindFilter>,
    ) -> Result<Vec<ScoredRecord<'_>>, RagError> {
        let mut all = self.scored(query, k, filter.into())?;
        select_sorted(&mut all, k, |a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.record.id.cmp(&b.record.id))
        });
        Ok(all)
    }

    /// The `k` least similar records, ascending; ties by ascending id.
    pub fn bottom_k(
        &self,
        query: &[f64],
        k: usize,
        filter: impl Into<KindFilter>,
    ) -> Result<Vec<ScoredRecord<'_>>, RagError> {
        let mut all = self.scored(query, k, filter.into())?;
        select_sorted(&mut all, k, |a, b| {
            a.similarity
                .total_cmp(&b.similarity)
                .then_with(|| a.record.id.cmp(&b.record.id))
        });
        Ok(all)
    }
}

/// Leaves the first `k` elements of `items` in `cmp` order and drops the rest.
fn select_sorted<T, F>(items: &mut Vec<T>, k: usize, mut cmp: F)
where
    F: FnMut(&T, &T) -> Ordering,
{
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, &mut cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
}

/// Index chosen by a single uniform draw `u ∈ [0,1)` over cumulative weights.
pub fn weighted_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Selection weight of a candidate: its similarity floored at [`WEIGHT_FLOOR`].
pub fn selection_weight(similarity: f64) -> f64 {
    similarity.max(WEIGHT_FLOOR)
}

/// Picks one candidate with probability proportional to its selection weight.
pub fn weighted_pick<'a>(
    candidates: &[ScoredRecord<'a>],
    seed: u64,
) -> Result<&'a PromptRecord, RagError> {
    if candidates.is_empty() {
        return Err(RagError::NoCandidates);
    }
    let weights: Vec<f64> = candidates
        .iter()
        .map(|c| selection_weight(c.similarity))
        .collect();
    let u = SeededRng::new(seed).next_unit();
    Ok(candidates[weighted_index(&weights, u)].record)
}

pub fn placeholder_count(template: &str) -> usize {
    template.matches(PLACEHOLDER).count()
}

/// Substitutes `base` into `template`.
///
/// Positive templates need exactly one placeholder. Any other kind accepts
/// zero (returned verbatim) or one.
pub fn render_template(template: &str, base: &str, kind: Kind) -> Result<String, RagError> {
    let found = placeholder_count(template);
    match (found, kind) {
        (1, _) => Ok(template.replacen(PLACEHOLDER, base, 1)),
        (0, k) if k != Kind::PositiveTemplate => Ok(template.to_string()),
        _ => Err(RagError::MissingPlaceholder { found }),
    }
}
