//! Re-use of geoparser output across experiments.
//!
//! Results are keyed on the SHA-256 of the corpus' canonical serialization
//! plus the geoparser id and version, so editing a corpus or bumping a
//! version is always a miss.

use futures::stream::{self, StreamExt};
use sha2::{Digest, Sha256};

use super::{GeoparseError, GeoparseResult, Geoparser, GeoparserRef};
use crate::corpus::{serialize_corpus, Corpus};
use crate::store::{Store, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub corpus_hash: String,
    pub parser_id: String,
    pub parser_version: String,
}

pub fn corpus_hash(corpus: &Corpus) -> String {
    hex::encode(Sha256::digest(serialize_corpus(corpus)))
}

pub fn cache_key(corpus: &Corpus, reference: &GeoparserRef) -> CacheKey {
    CacheKey {
        corpus_hash: corpus_hash(corpus),
        parser_id: reference.id.clone(),
        parser_version: reference.version.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct CachedRun {
    pub key: CacheKey,
    /// One result per corpus entry, in corpus order.
    pub results: Vec<GeoparseResult>,
    pub cache_hit: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error("{} of {total} entries failed ({}): {}", failures.len(), failed_ids(failures), failures[0].1)]
    EntriesFailed { total: usize, failures: Vec<(String, GeoparseError)> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cached results for {parser_id} are unreadable: {source}")]
    CorruptCache { parser_id: String, source: serde_json::Error },
}

fn failed_ids(failures: &[(String, GeoparseError)]) -> String {
    failures.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>().join(", ")
}

impl CellError {
    pub fn failed_entry_ids(&self) -> Vec<&str> {
        match self {
            CellError::EntriesFailed { failures, .. } => failures.iter().map(|(id, _)| id.as_str()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, CellError::EntriesFailed { failures, .. } if failures.iter().any(|(_, e)| e.is_transport()))
    }
}

/// Returns stored results for `(corpus, geoparser)` or runs the geoparser
/// over every entry with at most `parallelism` requests in flight. A run
/// with any failed entry is not cached.
pub async fn cached_geoparse(
    store: &Store,
    geoparser: &dyn Geoparser,
    corpus: &Corpus,
    parallelism: usize,
) -> Result<CachedRun, CellError> {
    let key = cache_key(corpus, geoparser.reference());
    let lock = store.key_lock(&key);
    let _guard = lock.lock().await;

    let decode = |json: &str| {
        serde_json::from_str::<Vec<GeoparseResult>>(json)
            .map_err(|source| CellError::CorruptCache { parser_id: key.parser_id.clone(), source })
    };
    if let Some(json) = store.cached_results(&key)? {
        let results = decode(&json)?;
        return Ok(CachedRun { key, results, cache_hit: true });
    }

    let outcomes: Vec<(String, Result<GeoparseResult, GeoparseError>)> = stream::iter(0..corpus.entries.len())
        .map(|i| {
            let entry = &corpus.entries[i];
            async move { (entry.entry_id.clone(), geoparser.geoparse(entry).await) }
        })
        .buffered(parallelism.max(1))
        .collect()
        .await;

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (entry_id, outcome) in outcomes {
        match outcome {
            Ok(result) => results.push(result),
            Err(err) => failures.push((entry_id, err)),
        }
    }
    if !failures.is_empty() {
        return Err(CellError::EntriesFailed { total: corpus.entries.len(), failures });
    }

    let json = serde_json::to_string(&results).expect("results serialize");
    store.put_cached_results(&key, &json)?;
    // Hand back what was stored so a later hit is indistinguishable.
    let results = decode(&json)?;
    Ok(CachedRun { key, results, cache_hit: false })
}
