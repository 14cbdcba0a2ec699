//! Deterministic geoparser that answers from a recorded fixture.
//!
//! A fixture file is a JSON object mapping entry ids to output-contract
//! documents: `{"e1": {"toponyms": [...]}, "e2": {"toponyms": []}}`.

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;

use super::{check_result_spans, parse_output_json, GeoparseError, GeoparseResult, Geoparser, GeoparserRef};
use crate::corpus::{Corpus, CorpusEntry, ToponymSpan};

pub type ReplayFixture = BTreeMap<String, Vec<ToponymSpan>>;

pub fn parse_replay_fixture(json: &[u8]) -> Result<ReplayFixture, GeoparseError> {
    let documents: BTreeMap<String, serde_json::Value> = serde_json::from_slice(json)
        .map_err(|e| GeoparseError::Config(format!("replay fixture is not a JSON object of documents: {e}")))?;
    documents
        .into_iter()
        .map(|(entry_id, doc)| {
            let bytes = serde_json::to_vec(&doc).expect("JSON value serializes");
            match parse_output_json(&bytes) {
                Ok(parsed) => Ok((entry_id, parsed.toponyms)),
                Err(source) => Err(GeoparseError::Fixture { entry_id, source }),
            }
        })
        .collect()
}

/// The recorded spans for the entry; none when the fixture lacks it.
pub fn geoparse_replay(fixture: &ReplayFixture, entry: &CorpusEntry) -> GeoparseResult {
    GeoparseResult {
        entry_id: entry.entry_id.clone(),
        toponyms: fixture.get(&entry.entry_id).cloned().unwrap_or_default(),
        parser: "replay".to_owned(),
        elapsed: Duration::ZERO,
    }
}

pub struct ReplayGeoparser {
    reference: GeoparserRef,
    fixture: ReplayFixture,
}

impl ReplayGeoparser {
    /// Checks every recorded span against the entry texts of `corpora` it
    /// will be replayed on.
    pub fn new(reference: GeoparserRef, fixture: ReplayFixture, corpora: &[&Corpus]) -> Result<Self, GeoparseError> {
        for corpus in corpora {
            for entry in &corpus.entries {
                if let Some(spans) = fixture.get(&entry.entry_id) {
                    check_result_spans(&entry.text, spans).map_err(|source| GeoparseError::Fixture {
                        entry_id: entry.entry_id.clone(),
                        source,
                    })?;
                }
            }
        }
        Ok(Self { reference, fixture })
    }

    pub fn fixture(&self) -> &ReplayFixture {
        &self.fixture
    }
}

#[async_trait]
impl Geoparser for ReplayGeoparser {
    fn reference(&self) -> &GeoparserRef {
        &self.reference
    }

    async fn geoparse(&self, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError> {
        let mut result = geoparse_replay(&self.fixture, entry);
        check_result_spans(&entry.text, &result.toponyms)
            .map_err(|source| GeoparseError::Fixture { entry_id: entry.entry_id.clone(), source })?;
        result.parser = self.reference.id.clone();
        Ok(result)
    }
}
