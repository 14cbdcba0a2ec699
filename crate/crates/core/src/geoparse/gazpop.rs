//! Built-in baseline: dictionary chunking against the gazetteer, resolved to
//! the most populous candidate.

use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use super::{tokenize, GeoparseError, GeoparseResult, Geoparser, GeoparserKind, GeoparserRef};
use crate::corpus::{CorpusEntry, ToponymSpan};
use crate::gazetteer::{resolve_highest_population, Gazetteer};

pub const GAZPOP_ID: &str = "gazpop";
/// Longest token window tried at each position.
pub const MAX_WINDOW_TOKENS: usize = 5;

/// Scans tokens left to right; at each position the longest window (up to
/// [`MAX_WINDOW_TOKENS`]) whose text is a gazetteer name becomes a toponym,
/// and the scan resumes after it.
pub fn geoparse_gazpop(gazetteer: &Gazetteer, entry: &CorpusEntry) -> GeoparseResult {
    let started = Instant::now();
    let text = entry.text.as_str();
    let tokens = tokenize(text);
    let max_window = MAX_WINDOW_TOKENS.min(gazetteer.max_name_tokens()).max(1);

    let mut toponyms = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let widest = max_window.min(tokens.len() - i);
        let hit = (1..=widest).rev().find_map(|width| {
            let window = &tokens[i..i + width];
            let surface = &text[window[0].byte_start..window[width - 1].byte_end];
            let mut candidates = gazetteer.lookup_name(surface);
            if candidates.is_empty() && width > 1 {
                // "New  York" or "New\nYork" still names New York.
                let joined = window.iter().map(|t| &text[t.byte_start..t.byte_end]).collect::<Vec<_>>().join(" ");
                if joined != surface {
                    candidates = gazetteer.lookup_name(&joined);
                }
            }
            let place = resolve_highest_population(&candidates).ok()?;
            Some((width, surface, place))
        });
        match hit {
            Some((width, surface, place)) => {
                let mut span = ToponymSpan::new(tokens[i].start, tokens[i + width - 1].end, surface)
                    .with_footprint(place.location);
                span.place_name = Some(place.canonical_name.clone());
                span.place_type = Some(place.feature_class.clone()).filter(|s| !s.is_empty());
                toponyms.push(span);
                i += width;
            }
            None => i += 1,
        }
    }
    GeoparseResult {
        entry_id: entry.entry_id.clone(),
        toponyms,
        parser: GAZPOP_ID.to_owned(),
        elapsed: started.elapsed(),
    }
}

/// Version string derived from the gazetteer file contents.
pub fn gazpop_version(gazetteer_file: &[u8]) -> String {
    let digest = Sha256::digest(gazetteer_file);
    format!("gaz-{}", &hex::encode(digest)[..12])
}

pub struct GazpopGeoparser {
    reference: GeoparserRef,
    gazetteer: Arc<Gazetteer>,
}

impl GazpopGeoparser {
    /// `version` should change whenever the gazetteer does, since cached
    /// results are keyed on it.
    pub fn new(gazetteer: Arc<Gazetteer>, version: impl Into<String>) -> Self {
        Self {
            reference: GeoparserRef {
                id: GAZPOP_ID.to_owned(),
                display_name: "Gazetteer + highest population".to_owned(),
                kind: GeoparserKind::BuiltinGazpop,
                endpoint_url: None,
                version: version.into(),
                rate_limit: None,
            },
            gazetteer,
        }
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }
}

#[async_trait]
impl Geoparser for GazpopGeoparser {
    fn reference(&self) -> &GeoparserRef {
        &self.reference
    }

    async fn geoparse(&self, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError> {
        Ok(geoparse_gazpop(&self.gazetteer, entry))
    }
}
