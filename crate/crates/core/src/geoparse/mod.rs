//! Geoparser abstraction and the JSON output contract.
//!
//! Every geoparser, local or remote, answers with a document of the form
//!
//! ```json
//! {"toponyms": [{"start": 0, "end": 4, "phrase": "Paris",
//!                "place": {"footprint": [[-95.5477, 33.6625]],
//!                          "placename": "City of Paris", "placetype": "ADM3"}}]}
//! ```
//!
//! where `start`/`end` are inclusive character offsets and `footprint` is a
//! GeoJSON-style coordinate array in `[lon, lat]` order. Only point
//! footprints are evaluated; additional coordinate pairs produce a warning.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{CorpusEntry, GeoPoint, ToponymSpan};

mod cache;
mod gazpop;
mod rate_limit;
mod registry;
mod replay;
mod rest;

pub use cache::{cache_key, cached_geoparse, corpus_hash, CacheKey, CachedRun, CellError};
pub use gazpop::{gazpop_version, geoparse_gazpop, GazpopGeoparser, GAZPOP_ID, MAX_WINDOW_TOKENS};
pub use rate_limit::{RateLimiter, RateLimiters};
pub use registry::{GeoparserFactory, GeoparserRegistration};
pub use replay::{geoparse_replay, parse_replay_fixture, ReplayFixture, ReplayGeoparser};
pub use rest::{geoparse_remote, RestGeoparser, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoparserKind {
    BuiltinGazpop,
    Rest,
    Replay,
}

/// Identity and access method of a geoparser, as registered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoparserRef {
    pub id: String,
    pub display_name: String,
    pub kind: GeoparserKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub version: String,
    /// Requests per hour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RefError {
    #[error("geoparser id {0:?} must be 1-64 characters of [A-Za-z0-9_.-]")]
    BadId(String),
    #[error("geoparser {0:?} of kind rest needs an endpoint_url")]
    MissingEndpoint(String),
    #[error("geoparser {id:?} has an invalid endpoint_url {url:?}: {reason}")]
    BadEndpoint { id: String, url: String, reason: String },
    #[error("geoparser {0:?} has rate_limit 0")]
    ZeroRateLimit(String),
    #[error("geoparser {0:?} has an empty version")]
    EmptyVersion(String),
}

impl GeoparserRef {
    pub fn validate(&self) -> Result<(), RefError> {
        let id_ok = (1..=64).contains(&self.id.len())
            && self.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
        if !id_ok {
            return Err(RefError::BadId(self.id.clone()));
        }
        if self.version.trim().is_empty() {
            return Err(RefError::EmptyVersion(self.id.clone()));
        }
        if self.rate_limit == Some(0) {
            return Err(RefError::ZeroRateLimit(self.id.clone()));
        }
        match (&self.kind, &self.endpoint_url) {
            (GeoparserKind::Rest, None) => Err(RefError::MissingEndpoint(self.id.clone())),
            (GeoparserKind::Rest, Some(url)) => {
                let bad = |reason: String| RefError::BadEndpoint { id: self.id.clone(), url: url.clone(), reason };
                let parsed = url::Url::parse(url).map_err(|e| bad(e.to_string()))?;
                if !matches!(parsed.scheme(), "http" | "https") {
                    return Err(bad(format!("unsupported scheme {:?}", parsed.scheme())));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// The toponyms one geoparser found in one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoparseResult {
    pub entry_id: String,
    pub toponyms: Vec<ToponymSpan>,
    /// Id of the producing [`GeoparserRef`].
    pub parser: String,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContractError {
    #[error("response is not JSON: {0}")]
    InvalidJson(String),
    #[error("response has no \"toponyms\" array at the root")]
    MissingToponyms,
    #[error("toponym #{index}: {message}")]
    Field { index: usize, message: String },
    #[error("toponym #{index} ({phrase:?}) has no place.footprint")]
    MissingFootprint { index: usize, phrase: String },
    #[error("toponym #{index} ({phrase:?}) has non-numeric coordinates")]
    NonNumericCoordinates { index: usize, phrase: String },
    #[error("toponym #{index} ({phrase:?}) has out-of-range coordinates (lon {lon}, lat {lat})")]
    CoordinatesOutOfRange { index: usize, phrase: String, lon: f64, lat: f64 },
    #[error("toponym #{index} span [{start}, {end}] is outside the text ({text_len} characters)")]
    SpanOutOfBounds { index: usize, start: usize, end: usize, text_len: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedOutput {
    pub toponyms: Vec<ToponymSpan>,
    pub warnings: Vec<String>,
}

/// Reads a geoparser response. `start`, `end`, `phrase` and
/// `place.footprint` are required; `placename` and `placetype` are kept
/// when present; anything else is ignored.
pub fn parse_output_json(json: &[u8]) -> Result<ParsedOutput, ContractError> {
    let root: Value = serde_json::from_slice(json).map_err(|e| ContractError::InvalidJson(e.to_string()))?;
    let toponyms = root.get("toponyms").and_then(Value::as_array).ok_or(ContractError::MissingToponyms)?;
    let mut out = ParsedOutput::default();
    for (index, item) in toponyms.iter().enumerate() {
        out.toponyms.push(parse_toponym(index, item, &mut out.warnings)?);
    }
    Ok(out)
}

fn parse_toponym(index: usize, item: &Value, warnings: &mut Vec<String>) -> Result<ToponymSpan, ContractError> {
    let field_err = |message: String| ContractError::Field { index, message };
    let offset = |name: &str| {
        item.get(name)
            .ok_or_else(|| field_err(format!("missing \"{name}\"")))?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| field_err(format!("\"{name}\" must be a non-negative integer")))
    };
    let start = offset("start")?;
    let end = offset("end")?;
    let phrase = item
        .get("phrase")
        .and_then(Value::as_str)
        .ok_or_else(|| field_err("missing string \"phrase\"".into()))?
        .to_owned();
    let place = item.get("place").filter(|p| p.is_object()).ok_or_else(|| field_err("missing \"place\" object".into()))?;
    let footprint = place
        .get("footprint")
        .and_then(Value::as_array)
        .ok_or_else(|| ContractError::MissingFootprint { index, phrase: phrase.clone() })?;

    let non_numeric = || ContractError::NonNumericCoordinates { index, phrase: phrase.clone() };
    let pair = |v: &[Value]| -> Result<(f64, f64), ContractError> {
        match v {
            [lon, lat] => Ok((lon.as_f64().ok_or_else(non_numeric)?, lat.as_f64().ok_or_else(non_numeric)?)),
            _ => Err(non_numeric()),
        }
    };
    let (lon, lat) = match footprint.first() {
        None => return Err(ContractError::MissingFootprint { index, phrase }),
        Some(Value::Array(first)) => {
            if footprint.len() > 1 {
                warnings.push(format!(
                    "toponym #{index} ({phrase:?}) has {} footprint points; only the first is used",
                    footprint.len()
                ));
            }
            pair(first)?
        }
        Some(_) => pair(footprint)?,
    };
    let point = GeoPoint::new(lon, lat)
        .map_err(|_| ContractError::CoordinatesOutOfRange { index, phrase: phrase.clone(), lon, lat })?;

    let optional = |name: &str| place.get(name).and_then(Value::as_str).map(str::to_owned);
    let mut span = ToponymSpan::new(start, end, phrase).with_footprint(point);
    span.place_name = optional("placename");
    span.place_type = optional("placetype");
    Ok(span)
}

#[derive(Serialize)]
struct OutputDocument<'a> {
    toponyms: Vec<OutputToponym<'a>>,
}

#[derive(Serialize)]
struct OutputToponym<'a> {
    start: usize,
    end: usize,
    phrase: &'a str,
    place: OutputPlace<'a>,
}

#[derive(Serialize)]
struct OutputPlace<'a> {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    footprint: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placename: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placetype: Option<&'a str>,
}

/// Renders spans in the output contract format, fields in contract order.
pub fn to_output_json(toponyms: &[ToponymSpan]) -> String {
    let doc = OutputDocument {
        toponyms: toponyms
            .iter()
            .map(|span| OutputToponym {
                start: span.start,
                end: span.end,
                phrase: &span.phrase,
                place: OutputPlace {
                    footprint: span.footprint.map(|p| vec![[p.lon, p.lat]]).unwrap_or_default(),
                    placename: span.place_name.as_deref(),
                    placetype: span.place_type.as_deref(),
                },
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("output document serializes")
}

/// Checks that every predicted span lies inside `text` and is geo-located.
pub fn check_result_spans(text: &str, toponyms: &[ToponymSpan]) -> Result<(), ContractError> {
    let text_len = text.chars().count();
    for (index, span) in toponyms.iter().enumerate() {
        if span.start > span.end || span.end >= text_len {
            return Err(ContractError::SpanOutOfBounds { index, start: span.start, end: span.end, text_len });
        }
        if span.footprint.is_none() {
            return Err(ContractError::MissingFootprint { index, phrase: span.phrase.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum GeoparseError {
    #[error("geoparser broke the output contract: {0}")]
    Contract(#[from] ContractError),
    #[error("geoparser unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("geoparser rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid geoparser configuration: {0}")]
    Config(String),
    #[error("replay fixture entry {entry_id:?}: {source}")]
    Fixture { entry_id: String, source: ContractError },
}

impl GeoparseError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GeoparseError::Transport { .. } | GeoparseError::Rejected { .. })
    }
}

/// Anything that can geoparse one corpus entry.
#[async_trait]
pub trait Geoparser: Send + Sync {
    fn reference(&self) -> &GeoparserRef;

    async fn geoparse(&self, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    /// Inclusive character offsets.
    pub start: usize,
    pub end: usize,
    pub byte_start: usize,
    pub byte_end: usize,
}

fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(
            c,
            '¡' | '¿' | '«' | '»' | '·' | '§' | '¶'
                | '\u{2010}'..='\u{205E}'
                | '\u{3000}'..='\u{303F}'
                | '\u{FF01}'..='\u{FF0F}'
        )
}

/// Splits on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<Token> = None;
    for (char_index, (byte_index, c)) in text.char_indices().enumerate() {
        if is_separator(c) {
            tokens.extend(current.take());
        } else {
            let token = current.get_or_insert(Token {
                start: char_index,
                end: char_index,
                byte_start: byte_index,
                byte_end: byte_index,
            });
            token.end = char_index;
            token.byte_end = byte_index + c.len_utf8();
        }
    }
    tokens.extend(current);
    tokens
}
