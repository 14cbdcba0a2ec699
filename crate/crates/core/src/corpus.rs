//! Annotated corpus model and the unified XML interchange format.
//!
//! A corpus file looks like this (tag names are fixed):
//!
//! ```xml
//! <?xml version="1.0" encoding="utf-8"?>
//! <entries>
//!   <entry>
//!     <text>Paris is a city in Texas...</text>
//!     <toponyms>
//!       <toponym>
//!         <start>0</start>
//!         <end>4</end>
//!         <phrase>Paris</phrase>
//!         <place>
//!           <footprint>-95.5477 33.6625</footprint>
//!           <placename>City of Paris</placename>
//!           <placetype>ADM3</placetype>
//!         </place>
//!       </toponym>
//!     </toponyms>
//!   </entry>
//! </entries>
//! ```
//!
//! Character offsets count Unicode scalar values and `end` is inclusive, so
//! `Paris` above spans `[0, 4]`. The root element may carry optional `id`,
//! `name` and `genre` attributes and each `<entry>` an optional `id`
//! attribute; entries without one are numbered from 1 in document order.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

mod convert;

pub use convert::{convert_line_corpus, ColumnMap, ConversionError, ConversionNote, ConversionReport, LineFormat};

const DEFAULT_CORPUS_ID: &str = "corpus";

/// A longitude/latitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("coordinates out of range: lon {lon}, lat {lat}")]
pub struct CoordinateError {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, CoordinateError> {
        let point = Self { lon, lat };
        if point.is_valid() {
            Ok(point)
        } else {
            Err(CoordinateError { lon, lat })
        }
    }

    /// NaN fails both range checks.
    pub fn is_valid(&self) -> bool {
        (-180.0..=180.0).contains(&self.lon) && (-90.0..=90.0).contains(&self.lat)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.lon, self.lat)
    }
}

/// An element we do not interpret, kept so it survives a round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpaqueTag {
    pub name: String,
    pub value: String,
}

/// A toponym occurrence: an inclusive character span of the entry text plus
/// whatever is known about the place it refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToponymSpan {
    pub start: usize,
    pub end: usize,
    pub phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_type: Option<String>,
    /// Unknown children of `<toponym>`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<OpaqueTag>,
    /// Unknown children of `<place>`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub place_extra: Vec<OpaqueTag>,
}

impl ToponymSpan {
    pub fn new(start: usize, end: usize, phrase: impl Into<String>) -> Self {
        Self {
            start,
            end,
            phrase: phrase.into(),
            footprint: None,
            place_name: None,
            place_type: None,
            extra: Vec::new(),
            place_extra: Vec::new(),
        }
    }

    pub fn with_footprint(mut self, point: GeoPoint) -> Self {
        self.footprint = Some(point);
        self
    }

    /// Number of characters covered by the span.
    pub fn char_len(&self) -> usize {
        self.end + 1 - self.start
    }

    fn has_place(&self) -> bool {
        self.footprint.is_some()
            || self.place_name.is_some()
            || self.place_type.is_some()
            || !self.place_extra.is_empty()
    }
}

/// Returns `text[start..=end]` counted in characters, or `None` when the
/// range is empty or runs past the end of `text`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.nth(start)?;
    let to = indices.nth(end - start)?;
    Some(&text[from..to])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Genre {
    News,
    Wikipedia,
    SocialMedia,
    WebPages,
    Other,
}

impl Genre {
    pub fn as_str(self) -> &'static str {
        match self {
            Genre::News => "news",
            Genre::Wikipedia => "wikipedia",
            Genre::SocialMedia => "social_media",
            Genre::WebPages => "web_pages",
            Genre::Other => "other",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown genre {0:?}; expected news, wikipedia, social_media, web_pages or other")]
pub struct UnknownGenre(pub String);

impl FromStr for Genre {
    type Err = UnknownGenre;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "news" => Ok(Genre::News),
            "wikipedia" => Ok(Genre::Wikipedia),
            "social_media" => Ok(Genre::SocialMedia),
            "web_pages" => Ok(Genre::WebPages),
            "other" => Ok(Genre::Other),
            _ => Err(UnknownGenre(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub entry_id: String,
    pub text: String,
    pub annotations: Vec<ToponymSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub id: String,
    pub name: String,
    pub genre: Genre,
    /// False when some toponyms in the texts are deliberately left
    /// unannotated; precision, recall and F-score are then meaningless.
    pub fully_annotated: bool,
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("invalid corpus structure at line {line}, column {column}: {message}")]
    Schema { line: u32, column: u32, message: String },
    #[error("duplicate entry id {0:?}")]
    DuplicateEntryId(String),
    #[error("entry {entry_id:?}: span [{start}, {end}] is outside the text ({text_len} characters)")]
    SpanOutOfBounds { entry_id: String, start: usize, end: usize, text_len: usize },
    #[error("entry {entry_id:?}: span [{start}, {end}] phrase {phrase:?} does not match text {found:?}")]
    PhraseMismatch { entry_id: String, start: usize, end: usize, phrase: String, found: String },
    #[error("entry {entry_id:?}: span [{start}, {end}] has out-of-range footprint (lon {lon}, lat {lat})")]
    Coordinates { entry_id: String, start: usize, end: usize, lon: f64, lat: f64 },
}

impl CorpusEntry {
    /// Checks every annotation against the entry text.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let text_len = self.text.chars().count();
        for span in &self.annotations {
            validate_span(&self.entry_id, &self.text, text_len, span)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_span(
    entry_id: &str,
    text: &str,
    text_len: usize,
    span: &ToponymSpan,
) -> Result<(), CorpusError> {
    if span.start > span.end || span.end >= text_len {
        return Err(CorpusError::SpanOutOfBounds {
            entry_id: entry_id.to_owned(),
            start: span.start,
            end: span.end,
            text_len,
        });
    }
    let found = char_slice(text, span.start, span.end).unwrap_or_default();
    if found != span.phrase {
        return Err(CorpusError::PhraseMismatch {
            entry_id: entry_id.to_owned(),
            start: span.start,
            end: span.end,
            phrase: span.phrase.clone(),
            found: found.to_owned(),
        });
    }
    if let Some(point) = span.footprint {
        if !point.is_valid() {
            return Err(CorpusError::Coordinates {
                entry_id: entry_id.to_owned(),
                start: span.start,
                end: span.end,
                lon: point.lon,
                lat: point.lat,
            });
        }
    }
    Ok(())
}

impl Corpus {
    pub fn new(id: impl Into<String>, genre: Genre, fully_annotated: bool) -> Self {
        let id = id.into();
        Self { name: id.clone(), id, genre, fully_annotated, entries: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.entry_id.as_str()) {
                return Err(CorpusError::DuplicateEntryId(entry.entry_id.clone()));
            }
            entry.validate()?;
        }
        Ok(())
    }

    pub fn entry(&self, entry_id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    pub fn annotation_count(&self) -> usize {
        self.entries.iter().map(|e| e.annotations.len()).sum()
    }
}

/// Parses a corpus in the unified XML format and validates every span.
pub fn parse_unified_corpus(xml: &[u8], fully_annotated: bool) -> Result<Corpus, CorpusError> {
    let source = std::str::from_utf8(xml).map_err(|err| {
        let (line, column) = line_col(&xml[..err.valid_up_to()]);
        CorpusError::Xml { line, column, message: "input is not valid UTF-8".into() }
    })?;
    let doc = roxmltree::Document::parse(source).map_err(|err| {
        let pos = err.pos();
        CorpusError::Xml { line: pos.row, column: pos.col, message: err.to_string() }
    })?;
    let reader = Reader { doc: &doc };
    let corpus = reader.corpus(fully_annotated)?;
    corpus.validate()?;
    Ok(corpus)
}

fn line_col(prefix: &[u8]) -> (u32, u32) {
    let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = prefix.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let column = String::from_utf8_lossy(&prefix[line_start..]).chars().count() + 1;
    (line as u32, column as u32)
}

struct Reader<'a, 'input> {
    doc: &'a roxmltree::Document<'input>,
}

type Node<'a, 'input> = roxmltree::Node<'a, 'input>;

impl<'a, 'input> Reader<'a, 'input> {
    fn schema_error(&self, node: Node<'_, '_>, message: impl Into<String>) -> CorpusError {
        let pos = self.doc.text_pos_at(node.range().start);
        CorpusError::Schema { line: pos.row, column: pos.col, message: message.into() }
    }

    fn corpus(&self, fully_annotated: bool) -> Result<Corpus, CorpusError> {
        let root = self.doc.root_element();
        if root.tag_name().name() != "entries" {
            return Err(self.schema_error(
                root,
                format!("root element must be <entries>, found <{}>", root.tag_name().name()),
            ));
        }
        let id = root.attribute("id").unwrap_or(DEFAULT_CORPUS_ID).to_owned();
        let name = root.attribute("name").map_or_else(|| id.clone(), str::to_owned);
        let genre = match root.attribute("genre") {
            Some(g) => g.parse().map_err(|e: UnknownGenre| self.schema_error(root, e.to_string()))?,
            None => Genre::Other,
        };

        let mut entries = Vec::new();
        for (position, node) in root.children().filter(Node::is_element).enumerate() {
            if node.tag_name().name() != "entry" {
                return Err(self.schema_error(
                    node,
                    format!("unexpected <{}> inside <entries>", node.tag_name().name()),
                ));
            }
            entries.push(self.entry(node, position + 1)?);
        }
        Ok(Corpus { id, name, genre, fully_annotated, entries })
    }

    fn entry(&self, node: Node<'_, '_>, position: usize) -> Result<CorpusEntry, CorpusError> {
        let entry_id = node.attribute("id").map_or_else(|| position.to_string(), str::to_owned);
        let mut text = None;
        let mut toponyms = None;
        for child in node.children().filter(Node::is_element) {
            let slot = match child.tag_name().name() {
                "text" => &mut text,
                "toponyms" => &mut toponyms,
                other => {
                    return Err(self.schema_error(child, format!("unexpected <{other}> inside <entry>")))
                }
            };
            if slot.replace(child).is_some() {
                return Err(self.schema_error(
                    child,
                    format!("duplicate <{}> in entry {entry_id:?}", child.tag_name().name()),
                ));
            }
        }
        let text = text
            .map(text_content)
            .ok_or_else(|| self.schema_error(node, format!("entry {entry_id:?} has no <text>")))?;

        let mut annotations = Vec::new();
        if let Some(toponyms) = toponyms {
            for child in toponyms.children().filter(Node::is_element) {
                if child.tag_name().name() != "toponym" {
                    return Err(self.schema_error(
                        child,
                        format!("unexpected <{}> inside <toponyms>", child.tag_name().name()),
                    ));
                }
                annotations.push(self.toponym(child, &entry_id)?);
            }
        }
        Ok(CorpusEntry { entry_id, text, annotations })
    }

    fn toponym(&self, node: Node<'_, '_>, entry_id: &str) -> Result<ToponymSpan, CorpusError> {
        let mut start = None;
        let mut end = None;
        let mut phrase = None;
        let mut place = None;
        let mut extra = Vec::new();
        for child in node.children().filter(Node::is_element) {
            let slot = match child.tag_name().name() {
                "start" => &mut start,
                "end" => &mut end,
                "phrase" => &mut phrase,
                "place" => &mut place,
                other => {
                    extra.push(OpaqueTag { name: other.to_owned(), value: text_content(child) });
                    continue;
                }
            };
            if slot.replace(child).is_some() {
                return Err(self.schema_error(
                    child,
                    format!("duplicate <{}> in a toponym of entry {entry_id:?}", child.tag_name().name()),
                ));
            }
        }
        let missing = |tag: &str| self.schema_error(node, format!("toponym in entry {entry_id:?} has no <{tag}>"));
        let start = self.index(start.ok_or_else(|| missing("start"))?)?;
        let end = self.index(end.ok_or_else(|| missing("end"))?)?;
        let phrase = text_content(phrase.ok_or_else(|| missing("phrase"))?);

        let mut span = ToponymSpan::new(start, end, phrase);
        span.extra = extra;
        if let Some(place) = place {
            self.place(place, entry_id, &mut span)?;
        }
        Ok(span)
    }

    fn place(&self, node: Node<'_, '_>, entry_id: &str, span: &mut ToponymSpan) -> Result<(), CorpusError> {
        let mut footprint = None;
        let mut place_name = None;
        let mut place_type = None;
        for child in node.children().filter(Node::is_element) {
            let slot = match child.tag_name().name() {
                "footprint" => &mut footprint,
                "placename" => &mut place_name,
                "placetype" => &mut place_type,
                other => {
                    span.place_extra.push(OpaqueTag { name: other.to_owned(), value: text_content(child) });
                    continue;
                }
            };
            if slot.replace(child).is_some() {
                return Err(self.schema_error(
                    child,
                    format!("duplicate <{}> in a place of entry {entry_id:?}", child.tag_name().name()),
                ));
            }
        }
        if let Some(footprint) = footprint {
            span.footprint = Some(self.footprint(footprint)?);
        }
        span.place_name = place_name.map(text_content);
        span.place_type = place_type.map(text_content);
        Ok(())
    }

    fn index(&self, node: Node<'_, '_>) -> Result<usize, CorpusError> {
        let raw = text_content(node);
        raw.trim().parse().map_err(|_| {
            self.schema_error(
                node,
                format!("<{}> must be a non-negative integer, found {raw:?}", node.tag_name().name()),
            )
        })
    }

    /// Footprints are `lon lat`; range checks happen during validation so
    /// the error can name the span.
    fn footprint(&self, node: Node<'_, '_>) -> Result<GeoPoint, CorpusError> {
        let raw = text_content(node);
        let coords: Vec<f64> = raw
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| self.schema_error(node, format!("non-numeric footprint {raw:?}")))?;
        match coords[..] {
            [lon, lat] => Ok(GeoPoint { lon, lat }),
            _ => Err(self.schema_error(node, format!("footprint must be \"lon lat\", found {raw:?}"))),
        }
    }
}

fn text_content(node: Node<'_, '_>) -> String {
    node.descendants().filter(Node::is_text).filter_map(|n| n.text()).collect()
}

/// Serializes a corpus to the unified XML format. Optional tags are omitted
/// when absent rather than written empty.
pub fn serialize_corpus(corpus: &Corpus) -> Vec<u8> {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    out.push_str(&format!(
        "<entries id=\"{}\" name=\"{}\" genre=\"{}\">\n",
        escape(&corpus.id, true),
        escape(&corpus.name, true),
        corpus.genre
    ));
    for entry in &corpus.entries {
        out.push_str(&format!("  <entry id=\"{}\">\n", escape(&entry.entry_id, true)));
        out.push_str(&format!("    <text>{}</text>\n", escape(&entry.text, false)));
        out.push_str("    <toponyms>\n");
        for span in &entry.annotations {
            write_toponym(&mut out, span);
        }
        out.push_str("    </toponyms>\n");
        out.push_str("  </entry>\n");
    }
    out.push_str("</entries>\n");
    out.into_bytes()
}

fn write_toponym(out: &mut String, span: &ToponymSpan) {
    out.push_str("      <toponym>\n");
    out.push_str(&format!("        <start>{}</start>\n", span.start));
    out.push_str(&format!("        <end>{}</end>\n", span.end));
    out.push_str(&format!("        <phrase>{}</phrase>\n", escape(&span.phrase, false)));
    if span.has_place() {
        out.push_str("        <place>\n");
        if let Some(point) = span.footprint {
            out.push_str(&format!("          <footprint>{point}</footprint>\n"));
        }
        if let Some(name) = &span.place_name {
            out.push_str(&format!("          <placename>{}</placename>\n", escape(name, false)));
        }
        if let Some(kind) = &span.place_type {
            out.push_str(&format!("          <placetype>{}</placetype>\n", escape(kind, false)));
        }
        for tag in &span.place_extra {
            out.push_str(&format!("          <{0}>{1}</{0}>\n", tag.name, escape(&tag.value, false)));
        }
        out.push_str("        </place>\n");
    }
    for tag in &span.extra {
        out.push_str(&format!("        <{0}>{1}</{0}>\n", tag.name, escape(&tag.value, false)));
    }
    out.push_str("      </toponym>\n");
}

/// Escapes markup characters plus the whitespace an XML parser would
/// otherwise normalize (`\r` everywhere, `\t`/`\n` inside attributes).
fn escape(raw: &str, attribute: bool) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\n' if attribute => out.push_str("&#10;"),
            '\t' if attribute => out.push_str("&#9;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub entry_count: usize,
    pub mean_words_per_entry: f64,
    pub mean_toponyms_per_entry: f64,
}

/// Entry count and per-entry averages, rounded to one decimal. A word is a
/// maximal run of non-whitespace characters.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let entry_count = corpus.entries.len();
    if entry_count == 0 {
        return CorpusStats { entry_count, mean_words_per_entry: 0.0, mean_toponyms_per_entry: 0.0 };
    }
    let words: usize = corpus.entries.iter().map(|e| e.text.split_whitespace().count()).sum();
    let round1 = |x: f64| (x * 10.0).round() / 10.0;
    CorpusStats {
        entry_count,
        mean_words_per_entry: round1(words as f64 / entry_count as f64),
        mean_toponyms_per_entry: round1(corpus.annotation_count() as f64 / entry_count as f64),
    }
}
