//! Conversion from line-oriented annotation files (CSV/TSV) to [`Corpus`].

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{char_slice, Corpus, CorpusEntry, GeoPoint, Genre, ToponymSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineFormat {
    /// Tab separated; consecutive rows with the same record key form one entry.
    TsvMultiLine,
    /// Comma separated; every row is its own entry.
    CsvOnePerLine,
}

impl std::str::FromStr for LineFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv_multi_line" => Ok(LineFormat::TsvMultiLine),
            "csv_one_per_line" => Ok(LineFormat::CsvOnePerLine),
            _ => Err(format!("unknown format {s:?}; expected tsv_multi_line or csv_one_per_line")),
        }
    }
}

/// Maps corpus fields to header names of the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub text: String,
    pub phrase: String,
    pub lon: String,
    pub lat: String,
    /// Groups rows into entries and doubles as the entry id. Without it,
    /// multi-line input groups on the text column and ids are row numbers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionNote {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub rows_read: usize,
    pub warnings: Vec<ConversionNote>,
    pub skipped: Vec<ConversionNote>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConversionError {
    #[error("column {0:?} named in the column map is not in the header")]
    MissingColumn(String),
    #[error("input has no header row")]
    MissingHeader,
    #[error("reading input: {0}")]
    Csv(#[from] csv::Error),
}

struct Columns {
    text: usize,
    phrase: usize,
    lon: usize,
    lat: usize,
    record_key: Option<usize>,
    place_name: Option<usize>,
    place_type: Option<usize>,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, map: &ColumnMap) -> Result<Self, ConversionError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| ConversionError::MissingColumn(name.to_owned()))
        };
        let optional = |name: &Option<String>| name.as_deref().map(find).transpose();
        Ok(Self {
            text: find(&map.text)?,
            phrase: find(&map.phrase)?,
            lon: find(&map.lon)?,
            lat: find(&map.lat)?,
            record_key: optional(&map.record_key)?,
            place_name: optional(&map.place_name)?,
            place_type: optional(&map.place_type)?,
        })
    }
}

/// Converts CSV/TSV annotation rows into a corpus (id `corpus`, genre
/// `other`, fully annotated; callers adjust those afterwards).
///
/// Spans are recovered by searching the phrase in the entry text. A phrase
/// that occurs several times takes the first occurrence not already claimed
/// by an earlier row of the same entry, and the ambiguity is noted as a
/// warning. Rows whose phrase cannot be found are skipped and reported.
pub fn convert_line_corpus(
    rows: &[u8],
    format: LineFormat,
    column_map: &ColumnMap,
) -> Result<(Corpus, ConversionReport), ConversionError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(match format {
            LineFormat::TsvMultiLine => b'\t',
            LineFormat::CsvOnePerLine => b',',
        })
        .quoting(format == LineFormat::CsvOnePerLine)
        .flexible(true)
        .has_headers(true)
        .from_reader(rows);
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(ConversionError::MissingHeader);
    }
    let columns = Columns::resolve(&header, column_map)?;

    let mut corpus = Corpus::new("corpus", Genre::Other, true);
    let mut report = ConversionReport::default();
    let mut seen_ids = HashSet::new();
    // Key of the entry currently being extended (multi-line only).
    let mut open_key: Option<String> = None;
    // Characters already claimed in the open entry.
    let mut claimed: Vec<(usize, usize)> = Vec::new();

    for (index, record) in reader.records().enumerate() {
        let row = index + 1;
        let record = record?;
        report.rows_read += 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let text = field(columns.text);
        let key = columns.record_key.map(field);

        let extends_open = format == LineFormat::TsvMultiLine
            && open_key.as_deref() == Some(key.unwrap_or(text))
            && corpus.entries.last().is_some_and(|e| e.text == text);
        if !extends_open {
            let entry_id = key.map_or_else(|| row.to_string(), str::to_owned);
            if !seen_ids.insert(entry_id.clone()) {
                report.skipped.push(ConversionNote {
                    row,
                    message: format!("record key {entry_id:?} reappears after other records"),
                });
                open_key = None;
                continue;
            }
            let annotation = match annotation_from_row(&record, &columns, text, &[], row, &mut report) {
                Ok(annotation) => annotation,
                Err(note) => {
                    report.skipped.push(note);
                    seen_ids.remove(&entry_id);
                    open_key = None;
                    continue;
                }
            };
            claimed.clear();
            let mut entry = CorpusEntry { entry_id, text: text.to_owned(), annotations: Vec::new() };
            if let Some(span) = annotation {
                claimed.push((span.start, span.end));
                entry.annotations.push(span);
            }
            corpus.entries.push(entry);
            open_key = (format == LineFormat::TsvMultiLine).then(|| key.unwrap_or(text).to_owned());
        } else {
            match annotation_from_row(&record, &columns, text, &claimed, row, &mut report) {
                Ok(Some(span)) => {
                    claimed.push((span.start, span.end));
                    if let Some(entry) = corpus.entries.last_mut() {
                        entry.annotations.push(span);
                    }
                }
                Ok(None) => {}
                Err(note) => report.skipped.push(note),
            }
        }
    }
    Ok((corpus, report))
}

/// `Ok(None)` for rows that carry no toponym (empty phrase).
fn annotation_from_row(
    record: &csv::StringRecord,
    columns: &Columns,
    text: &str,
    claimed: &[(usize, usize)],
    row: usize,
    report: &mut ConversionReport,
) -> Result<Option<ToponymSpan>, ConversionNote> {
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let skip = |message: String| ConversionNote { row, message };
    let phrase = record.get(columns.phrase).unwrap_or("");
    if phrase.trim().is_empty() {
        return Ok(None);
    }

    let footprint = match (field(columns.lon), field(columns.lat)) {
        ("", "") => None,
        (lon, lat) => {
            let (lon, lat) = lon
                .parse::<f64>()
                .and_then(|lon| Ok((lon, lat.parse::<f64>()?)))
                .map_err(|_| skip(format!("non-numeric coordinates ({lon:?}, {lat:?})")))?;
            Some(GeoPoint::new(lon, lat).map_err(|e| skip(e.to_string()))?)
        }
    };

    let occurrences = find_occurrences(text, phrase);
    let Some(&(start, end)) = occurrences
        .iter()
        .find(|(s, e)| !claimed.iter().any(|(cs, ce)| s <= ce && cs <= e))
    else {
        return Err(skip(format!("phrase {phrase:?} not found in text")));
    };
    if occurrences.len() > 1 {
        report.warnings.push(ConversionNote {
            row,
            message: format!(
                "phrase {phrase:?} occurs {} times; using characters [{start}, {end}]",
                occurrences.len()
            ),
        });
    }

    let mut span = ToponymSpan::new(start, end, phrase);
    span.footprint = footprint;
    span.place_name = columns.place_name.map(field).filter(|s| !s.is_empty()).map(str::to_owned);
    span.place_type = columns.place_type.map(field).filter(|s| !s.is_empty()).map(str::to_owned);
    debug_assert_eq!(char_slice(text, start, end), Some(phrase));
    Ok(Some(span))
}

/// Inclusive character ranges of every (possibly overlapping) occurrence.
fn find_occurrences(text: &str, phrase: &str) -> Vec<(usize, usize)> {
    let len = phrase.chars().count();
    let mut found = Vec::new();
    for (char_index, (byte_index, _)) in text.char_indices().enumerate() {
        if text[byte_index..].starts_with(phrase) {
            found.push((char_index, char_index + len - 1));
        }
    }
    found
}
