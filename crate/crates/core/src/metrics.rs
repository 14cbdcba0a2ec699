//! The eight evaluation metrics.
//!
//! Four measure recognition (precision, recall, F-score, accuracy) from the
//! confusion counts of a [`MatchReport`]; four measure resolution (mean and
//! median error distance, accuracy within 161 km, and the normalized
//! log-error AUC) from the great-circle distances of matched pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GeoPoint};
use crate::geoparse::GeoparseResult;
use crate::matching::{count_confusion, match_spans_with, Confusion, MatchMode, MatchReport};

/// Mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Half the Earth's circumference: the largest possible error distance.
pub const MAX_ERROR_KM: f64 = PI * EARTH_RADIUS_KM;
/// 100 miles.
pub const ACCURACY_RADIUS_KM: f64 = 161.0;

/// Haversine great-circle distance in kilometers.
pub fn error_distance_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Error distances (km) of matched, geo-located toponyms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorDistanceSet(Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("error distance {0} km is outside [0, {MAX_ERROR_KM}]")]
pub struct DistanceOutOfRange(pub f64);

impl ErrorDistanceSet {
    pub fn new(distances: Vec<f64>) -> Result<Self, DistanceOutOfRange> {
        match distances.iter().find(|d| !(0.0..=MAX_ERROR_KM).contains(*d)) {
            Some(&bad) => Err(DistanceOutOfRange(bad)),
            None => Ok(Self(distances)),
        }
    }

    /// Distances for every pair whose gold annotation and prediction both
    /// carry a footprint.
    pub fn from_report(report: &MatchReport) -> Self {
        Self(
            report
                .pairs
                .iter()
                .filter_map(|pair| Some(error_distance_km(pair.gold.footprint?, pair.pred.footprint?)))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn extend(&mut self, other: ErrorDistanceSet) {
        self.0.extend(other.0);
    }
}

fn ratio(numerator: usize, denominator: usize) -> Option<f64> {
    (denominator > 0).then(|| numerator as f64 / denominator as f64)
}

pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    ratio(tp, tp + fp)
}

pub fn recall(tp: usize, fn_: usize) -> Option<f64> {
    ratio(tp, tp + fn_)
}

/// Harmonic mean; zero when both inputs are zero.
pub fn fscore(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Share of gold annotations that were recognized.
pub fn annotation_accuracy(report: &MatchReport, gold_count: usize) -> Option<f64> {
    ratio(report.true_positives, gold_count)
}

pub fn mean_error_distance(d: &ErrorDistanceSet) -> Option<f64> {
    (!d.is_empty()).then(|| d.0.iter().sum::<f64>() / d.len() as f64)
}

pub fn median_error_distance(d: &ErrorDistanceSet) -> Option<f64> {
    if d.is_empty() {
        return None;
    }
    let mut sorted = d.0.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 })
}

/// Fraction of distances at or below 161 km.
pub fn accuracy_at_161(d: &ErrorDistanceSet) -> Option<f64> {
    accuracy_within(d, ACCURACY_RADIUS_KM)
}

pub fn accuracy_within(d: &ErrorDistanceSet, radius_km: f64) -> Option<f64> {
    ratio(d.0.iter().filter(|&&x| x <= radius_km).count(), d.len())
}

/// Mean of `ln(ed + 1) / ln(MAX_ERROR_KM)` with each term capped at 1, so
/// 0 is perfect and 1 is the worst possible score.
pub fn auc_error(d: &ErrorDistanceSet) -> Option<f64> {
    if d.is_empty() {
        return None;
    }
    let scale = MAX_ERROR_KM.ln();
    let total: f64 = d.0.iter().map(|&x| ((x + 1.0).ln() / scale).min(1.0)).sum();
    Some(total / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "precision")]
    Precision,
    #[serde(rename = "recall")]
    Recall,
    #[serde(rename = "fscore")]
    FScore,
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "med")]
    MeanErrorDistance,
    #[serde(rename = "mdned")]
    MedianErrorDistance,
    #[serde(rename = "acc_at_161")]
    AccuracyAt161,
    #[serde(rename = "auc")]
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Precision,
        Metric::Recall,
        Metric::FScore,
        Metric::Accuracy,
        Metric::MeanErrorDistance,
        Metric::MedianErrorDistance,
        Metric::AccuracyAt161,
        Metric::Auc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::FScore => "fscore",
            Metric::Accuracy => "accuracy",
            Metric::MeanErrorDistance => "med",
            Metric::MedianErrorDistance => "mdned",
            Metric::AccuracyAt161 => "acc_at_161",
            Metric::Auc => "auc",
        }
    }

    /// Precision, recall and F-score assume every toponym is annotated.
    pub fn needs_full_annotation(self) -> bool {
        matches!(self, Metric::Precision | Metric::Recall | Metric::FScore)
    }

    pub fn all() -> BTreeSet<Metric> {
        Metric::ALL.into_iter().collect()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown metric {0:?}")]
pub struct UnknownMetric(pub String);

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownMetric(s.to_owned()))
    }
}

/// Parses a comma-separated metric list, or `all`.
pub fn parse_metric_list(list: &str) -> Result<BTreeSet<Metric>, UnknownMetric> {
    if list.trim() == "all" {
        return Ok(Metric::all());
    }
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

/// One cell of a metric table. Serialized as a bare number or as one of the
/// strings `not_applicable`, `undefined`, `failed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Value(f64),
    /// The metric does not apply to this corpus (partial annotation).
    NotApplicable,
    /// The formula has an empty denominator or an empty distance set.
    Undefined,
    /// The geoparser run for this cell failed.
    Failed,
}

impl MetricValue {
    pub fn from_option(value: Option<f64>) -> Self {
        value.map_or(MetricValue::Undefined, MetricValue::Value)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            MetricValue::Value(v) => serializer.serialize_f64(*v),
            MetricValue::NotApplicable => serializer.serialize_str("not_applicable"),
            MetricValue::Undefined => serializer.serialize_str("undefined"),
            MetricValue::Failed => serializer.serialize_str("failed"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Marker(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(MetricValue::Value(v)),
            Raw::Marker(m) => match m.as_str() {
                "not_applicable" => Ok(MetricValue::NotApplicable),
                "undefined" => Ok(MetricValue::Undefined),
                "failed" => Ok(MetricValue::Failed),
                other => Err(serde::de::Error::custom(format!("unknown metric marker {other:?}"))),
            },
        }
    }
}

/// Corpus-wide outcome of scoring one geoparser run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: Confusion,
    pub gold_count: usize,
    pub distances: ErrorDistanceSet,
    pub cells: BTreeMap<Metric, MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationError {
    #[error("no geoparse result for entry {0:?}")]
    MissingResult(String),
    #[error("geoparse result for entry {0:?}, which is not in the corpus")]
    UnknownEntry(String),
    #[error("more than one geoparse result for entry {0:?}")]
    DuplicateResult(String),
}

pub fn evaluate_run(
    corpus: &Corpus,
    results: &[GeoparseResult],
    selected: &BTreeSet<Metric>,
) -> Result<Evaluation, EvaluationError> {
    evaluate_run_with(corpus, results, selected, MatchMode::Inexact)
}

/// Matches every entry, pools the counts and distances across the corpus
/// (micro-averaging), then computes the selected metrics.
pub fn evaluate_run_with(
    corpus: &Corpus,
    results: &[GeoparseResult],
    selected: &BTreeSet<Metric>,
    mode: MatchMode,
) -> Result<Evaluation, EvaluationError> {
    let mut by_entry: HashMap<&str, &GeoparseResult> = HashMap::with_capacity(results.len());
    for result in results {
        if by_entry.insert(result.entry_id.as_str(), result).is_some() {
            return Err(EvaluationError::DuplicateResult(result.entry_id.clone()));
        }
    }
    if let Some(stray) = results.iter().find(|r| corpus.entry(&r.entry_id).is_none()) {
        return Err(EvaluationError::UnknownEntry(stray.entry_id.clone()));
    }

    let mut confusion = Confusion::default();
    let mut distances = ErrorDistanceSet::default();
    let mut gold_count = 0;
    for entry in &corpus.entries {
        let result = by_entry
            .get(entry.entry_id.as_str())
            .ok_or_else(|| EvaluationError::MissingResult(entry.entry_id.clone()))?;
        let report = match_spans_with(&entry.annotations, &result.toponyms, mode);
        confusion += count_confusion(&report);
        distances.extend(ErrorDistanceSet::from_report(&report));
        gold_count += entry.annotations.len();
    }

    let tp = confusion.true_positives;
    let p = precision(tp, confusion.false_positives);
    let r = recall(tp, confusion.false_negatives);
    let cells = selected
        .iter()
        .map(|&metric| {
            let value = if metric.needs_full_annotation() && !corpus.fully_annotated {
                MetricValue::NotApplicable
            } else {
                MetricValue::from_option(match metric {
                    Metric::Precision => p,
                    Metric::Recall => r,
                    Metric::FScore => p.zip(r).map(|(p, r)| fscore(p, r)),
                    Metric::Accuracy => ratio(tp, gold_count),
                    Metric::MeanErrorDistance => mean_error_distance(&distances),
                    Metric::MedianErrorDistance => median_error_distance(&distances),
                    Metric::AccuracyAt161 => accuracy_at_161(&distances),
                    Metric::Auc => auc_error(&distances),
                })
            };
            (metric, value)
        })
        .collect();
    Ok(Evaluation { confusion, gold_count, distances, cells })
}
