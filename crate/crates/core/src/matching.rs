//! Alignment of predicted toponym spans with gold annotations.
//!
//! Matching is positional: a prediction counts for a gold span when their
//! inclusive character ranges overlap, whatever the surface strings say
//! (`Amherst` matches a gold `Town of Amherst`). Each gold span, taken in
//! ascending start order, claims the unmatched prediction with the largest
//! overlap; ties go to the prediction that starts first.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::ToponymSpan;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Any shared character position is a match.
    #[default]
    Inexact,
    /// Only identical `[start, end]` ranges match.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gold: ToponymSpan,
    pub pred: ToponymSpan,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub unmatched_gold: Vec<ToponymSpan>,
    pub unmatched_pred: Vec<ToponymSpan>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    #[serde(rename = "tp")]
    pub true_positives: usize,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, rhs: Self) {
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

pub fn spans_overlap(a: &ToponymSpan, b: &ToponymSpan) -> bool {
    a.start <= b.end && b.start <= a.end
}

/// Number of shared character positions.
pub fn overlap_len(a: &ToponymSpan, b: &ToponymSpan) -> usize {
    if spans_overlap(a, b) {
        a.end.min(b.end) - a.start.max(b.start) + 1
    } else {
        0
    }
}

pub fn match_spans(gold: &[ToponymSpan], pred: &[ToponymSpan]) -> MatchReport {
    match_spans_with(gold, pred, MatchMode::Inexact)
}

pub fn match_spans_with(gold: &[ToponymSpan], pred: &[ToponymSpan], mode: MatchMode) -> MatchReport {
    let mut gold_order: Vec<usize> = (0..gold.len()).collect();
    gold_order.sort_by(|&a, &b| span_order(&gold[a], &gold[b]));
    // Sorting the predictions up front makes the result independent of the
    // order they were reported in.
    let mut pred_order: Vec<usize> = (0..pred.len()).collect();
    pred_order.sort_by(|&a, &b| span_order(&pred[a], &pred[b]));

    let mut pred_taken = vec![false; pred.len()];
    let mut report = MatchReport::default();
    for &g in &gold_order {
        let gold_span = &gold[g];
        let mut best: Option<(usize, usize)> = None;
        for &p in &pred_order {
            if pred_taken[p] {
                continue;
            }
            let score = match mode {
                MatchMode::Inexact => overlap_len(gold_span, &pred[p]),
                MatchMode::Exact => usize::from(gold_span.start == pred[p].start && gold_span.end == pred[p].end),
            };
            // Strict comparison keeps the earliest prediction on ties.
            if score > 0 && best.is_none_or(|(_, s)| score > s) {
                best = Some((p, score));
            }
        }
        match best {
            Some((p, _)) => {
                pred_taken[p] = true;
                report.pairs.push(MatchedPair { gold: gold_span.clone(), pred: pred[p].clone() });
            }
            None => report.unmatched_gold.push(gold_span.clone()),
        }
    }
    report.unmatched_pred = pred_order.iter().filter(|&&p| !pred_taken[p]).map(|&p| pred[p].clone()).collect();
    report.true_positives = report.pairs.len();
    report.false_negatives = report.unmatched_gold.len();
    report.false_positives = report.unmatched_pred.len();
    report
}

pub fn count_confusion(report: &MatchReport) -> Confusion {
    Confusion {
        true_positives: report.true_positives,
        false_positives: report.false_positives,
        false_negatives: report.false_negatives,
    }
}

/// Total order used for deterministic iteration: position first, then the
/// remaining fields so that only fully identical spans compare equal.
fn span_order(a: &ToponymSpan, b: &ToponymSpan) -> Ordering {
    let point = |s: &ToponymSpan| s.footprint.map(|p| (p.lon, p.lat));
    a.start
        .cmp(&b.start)
        .then(a.end.cmp(&b.end))
        .then_with(|| a.phrase.cmp(&b.phrase))
        .then_with(|| match (point(a), point(b)) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some((ax, ay)), Some((bx, by))) => ax.total_cmp(&bx).then(ay.total_cmp(&by)),
        })
        .then_with(|| a.place_name.cmp(&b.place_name))
        .then_with(|| a.place_type.cmp(&b.place_type))
}
