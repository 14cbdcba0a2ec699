//! Experiment runs: every selected corpus against every selected geoparser,
//! scored on the selected metrics and archived under a random ID.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use futures::stream::{self, StreamExt};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::geoparse::{cached_geoparse, corpus_hash, CellError, Geoparser, GeoparserRef};
use crate::matching::Confusion;
use crate::metrics::{evaluate_run, EvaluationError, Metric, MetricValue};
use crate::store::{created_key, Store, StoreError};

pub const DEFAULT_PARALLELISM: usize = 4;
const ID_ALPHABET: &[u8; 36] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExperimentId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("experiment id {0:?} is not 16 characters of A-Z and 0-9")]
pub struct MalformedId(pub String);

impl ExperimentId {
    pub const LEN: usize = 16;

    pub fn parse(s: &str) -> Result<Self, MalformedId> {
        if s.len() == Self::LEN && s.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
            Ok(Self(s.to_owned()))
        } else {
            Err(MalformedId(s.to_owned()))
        }
    }

    pub fn random() -> Self {
        let mut rng = rand::rng();
        let id = (0..Self::LEN).map(|_| *ID_ALPHABET.choose(&mut rng).expect("non-empty alphabet") as char).collect();
        Self(id)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for ExperimentId {
    type Err = MalformedId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for ExperimentId {
    type Error = MalformedId;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<ExperimentId> for String {
    fn from(id: ExperimentId) -> Self {
        id.0
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A fresh id not yet present in `store`.
pub fn generate_experiment_id(store: &Store) -> Result<ExperimentId, StoreError> {
    loop {
        let id = ExperimentId::random();
        if !store.experiment_exists(&id)? {
            return Ok(id);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentStatus {
    Running,
    Complete,
    Failed,
}

impl ExperimentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentStatus::Running => "running",
            ExperimentStatus::Complete => "complete",
            ExperimentStatus::Failed => "failed",
        }
    }
}

/// Scores of one geoparser on one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub corpus: String,
    pub geoparser: String,
    pub cells: BTreeMap<Metric, MetricValue>,
    /// Pooled tp/fp/fn; absent for failed cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Confusion>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn cell(&self, corpus: &str, geoparser: &str, metric: Metric) -> Option<MetricValue> {
        self.rows
            .iter()
            .find(|row| row.corpus == corpus && row.geoparser == geoparser)
            .and_then(|row| row.cells.get(&metric).copied())
    }
}

/// What exactly was evaluated in one cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub corpus: String,
    pub corpus_sha256: String,
    pub geoparser: String,
    pub geoparser_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment_id: ExperimentId,
    pub created_at: DateTime<Utc>,
    pub corpora: Vec<String>,
    pub geoparsers: Vec<GeoparserRef>,
    pub metrics: BTreeSet<Metric>,
    pub status: ExperimentStatus,
    /// Absent while the experiment is running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<MetricTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<CellProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: ExperimentId,
    pub created_at: DateTime<Utc>,
    pub status: ExperimentStatus,
    pub corpora: Vec<String>,
    pub geoparsers: Vec<String>,
    pub metrics: BTreeSet<Metric>,
}

impl From<&ExperimentRecord> for ExperimentSummary {
    fn from(record: &ExperimentRecord) -> Self {
        Self {
            experiment_id: record.experiment_id.clone(),
            created_at: record.created_at,
            status: record.status,
            corpora: record.corpora.clone(),
            geoparsers: record.geoparsers.iter().map(|g| g.id.clone()).collect(),
            metrics: record.metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPage {
    pub items: Vec<ExperimentSummary>,
    /// Pass back to fetch the next page; absent on the last page.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("select at least one corpus")]
    NoCorpora,
    #[error("select at least one geoparser")]
    NoGeoparsers,
    #[error("select at least one metric")]
    NoMetrics,
    #[error(transparent)]
    MalformedId(#[from] MalformedId),
    #[error("malformed page cursor {0:?}")]
    BadCursor(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ExperimentError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, ExperimentError::Store(_))
    }
}

/// The selections of one experiment, resolved to runnable objects.
#[derive(Clone)]
pub struct ExperimentPlan {
    pub corpora: Vec<Arc<Corpus>>,
    pub geoparsers: Vec<Arc<dyn Geoparser>>,
    pub metrics: BTreeSet<Metric>,
    /// Bound on concurrent cells, and on concurrent entries within a cell.
    pub parallelism: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.corpora.is_empty() {
            return Err(ExperimentError::NoCorpora);
        }
        if self.geoparsers.is_empty() {
            return Err(ExperimentError::NoGeoparsers);
        }
        if self.metrics.is_empty() {
            return Err(ExperimentError::NoMetrics);
        }
        Ok(())
    }
}

/// Validates the plan and archives a `running` record under a fresh id.
pub fn start_experiment(store: &Store, plan: &ExperimentPlan) -> Result<ExperimentRecord, ExperimentError> {
    plan.validate()?;
    loop {
        let record = ExperimentRecord {
            experiment_id: generate_experiment_id(store)?,
            created_at: Utc::now().trunc_subsecs(6),
            corpora: plan.corpora.iter().map(|c| c.id.clone()).collect(),
            geoparsers: plan.geoparsers.iter().map(|g| g.reference().clone()).collect(),
            metrics: plan.metrics.clone(),
            status: ExperimentStatus::Running,
            results: None,
            failure_detail: None,
            provenance: Vec::new(),
        };
        // Lost a race for the id with a concurrent run; draw again.
        if store.insert_experiment(&record)? {
            return Ok(record);
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CellFailure {
    #[error(transparent)]
    Geoparse(#[from] CellError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

async fn run_cell(
    store: &Store,
    corpus: &Corpus,
    geoparser: &dyn Geoparser,
    metrics: &BTreeSet<Metric>,
    parallelism: usize,
) -> Result<MetricRow, CellFailure> {
    let run = cached_geoparse(store, geoparser, corpus, parallelism).await?;
    let evaluation = evaluate_run(corpus, &run.results, metrics)?;
    Ok(MetricRow {
        corpus: corpus.id.clone(),
        geoparser: geoparser.reference().id.clone(),
        cells: evaluation.cells,
        counts: Some(evaluation.confusion),
    })
}

/// Runs every (corpus, geoparser) cell of a started experiment and archives
/// the finished record. A failed cell has every metric marked `failed` and
/// fails the record; other cells are still scored.
pub async fn execute_experiment(
    store: &Store,
    plan: &ExperimentPlan,
    mut record: ExperimentRecord,
) -> Result<ExperimentRecord, ExperimentError> {
    let parallelism = plan.parallelism.max(1);
    let cells: Vec<(&Arc<Corpus>, &Arc<dyn Geoparser>)> =
        plan.corpora.iter().flat_map(|c| plan.geoparsers.iter().map(move |g| (c, g))).collect();
    let outcomes: Vec<_> = stream::iter(0..cells.len())
        .map(|i| {
            let (corpus, geoparser) = cells[i];
            run_cell(store, corpus, geoparser.as_ref(), &plan.metrics, parallelism)
        })
        .buffered(parallelism)
        .collect()
        .await;

    let mut table = MetricTable::default();
    let mut failures = Vec::new();
    for ((corpus, geoparser), outcome) in cells.iter().zip(outcomes) {
        let geoparser_id = &geoparser.reference().id;
        let row = outcome.unwrap_or_else(|err| {
            failures.push(format!("{} on {}: {err}", geoparser_id, corpus.id));
            MetricRow {
                corpus: corpus.id.clone(),
                geoparser: geoparser_id.clone(),
                cells: plan.metrics.iter().map(|&m| (m, MetricValue::Failed)).collect(),
                counts: None,
            }
        });
        table.rows.push(row);
        record.provenance.push(CellProvenance {
            corpus: corpus.id.clone(),
            corpus_sha256: corpus_hash(corpus),
            geoparser: geoparser_id.clone(),
            geoparser_version: geoparser.reference().version.clone(),
        });
    }

    record.results = Some(table);
    if failures.is_empty() {
        record.status = ExperimentStatus::Complete;
    } else {
        record.status = ExperimentStatus::Failed;
        record.failure_detail = Some(failures.join("; "));
    }
    store.update_experiment(&record)?;
    Ok(record)
}

pub async fn run_experiment(store: &Store, plan: &ExperimentPlan) -> Result<ExperimentRecord, ExperimentError> {
    let record = start_experiment(store, plan)?;
    execute_experiment(store, plan, record).await
}

/// `Ok(None)` when the id is well formed but unknown.
pub fn find_experiment(store: &Store, id: &str) -> Result<Option<ExperimentRecord>, ExperimentError> {
    let id = ExperimentId::parse(id)?;
    Ok(store.experiment(&id)?)
}

const CURSOR_SEPARATOR: char = '~';

/// Newest first. `cursor` is the `next_cursor` of the previous page.
pub fn list_experiments(store: &Store, cursor: Option<&str>, limit: usize) -> Result<ExperimentPage, ExperimentError> {
    let after = match cursor {
        None => None,
        Some(raw) => {
            let bad = || ExperimentError::BadCursor(raw.to_owned());
            let (created, id) = raw.split_once(CURSOR_SEPARATOR).ok_or_else(bad)?;
            DateTime::parse_from_rfc3339(created).map_err(|_| bad())?;
            ExperimentId::parse(id).map_err(|_| bad())?;
            Some((created, id))
        }
    };
    let limit = limit.max(1);
    let mut records = store.experiments_page(after, limit + 1)?;
    let next_cursor = if records.len() > limit {
        records.truncate(limit);
        records.last().map(|r| format!("{}{CURSOR_SEPARATOR}{}", created_key(r), r.experiment_id))
    } else {
        None
    };
    Ok(ExperimentPage { items: records.iter().map(ExperimentSummary::from).collect(), next_cursor })
}
