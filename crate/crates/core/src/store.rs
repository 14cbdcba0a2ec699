//! Single-file SQLite store for experiment records, cached geoparser
//! output, uploaded corpora and registered geoparsers.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{SecondsFormat, Utc};
use rusqlite::{params, Connection, ErrorCode, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_stats, parse_unified_corpus, serialize_corpus, Corpus, CorpusStats, Genre};
use crate::experiment::{ExperimentId, ExperimentRecord};
use crate::geoparse::{CacheKey, GeoparserRegistration};

const SCHEMA: &str = r"
CREATE TABLE IF NOT EXISTS experiments (
    id TEXT PRIMARY KEY,
    created_at TEXT NOT NULL,
    status TEXT NOT NULL,
    record TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_experiments_created ON experiments (created_at DESC, id DESC);
CREATE TABLE IF NOT EXISTS geoparse_cache (
    corpus_hash TEXT NOT NULL,
    parser_id TEXT NOT NULL,
    parser_version TEXT NOT NULL,
    results TEXT NOT NULL,
    created_at TEXT NOT NULL,
    PRIMARY KEY (corpus_hash, parser_id, parser_version)
);
CREATE TABLE IF NOT EXISTS corpora (
    id TEXT PRIMARY KEY,
    fully_annotated INTEGER NOT NULL,
    xml BLOB NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS geoparsers (
    id TEXT PRIMARY KEY,
    registration TEXT NOT NULL,
    created_at TEXT NOT NULL
);
";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("stored JSON is unreadable: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{kind} {id:?} already exists")]
    Conflict { kind: &'static str, id: String },
    #[error("stored corpus {id:?} no longer parses: {message}")]
    Corrupt { id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub id: String,
    pub name: String,
    pub genre: Genre,
    pub fully_annotated: bool,
    pub stats: CorpusStats,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> Self {
        Self {
            id: corpus.id.clone(),
            name: corpus.name.clone(),
            genre: corpus.genre,
            fully_annotated: corpus.fully_annotated,
            stats: corpus_stats(corpus),
        }
    }
}

pub struct Store {
    conn: Mutex<Connection>,
    key_locks: Mutex<HashMap<CacheKey, Arc<tokio::sync::Mutex<()>>>>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn is_constraint(err: &rusqlite::Error) -> bool {
    matches!(err, rusqlite::Error::SqliteFailure(e, _) if e.code == ErrorCode::ConstraintViolation)
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "wal")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn: Mutex::new(conn), key_locks: Mutex::new(HashMap::new()) })
    }

    fn conn(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().expect("store connection lock poisoned")
    }

    pub fn experiment_exists(&self, id: &ExperimentId) -> Result<bool, StoreError> {
        let found = self
            .conn()
            .query_row("SELECT 1 FROM experiments WHERE id = ?1", [id.as_str()], |_| Ok(()))
            .optional()?;
        Ok(found.is_some())
    }

    /// Returns `false` when the id is already taken.
    pub fn insert_experiment(&self, record: &ExperimentRecord) -> Result<bool, StoreError> {
        let json = serde_json::to_string(record)?;
        let inserted = self.conn().execute(
            "INSERT INTO experiments (id, created_at, status, record) VALUES (?1, ?2, ?3, ?4)",
            params![record.experiment_id.as_str(), created_key(record), record.status.as_str(), json],
        );
        match inserted {
            Ok(_) => Ok(true),
            Err(err) if is_constraint(&err) => Ok(false),
            Err(err) => Err(err.into()),
        }
    }

    pub fn update_experiment(&self, record: &ExperimentRecord) -> Result<(), StoreError> {
        let json = serde_json::to_string(record)?;
        self.conn().execute(
            "UPDATE experiments SET status = ?2, record = ?3 WHERE id = ?1",
            params![record.experiment_id.as_str(), record.status.as_str(), json],
        )?;
        Ok(())
    }

    pub fn experiment(&self, id: &ExperimentId) -> Result<Option<ExperimentRecord>, StoreError> {
        let json: Option<String> = self
            .conn()
            .query_row("SELECT record FROM experiments WHERE id = ?1", [id.as_str()], |row| row.get(0))
            .optional()?;
        Ok(json.map(|j| serde_json::from_str(&j)).transpose()?)
    }

    /// Newest first, strictly after `after` = `(created_at, id)` when given.
    pub(crate) fn experiments_page(
        &self,
        after: Option<(&str, &str)>,
        limit: usize,
    ) -> Result<Vec<ExperimentRecord>, StoreError> {
        let conn = self.conn();
        let limit = i64::try_from(limit).unwrap_or(i64::MAX);
        let rows: Vec<String> = match after {
            Some((created, id)) => {
                let mut stmt = conn.prepare_cached(
                    "SELECT record FROM experiments WHERE created_at < ?1 OR (created_at = ?1 AND id < ?2)
                     ORDER BY created_at DESC, id DESC LIMIT ?3",
                )?;
                let rows = stmt.query_map(params![created, id, limit], |row| row.get(0))?;
                rows.collect::<Result<_, _>>()?
            }
            None => {
                let mut stmt =
                    conn.prepare_cached("SELECT record FROM experiments ORDER BY created_at DESC, id DESC LIMIT ?1")?;
                let rows = stmt.query_map(params![limit], |row| row.get(0))?;
                rows.collect::<Result<_, _>>()?
            }
        };
        rows.iter().map(|j| serde_json::from_str(j).map_err(StoreError::from)).collect()
    }

    pub fn cached_results(&self, key: &CacheKey) -> Result<Option<String>, StoreError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT results FROM geoparse_cache
                 WHERE corpus_hash = ?1 AND parser_id = ?2 AND parser_version = ?3",
                params![key.corpus_hash, key.parser_id, key.parser_version],
                |row| row.get(0),
            )
            .optional()?)
    }

    pub fn put_cached_results(&self, key: &CacheKey, results_json: &str) -> Result<(), StoreError> {
        self.conn().execute(
            "INSERT OR REPLACE INTO geoparse_cache (corpus_hash, parser_id, parser_version, results, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5)",
            params![key.corpus_hash, key.parser_id, key.parser_version, results_json, now()],
        )?;
        Ok(())
    }

    /// Drops every cached run of one geoparser; returns how many were removed.
    pub fn invalidate_cache(&self, parser_id: &str) -> Result<usize, StoreError> {
        Ok(self.conn().execute("DELETE FROM geoparse_cache WHERE parser_id = ?1", [parser_id])?)
    }

    /// Serializes cache fills for one key across tasks.
    pub(crate) fn key_lock(&self, key: &CacheKey) -> Arc<tokio::sync::Mutex<()>> {
        self.key_locks.lock().expect("cache lock map poisoned").entry(key.clone()).or_default().clone()
    }

    pub fn insert_corpus(&self, corpus: &Corpus) -> Result<(), StoreError> {
        let inserted = self.conn().execute(
            "INSERT INTO corpora (id, fully_annotated, xml, created_at) VALUES (?1, ?2, ?3, ?4)",
            params![corpus.id, corpus.fully_annotated, serialize_corpus(corpus), now()],
        );
        match inserted {
            Ok(_) => Ok(()),
            Err(err) if is_constraint(&err) => Err(StoreError::Conflict { kind: "corpus", id: corpus.id.clone() }),
            Err(err) => Err(err.into()),
        }
    }

    pub fn corpus(&self, id: &str) -> Result<Option<Corpus>, StoreError> {
        let row: Option<(bool, Vec<u8>)> = self
            .conn()
            .query_row("SELECT fully_annotated, xml FROM corpora WHERE id = ?1", [id], |row| {
                Ok((row.get(0)?, row.get(1)?))
            })
            .optional()?;
        row.map(|(fully_annotated, xml)| {
            parse_unified_corpus(&xml, fully_annotated)
                .map_err(|e| StoreError::Corrupt { id: id.to_owned(), message: e.to_string() })
        })
        .transpose()
    }

    pub fn corpora(&self) -> Result<Vec<Corpus>, StoreError> {
        let ids: Vec<String> = {
            let conn = self.conn();
            let mut stmt = conn.prepare_cached("SELECT id FROM corpora ORDER BY id")?;
            let rows = stmt.query_map([], |row| row.get(0))?;
            rows.collect::<Result<_, _>>()?
        };
        ids.iter().filter_map(|id| self.corpus(id).transpose()).collect()
    }

    pub fn insert_geoparser(&self, registration: &GeoparserRegistration) -> Result<(), StoreError> {
        let json = serde_json::to_string(registration)?;
        let inserted = self.conn().execute(
            "INSERT INTO geoparsers (id, registration, created_at) VALUES (?1, ?2, ?3)",
            params![registration.reference.id, json, now()],
        );
        match inserted {
            Ok(_) => Ok(()),
            Err(err) if is_constraint(&err) => {
                Err(StoreError::Conflict { kind: "geoparser", id: registration.reference.id.clone() })
            }
            Err(err) => Err(err.into()),
        }
    }

    pub fn geoparser(&self, id: &str) -> Result<Option<GeoparserRegistration>, StoreError> {
        let json: Option<String> = self
            .conn()
            .query_row("SELECT registration FROM geoparsers WHERE id = ?1", [id], |row| row.get(0))
            .optional()?;
        Ok(json.map(|j| serde_json::from_str(&j)).transpose()?)
    }

    pub fn geoparsers(&self) -> Result<Vec<GeoparserRegistration>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached("SELECT registration FROM geoparsers ORDER BY id")?;
        let rows = stmt.query_map([], |row| row.get::<_, String>(0))?;
        rows.map(|json| Ok(serde_json::from_str(&json?)?)).collect()
    }
}

pub(crate) fn created_key(record: &ExperimentRecord) -> String {
    record.created_at.to_rfc3339_opts(SecondsFormat::Micros, true)
}
