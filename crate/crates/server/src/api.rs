use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use geobench_core::corpus::{parse_unified_corpus, Corpus, CorpusEntry, Genre};
use geobench_core::experiment::{
    find_experiment, list_experiments, start_experiment, execute_experiment, ExperimentPlan,
};
use geobench_core::geoparse::{
    geoparse_gazpop, to_output_json, Geoparser, GeoparserKind, GeoparserRef, GeoparserRegistration, GAZPOP_ID,
};
use geobench_core::metrics::parse_metric_list;
use geobench_core::store::CorpusSummary;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::{ApiError, AppState};

const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;
const DEFAULT_PAGE: usize = 20;
const MAX_PAGE: usize = 100;

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/corpora", post(upload_corpus).get(list_corpora))
        .route("/api/geoparsers", post(register_geoparser).get(list_geoparsers))
        .route("/api/experiments", post(run_experiment).get(experiments_page))
        .route("/api/experiments/{id}", get(get_experiment))
        .route("/api/parse/gazpop", post(builtin_parse))
        .route("/api/{*rest}", any(unknown_route))
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.fallback(unknown_route),
    }
}

async fn unknown_route() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::invalid(e.body_text()))
}

fn valid_corpus_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

#[derive(Debug, Default, Deserialize)]
struct CorpusParams {
    id: Option<String>,
    name: Option<String>,
    genre: Option<String>,
    fully_annotated: Option<bool>,
}

/// Accepts raw XML with metadata in the query string, or a multipart form
/// with the XML in a `file` (or `corpus`) field and metadata as text fields.
async fn upload_corpus(
    State(state): State<AppState>,
    params: Result<Query<CorpusParams>, QueryRejection>,
    request: Request,
) -> Result<(StatusCode, Json<CorpusSummary>), ApiError> {
    let mut params = query(params)?;
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let xml = if is_multipart {
        let mut form = Multipart::from_request(request, &state).await.map_err(|e| ApiError::invalid(e.body_text()))?;
        let mut xml = None;
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::invalid(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_owned();
            let value = field.bytes().await.map_err(|e| ApiError::invalid(e.body_text()))?;
            let text = || String::from_utf8_lossy(&value).trim().to_owned();
            match name.as_str() {
                "file" | "corpus" => xml = Some(value.clone()),
                "id" => params.id = Some(text()),
                "name" => params.name = Some(text()),
                "genre" => params.genre = Some(text()),
                "fully_annotated" => {
                    let flag = text().parse().map_err(|_| ApiError::invalid("fully_annotated must be true or false"))?;
                    params.fully_annotated = Some(flag);
                }
                _ => {}
            }
        }
        xml.ok_or_else(|| ApiError::invalid("multipart upload has no \"file\" field"))?
    } else {
        Bytes::from_request(request, &state).await.map_err(|e| ApiError::invalid(e.body_text()))?
    };
    if xml.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::invalid("corpus body is empty"));
    }

    let mut corpus = parse_unified_corpus(&xml, params.fully_annotated.unwrap_or(true))?;
    if let Some(id) = params.id.filter(|s| !s.is_empty()) {
        if params.name.is_none() && corpus.name == corpus.id {
            corpus.name = id.clone();
        }
        corpus.id = id;
    }
    if let Some(name) = params.name.filter(|s| !s.is_empty()) {
        corpus.name = name;
    }
    if let Some(genre) = params.genre.filter(|s| !s.is_empty()) {
        corpus.genre = genre.parse::<Genre>().map_err(|e| ApiError::invalid(e.to_string()))?;
    }
    if !valid_corpus_id(&corpus.id) {
        return Err(ApiError::invalid(format!("corpus id {:?} must be 1-64 characters of [A-Za-z0-9_.-]", corpus.id)));
    }
    state.store.insert_corpus(&corpus)?;
    tracing::info!(corpus = %corpus.id, entries = corpus.entries.len(), "corpus uploaded");
    Ok((StatusCode::CREATED, Json(CorpusSummary::of(&corpus))))
}

async fn list_corpora(State(state): State<AppState>) -> Result<Json<Vec<CorpusSummary>>, ApiError> {
    Ok(Json(state.store.corpora()?.iter().map(CorpusSummary::of).collect()))
}

async fn register_geoparser(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<GeoparserRef>), ApiError> {
    let registration: GeoparserRegistration =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("invalid geoparser record: {e}")))?;
    let reference = &registration.reference;
    if reference.kind == GeoparserKind::BuiltinGazpop {
        return Err(ApiError::invalid("built-in geoparsers are provided by the server and cannot be registered"));
    }
    if reference.id == GAZPOP_ID {
        return Err(ApiError::new(StatusCode::CONFLICT, "conflict", format!("geoparser id {GAZPOP_ID:?} is reserved")));
    }
    registration.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    state.store.insert_geoparser(&registration)?;
    tracing::info!(geoparser = %reference.id, kind = ?reference.kind, "geoparser registered");
    Ok((StatusCode::CREATED, Json(registration.reference)))
}

async fn list_geoparsers(State(state): State<AppState>) -> Result<Json<Vec<GeoparserRef>>, ApiError> {
    let builtin = state.factory.gazpop().map(|g| g.reference().clone());
    let registered = state.store.geoparsers()?.into_iter().map(|r| r.reference);
    Ok(Json(builtin.into_iter().chain(registered).collect()))
}

/// Selections of one experiment. `metrics` takes metric names or `all`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(default)]
    pub corpora: Vec<String>,
    #[serde(default)]
    pub geoparsers: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

async fn run_experiment(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: RunRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(format!("invalid experiment request: {e}")))?;
    for (what, list) in [("corpus", &request.corpora), ("geoparser", &request.geoparsers), ("metric", &request.metrics)] {
        if list.is_empty() {
            return Err(ApiError::invalid(format!("select at least one {what}")));
        }
    }
    let metrics = parse_metric_list(&request.metrics.join(",")).map_err(|e| ApiError::invalid(e.to_string()))?;

    let mut corpora = Vec::with_capacity(request.corpora.len());
    for id in &request.corpora {
        let corpus = state.store.corpus(id)?.ok_or_else(|| {
            ApiError::not_found(format!("unknown corpus {id:?}")).with_detail(json!({ "corpus": id }))
        })?;
        corpora.push(Arc::new(corpus));
    }
    let corpus_refs: Vec<&Corpus> = corpora.iter().map(Arc::as_ref).collect();
    let mut geoparsers: Vec<Arc<dyn Geoparser>> = Vec::with_capacity(request.geoparsers.len());
    for id in &request.geoparsers {
        let unknown = || ApiError::not_found(format!("unknown geoparser {id:?}")).with_detail(json!({ "geoparser": id }));
        let geoparser: Arc<dyn Geoparser> = if id == GAZPOP_ID {
            state.factory.gazpop().ok_or_else(unknown)?.clone()
        } else {
            let registration = state.store.geoparser(id)?.ok_or_else(unknown)?;
            state.factory.build(&registration, &corpus_refs).map_err(|e| ApiError::invalid(e.to_string()))?
        };
        geoparsers.push(geoparser);
    }

    let plan = ExperimentPlan {
        corpora,
        geoparsers,
        metrics,
        parallelism: request.parallelism.unwrap_or(state.default_parallelism).max(1),
    };
    let record = start_experiment(&state.store, &plan)?;
    let experiment_id = record.experiment_id.clone();
    let store = state.store.clone();
    tokio::spawn(async move {
        let id = record.experiment_id.clone();
        match execute_experiment(&store, &plan, record).await {
            Ok(done) => tracing::info!(experiment = %id, status = done.status.as_str(), "experiment finished"),
            Err(err) => tracing::error!(experiment = %id, "experiment could not be archived: {err}"),
        }
    });
    let body = json!({ "experiment_id": experiment_id, "status": "running" });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn get_experiment(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    match find_experiment(&state.store, &id)? {
        Some(record) => Ok(Json(record).into_response()),
        None => Err(ApiError::not_found(format!("no experiment with id {id}"))),
    }
}

#[derive(Debug, Default, Deserialize)]
struct PageParams {
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn experiments_page(
    State(state): State<AppState>,
    params: Result<Query<PageParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let params = query(params)?;
    let limit = params.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let page = list_experiments(&state.store, params.cursor.as_deref().filter(|c| !c.is_empty()), limit)?;
    Ok(Json(page).into_response())
}

/// The built-in baseline behind the same contract as remote geoparsers.
async fn builtin_parse(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let gazpop = state.factory.gazpop().ok_or_else(|| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "gazetteer_unavailable", "no gazetteer is configured")
    })?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::invalid("text must be UTF-8"))?;
    if text.trim().is_empty() {
        return Err(ApiError::invalid("text is empty"));
    }
    let entry = CorpusEntry { entry_id: "request".into(), text: text.to_owned(), annotations: Vec::new() };
    let result = geoparse_gazpop(gazpop.gazetteer(), &entry);
    Ok(([(header::CONTENT_TYPE, "application/json")], to_output_json(&result.toponyms)).into_response())
}
