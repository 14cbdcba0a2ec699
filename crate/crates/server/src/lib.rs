//! HTTP API over the benchmarking core, plus static hosting of the web UI.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::Router;
use geobench_core::gazetteer::load_gazetteer;
use geobench_core::geoparse::{gazpop_version, GazpopGeoparser, GeoparserFactory};
use geobench_core::store::Store;
use serde::Deserialize;

mod api;
mod error;

pub use api::{router, RunRequest};
pub use error::ApiError;

/// Environment variable naming the config file; wins over any path given
/// on the command line.
pub const CONFIG_ENV: &str = "GEOBENCH_CONFIG";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct Config {
    pub listen_address: String,
    pub store_path: PathBuf,
    pub gazetteer_path: Option<PathBuf>,
    pub default_parallelism: usize,
    /// Directory holding the built web UI.
    pub static_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:8080".into(),
            store_path: "geobench.db".into(),
            gazetteer_path: None,
            default_parallelism: geobench_core::experiment::DEFAULT_PARALLELISM,
            static_dir: "static".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    ConfigParse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot read gazetteer {path}: {source}")]
    GazetteerRead { path: PathBuf, source: std::io::Error },
    #[error("cannot load gazetteer {path}: {message}")]
    Gazetteer { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] geobench_core::store::StoreError),
    #[error("cannot listen on {address}: {source}")]
    Bind { address: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

impl Config {
    /// Reads the file named by [`CONFIG_ENV`], else `path`, else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ServerError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = from_env.as_deref().or(path) else {
            return Ok(Self::default());
        };
        let raw = std::fs::read(path).map_err(|source| ServerError::ConfigRead { path: path.into(), source })?;
        let config: Self =
            serde_json::from_slice(&raw).map_err(|source| ServerError::ConfigParse { path: path.into(), source })?;
        if config.default_parallelism == 0 {
            return Err(ServerError::Config("default_parallelism must be at least 1".into()));
        }
        Ok(config)
    }
}

/// Shared by every request handler.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub factory: GeoparserFactory,
    pub default_parallelism: usize,
}

impl AppState {
    pub fn new(store: Arc<Store>, gazpop: Option<Arc<GazpopGeoparser>>, default_parallelism: usize) -> Self {
        Self { store, factory: GeoparserFactory::new(gazpop), default_parallelism: default_parallelism.max(1) }
    }

    pub fn from_config(config: &Config) -> Result<Self, ServerError> {
        let store = Arc::new(Store::open(&config.store_path)?);
        let gazpop = config.gazetteer_path.as_deref().map(load_gazpop).transpose()?;
        Ok(Self::new(store, gazpop.map(Arc::new), config.default_parallelism))
    }
}

pub fn load_gazpop(path: &Path) -> Result<GazpopGeoparser, ServerError> {
    let raw = std::fs::read(path).map_err(|source| ServerError::GazetteerRead { path: path.into(), source })?;
    let (gazetteer, report) =
        load_gazetteer(&raw).map_err(|e| ServerError::Gazetteer { path: path.into(), message: e.to_string() })?;
    for (line, reason) in &report.skipped {
        tracing::warn!("gazetteer line {line} skipped: {reason}");
    }
    Ok(GazpopGeoparser::new(Arc::new(gazetteer), gazpop_version(&raw)))
}

pub fn app(state: AppState, static_dir: &Path) -> Router {
    router(state, Some(static_dir))
}

pub async fn serve(config: Config) -> Result<(), ServerError> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.listen_address)
        .await
        .map_err(|source| ServerError::Bind { address: config.listen_address.clone(), source })?;
    let address: SocketAddr = listener.local_addr()?;
    tracing::info!(%address, store = %config.store_path.display(), "listening");
    axum::serve(listener, app(state, &config.static_dir)).await?;
    Ok(())
}
