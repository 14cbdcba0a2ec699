//! Adapter for geoparsers reachable over HTTP.
//!
//! The entry text is POSTed as `text/plain; charset=utf-8`; the response
//! must follow the output contract. Timeouts, connection failures and 5xx
//! answers are retried with exponential backoff; 4xx answers are final.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use reqwest::header::CONTENT_TYPE;
use tracing::{debug, warn};

use super::{
    check_result_spans, parse_output_json, GeoparseError, GeoparseResult, Geoparser, GeoparserKind, GeoparserRef,
    RateLimiter,
};
use crate::corpus::CorpusEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each further one.
    pub base_delay: Duration,
    pub request_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_secs(1), request_timeout: Duration::from_secs(60) }
    }
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.pow(retry)
    }
}

pub struct RestGeoparser {
    reference: GeoparserRef,
    endpoint: url::Url,
    client: reqwest::Client,
    limiter: Option<Arc<RateLimiter>>,
    retry: RetryPolicy,
}

impl RestGeoparser {
    pub fn new(
        reference: GeoparserRef,
        client: reqwest::Client,
        limiter: Option<Arc<RateLimiter>>,
        retry: RetryPolicy,
    ) -> Result<Self, GeoparseError> {
        if reference.kind != GeoparserKind::Rest {
            return Err(GeoparseError::Config(format!("geoparser {:?} is not a rest geoparser", reference.id)));
        }
        reference.validate().map_err(|e| GeoparseError::Config(e.to_string()))?;
        let endpoint = reference
            .endpoint_url
            .as_deref()
            .and_then(|u| url::Url::parse(u).ok())
            .ok_or_else(|| GeoparseError::Config(format!("geoparser {:?} has no usable endpoint", reference.id)))?;
        Ok(Self { reference, endpoint, client, limiter, retry })
    }
}

enum Attempt {
    Done(Result<GeoparseResult, GeoparseError>),
    Retry(String),
}

impl RestGeoparser {
    async fn attempt(&self, entry: &CorpusEntry, started: Instant) -> Attempt {
        if let Some(limiter) = &self.limiter {
            limiter.acquire().await;
        }
        let response = self
            .client
            .post(self.endpoint.clone())
            .header(CONTENT_TYPE, "text/plain; charset=utf-8")
            .timeout(self.retry.request_timeout)
            .body(entry.text.clone())
            .send()
            .await;
        let response = match response {
            Ok(response) => response,
            Err(err) => return Attempt::Retry(err.to_string()),
        };
        let status = response.status();
        let body = match response.bytes().await {
            Ok(body) => body,
            Err(err) => return Attempt::Retry(format!("reading response body: {err}")),
        };
        if status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Done(Err(GeoparseError::Rejected {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&body).chars().take(500).collect(),
            }));
        }
        Attempt::Done(self.finish(entry, &body, started))
    }

    fn finish(&self, entry: &CorpusEntry, body: &[u8], started: Instant) -> Result<GeoparseResult, GeoparseError> {
        let parsed = parse_output_json(body)?;
        for warning in &parsed.warnings {
            warn!(geoparser = %self.reference.id, entry = %entry.entry_id, "{warning}");
        }
        check_result_spans(&entry.text, &parsed.toponyms)?;
        Ok(GeoparseResult {
            entry_id: entry.entry_id.clone(),
            toponyms: parsed.toponyms,
            parser: self.reference.id.clone(),
            elapsed: started.elapsed(),
        })
    }
}

#[async_trait]
impl Geoparser for RestGeoparser {
    fn reference(&self) -> &GeoparserRef {
        &self.reference
    }

    async fn geoparse(&self, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError> {
        let started = Instant::now();
        let mut retry = 0;
        loop {
            match self.attempt(entry, started).await {
                Attempt::Done(result) => return result,
                Attempt::Retry(message) if retry < self.retry.max_retries => {
                    let delay = self.retry.delay_before_retry(retry);
                    debug!(geoparser = %self.reference.id, entry = %entry.entry_id, ?delay, "retrying: {message}");
                    tokio::time::sleep(delay).await;
                    retry += 1;
                }
                Attempt::Retry(message) => {
                    return Err(GeoparseError::Transport { attempts: retry + 1, message });
                }
            }
        }
    }
}

/// One-off call with the default retry policy and no shared limiter state.
pub async fn geoparse_remote(reference: &GeoparserRef, entry: &CorpusEntry) -> Result<GeoparseResult, GeoparseError> {
    let limiter = reference.rate_limit.map(|r| Arc::new(RateLimiter::per_hour(r)));
    RestGeoparser::new(reference.clone(), reqwest::Client::new(), limiter, RetryPolicy::default())?
        .geoparse(entry)
        .await
}
