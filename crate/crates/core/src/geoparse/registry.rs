use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    parse_replay_fixture, GazpopGeoparser, GeoparseError, Geoparser, GeoparserKind, GeoparserRef, RateLimiters,
    ReplayGeoparser, RestGeoparser, RetryPolicy,
};
use crate::corpus::Corpus;

/// A registered geoparser. Replay geoparsers carry their fixture inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoparserRegistration {
    #[serde(flatten)]
    pub reference: GeoparserRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Value>,
}

impl GeoparserRegistration {
    pub fn new(reference: GeoparserRef) -> Self {
        Self { reference, fixture: None }
    }

    /// Checks the reference and, for replay geoparsers, that a readable
    /// fixture is attached.
    pub fn validate(&self) -> Result<(), GeoparseError> {
        self.reference.validate().map_err(|e| GeoparseError::Config(e.to_string()))?;
        if self.reference.kind == GeoparserKind::Replay {
            let fixture = self.fixture.as_ref().ok_or_else(|| {
                GeoparseError::Config(format!("replay geoparser {:?} needs a fixture", self.reference.id))
            })?;
            parse_replay_fixture(&serde_json::to_vec(fixture).expect("JSON value serializes"))?;
        }
        Ok(())
    }
}

/// Turns registrations into runnable geoparsers that share one HTTP client
/// and one rate limiter per geoparser id.
#[derive(Clone)]
pub struct GeoparserFactory {
    gazpop: Option<Arc<GazpopGeoparser>>,
    limiters: RateLimiters,
    client: reqwest::Client,
    retry: RetryPolicy,
}

impl GeoparserFactory {
    pub fn new(gazpop: Option<Arc<GazpopGeoparser>>) -> Self {
        Self { gazpop, limiters: RateLimiters::new(), client: reqwest::Client::new(), retry: RetryPolicy::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn gazpop(&self) -> Option<&Arc<GazpopGeoparser>> {
        self.gazpop.as_ref()
    }

    /// `corpora` are the corpora the geoparser will run on; replay fixtures
    /// are checked against them.
    pub fn build(
        &self,
        registration: &GeoparserRegistration,
        corpora: &[&Corpus],
    ) -> Result<Arc<dyn Geoparser>, GeoparseError> {
        registration.validate()?;
        let reference = registration.reference.clone();
        match reference.kind {
            GeoparserKind::BuiltinGazpop => match &self.gazpop {
                Some(gazpop) => Ok(gazpop.clone()),
                None => Err(GeoparseError::Config("no gazetteer is loaded for the built-in geoparser".into())),
            },
            GeoparserKind::Rest => {
                let limiter = self.limiters.for_ref(&reference);
                Ok(Arc::new(RestGeoparser::new(reference, self.client.clone(), limiter, self.retry)?))
            }
            GeoparserKind::Replay => {
                let fixture = registration.fixture.as_ref().expect("validated above");
                let fixture = parse_replay_fixture(&serde_json::to_vec(fixture).expect("JSON value serializes"))?;
                Ok(Arc::new(ReplayGeoparser::new(reference, fixture, corpora)?))
            }
        }
    }
}
