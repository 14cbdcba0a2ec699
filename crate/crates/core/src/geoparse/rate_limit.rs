use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::time::Instant;

use super::GeoparserRef;

/// Token bucket. Callers reserve a token up front and sleep until it is
/// due, so concurrent callers are spaced out instead of racing.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    capacity: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    /// Goes negative while reservations are queued.
    tokens: f64,
    updated: Instant,
}

impl RateLimiter {
    /// `burst` tokens are available immediately; the bucket then refills at
    /// `per_second`.
    pub fn new(per_second: f64, burst: u32) -> Self {
        assert!(per_second > 0.0, "rate must be positive");
        let capacity = f64::from(burst.max(1));
        Self { per_second, capacity, state: Mutex::new(Bucket { tokens: capacity, updated: Instant::now() }) }
    }

    /// One request at a time, evenly spaced.
    pub fn per_hour(requests: u32) -> Self {
        Self::new(f64::from(requests) / 3600.0, 1)
    }

    pub fn interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.per_second)
    }

    /// Reserves a token and returns how long the caller must wait for it.
    pub fn reserve(&self) -> Duration {
        let mut bucket = self.state.lock().expect("rate limiter lock poisoned");
        let now = Instant::now();
        let refill = now.duration_since(bucket.updated).as_secs_f64() * self.per_second;
        bucket.tokens = (bucket.tokens + refill).min(self.capacity);
        bucket.updated = now;
        bucket.tokens -= 1.0;
        if bucket.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-bucket.tokens / self.per_second)
        }
    }

    pub async fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
    }
}

/// Hourly limit and its limiter, keyed by geoparser id.
type LimiterMap = HashMap<String, (u32, Arc<RateLimiter>)>;

/// One limiter per geoparser id, shared by every experiment in the process.
#[derive(Debug, Clone, Default)]
pub struct RateLimiters {
    limiters: Arc<Mutex<LimiterMap>>,
}

impl RateLimiters {
    pub fn new() -> Self {
        Self::default()
    }

    /// `None` for unlimited geoparsers. A changed rate replaces the limiter.
    pub fn for_ref(&self, reference: &GeoparserRef) -> Option<Arc<RateLimiter>> {
        let rate = reference.rate_limit?;
        let mut map = self.limiters.lock().expect("rate limiter registry poisoned");
        let slot = map
            .entry(reference.id.clone())
            .or_insert_with(|| (rate, Arc::new(RateLimiter::per_hour(rate))));
        if slot.0 != rate {
            *slot = (rate, Arc::new(RateLimiter::per_hour(rate)));
        }
        Some(slot.1.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoparse::GeoparserKind;

    #[tokio::test(start_paused = true)]
    async fn two_thousand_per_hour_spaces_requests() {
        let limiter = Arc::new(RateLimiter::per_hour(2000));
        assert_eq!(limiter.interval(), Duration::from_millis(1800));
        let start = Instant::now();
        let mut handles = Vec::new();
        for _ in 0..20 {
            let limiter = limiter.clone();
            handles.push(tokio::spawn(async move {
                limiter.acquire().await;
                Instant::now()
            }));
        }
        let mut times = Vec::new();
        for h in handles {
            times.push(h.await.unwrap());
        }
        times.sort();
        let total = times.last().unwrap().duration_since(start);
        let mean_spacing = total.as_secs_f64() / 19.0;
        assert!(mean_spacing >= 1.8 - 1e-6, "mean spacing {mean_spacing}");
        for pair in times.windows(2) {
            assert!(pair[1].duration_since(pair[0]) >= Duration::from_millis(1799));
        }
    }

    #[tokio::test(start_paused = true)]
    async fn burst_then_refill() {
        let limiter = RateLimiter::new(10.0, 3);
        for _ in 0..3 {
            assert_eq!(limiter.reserve(), Duration::ZERO);
        }
        let wait = limiter.reserve();
        assert!((wait.as_secs_f64() - 0.1).abs() < 1e-9);
        tokio::time::advance(Duration::from_secs(10)).await;
        assert_eq!(limiter.reserve(), Duration::ZERO);
    }

    #[test]
    fn registry_shares_per_id() {
        let registry = RateLimiters::new();
        let mut r = GeoparserRef {
            id: "yahoo".into(),
            display_name: "Yahoo".into(),
            kind: GeoparserKind::Rest,
            endpoint_url: Some("http://x".into()),
            version: "1".into(),
            rate_limit: Some(2000),
        };
        let a = registry.for_ref(&r).unwrap();
        let b = registry.for_ref(&r).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        r.rate_limit = Some(100);
        assert!(!Arc::ptr_eq(&a, &registry.for_ref(&r).unwrap()));
        r.rate_limit = None;
        assert!(registry.for_ref(&r).is_none());
    }
}
