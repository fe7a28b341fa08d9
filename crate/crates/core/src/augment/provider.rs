use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use url::Url;

use super::extract::{self, DEFAULT_RESULT_SELECTOR, DEFAULT_SUGGESTION_SELECTOR};
use super::{AugmentationCache, AugmentationResult};
use crate::error::{Error, Result};

pub trait SearchProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Queries the provider for `query`. Network failures that survive the
    /// retry budget come back as [`Error::Transient`]; markup that cannot be
    /// understood yields an empty result instead of an error.
    fn search(&self, query: &str) -> Result<AugmentationResult>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub query_param: String,
    pub suggestion_selector: String,
    pub result_selector: String,
    pub rate_limit_per_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub user_agent: String,
    /// Fetch the first result's landing page for its visible text.
    pub fetch_landing_page: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://html.duckduckgo.com/html/".into(),
            query_param: "q".into(),
            suggestion_selector: DEFAULT_SUGGESTION_SELECTOR.into(),
            result_selector: DEFAULT_RESULT_SELECTOR.into(),
            rate_limit_per_s: 1.0,
            retries: 3,
            backoff_ms: 500,
            timeout_s: 20,
            user_agent: concat!("assignee-harmonizer/", env!("CARGO_PKG_VERSION")).into(),
            fetch_landing_page: true,
        }
    }
}

/// Minimum spacing between requests to the same host.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        let interval = if rate > 0.0 && rate.is_finite() {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    /// Reserves the next slot for `host` and sleeps until it opens.
    pub fn acquire(&self, host: &str) {
        let wait = {
            let mut slots = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = slots.entry(host.to_string()).or_insert(now);
            let start = (*slot).max(now);
            *slot = start + self.interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_backoff: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_backoff * 2u32.saturating_pow(attempt)
    }
}

enum FetchError {
    Retryable(String),
    Fatal(String),
}

/// Adapter for providers that serve an html results page.
pub struct HtmlSearchProvider {
    config: ProviderConfig,
    endpoint: Url,
    id: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
    retry: RetryPolicy,
}

impl HtmlSearchProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        let endpoint = Url::parse(&config.endpoint)
            .map_err(|e| Error::Config(format!("provider.endpoint: {e}")))?;
        for css in [&config.suggestion_selector, &config.result_selector] {
            scraper::Selector::parse(css)
                .map_err(|e| Error::Config(format!("invalid selector `{css}`: {e}")))?;
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s.max(1))))
            .build()
            .into();
        let id = format!("html:{}", endpoint.host_str().unwrap_or("unknown"));
        Ok(Self {
            limiter: RateLimiter::per_second(config.rate_limit_per_s),
            retry: RetryPolicy {
                retries: config.retries,
                base_backoff: Duration::from_millis(config.backoff_ms),
            },
            endpoint,
            id,
            agent,
            config,
        })
    }

    fn get_once(&self, url: &Url) -> std::result::Result<String, FetchError> {
        self.limiter.acquire(url.host_str().unwrap_or(""));
        let response = self
            .agent
            .get(url.as_str())
            .header("User-Agent", &self.config.user_agent)
            .call();
        match response {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| FetchError::Retryable(e.to_string())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(FetchError::Retryable(format!("http status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(FetchError::Fatal(format!("http status {code}"))),
            Err(e) => Err(FetchError::Retryable(e.to_string())),
        }
    }

    fn get(&self, url: &Url) -> std::result::Result<String, String> {
        let mut attempt = 0;
        loop {
            match self.get_once(url) {
                Ok(body) => return Ok(body),
                Err(FetchError::Fatal(msg)) => return Err(msg),
                Err(FetchError::Retryable(msg)) if attempt >= self.retry.retries => return Err(msg),
                Err(FetchError::Retryable(_)) => {
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn query_url(&self, query: &str) -> Url {
        let mut url = self.endpoint.clone();
        url.query_pairs_mut().append_pair(&self.config.query_param, query);
        url
    }
}

impl SearchProvider for HtmlSearchProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn search(&self, query: &str) -> Result<AugmentationResult> {
        let page = self.get(&self.query_url(query)).map_err(|message| Error::Transient {
            query: query.to_string(),
            message,
        })?;
        let mut result = AugmentationResult::empty(query, &self.id);
        result.corrected_name =
            extract::extract_did_u_mean_with(&page, &self.config.suggestion_selector)?;
        result.first_url =
            extract::extract_first_result(&page, &self.config.result_selector, &self.endpoint)?;
        if self.config.fetch_landing_page {
            if let Some(landing) = result.first_url.as_deref().and_then(|u| Url::parse(u).ok()) {
                // an unreachable landing page leaves the text empty
                result.first_text = self
                    .get(&landing)
                    .ok()
                    .map(|html| extract::visible_text(&html))
                    .filter(|t| !t.is_empty());
            }
        }
        result.fetched_at = Utc::now();
        Ok(result.normalized())
    }
}

/// Cache hit: stored result, no traffic. Miss: query, store, return.
pub fn fetch_augmentation(
    name: &str,
    provider: &dyn SearchProvider,
    cache: &AugmentationCache,
) -> Result<AugmentationResult> {
    if let Some(hit) = cache.get(name) {
        return Ok(hit);
    }
    let result = provider.search(name)?;
    cache.insert(result.clone())?;
    Ok(result)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub cache_hits: usize,
    pub fetched: usize,
    /// Names left un-augmented, sorted.
    pub failed: Vec<String>,
    /// Names with no cache entry, in offline mode.
    pub missing: Vec<String>,
}

/// Augments every distinct name with up to `parallelism` concurrent fetches.
/// With `provider == None` the run is offline and only reports cache coverage.
pub fn augment_all(
    names: &[String],
    provider: Option<&dyn SearchProvider>,
    cache: &AugmentationCache,
    parallelism: usize,
) -> Result<AugmentReport> {
    let mut distinct: Vec<&String> = names.iter().collect();
    distinct.sort();
    distinct.dedup();

    let mut report = AugmentReport::default();
    let todo: Vec<&String> = distinct
        .into_iter()
        .filter(|n| {
            let hit = cache.contains(n);
            report.cache_hits += usize::from(hit);
            !hit
        })
        .collect();
    let Some(provider) = provider else {
        report.missing = todo.into_iter().cloned().collect();
        return Ok(report);
    };

    let next = AtomicUsize::new(0);
    let fetched = AtomicUsize::new(0);
    let failed = Mutex::new(Vec::new());
    let fatal = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1).min(todo.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(name) = todo.get(i) else { break };
                match fetch_augmentation(name, provider, cache) {
                    Ok(_) => {
                        fetched.fetch_add(1, Ordering::SeqCst);
                    }
                    Err(Error::Transient { .. }) => failed.lock().unwrap().push((*name).clone()),
                    Err(e) => {
                        fatal.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }
    report.fetched = fetched.into_inner();
    report.failed = failed.into_inner().unwrap();
    report.failed.sort();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    struct CountingProvider {
        calls: AtomicUsize,
    }

    impl SearchProvider for CountingProvider {
        fn id(&self) -> &str {
            "counting"
        }
        fn search(&self, query: &str) -> Result<AugmentationResult> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if query.starts_with("DOWN") {
                return Err(Error::Transient {
                    query: query.into(),
                    message: "unreachable".into(),
                });
            }
            Ok(AugmentationResult::empty(query, "counting"))
        }
    }

    #[test]
    fn cache_hit_makes_no_request() {
        let cache = AugmentationCache::in_memory();
        let mut stored = AugmentationResult::empty("NOKIA", "fixture");
        stored.corrected_name = Some("NOKIA OYJ".into());
        cache.insert(stored.clone()).unwrap();
        let provider = CountingProvider { calls: AtomicUsize::new(0) };
        let got = fetch_augmentation("NOKIA", &provider, &cache).unwrap();
        assert_eq!(got, stored);
        assert_eq!(provider.calls.load(Ordering::SeqCst), 0);

        fetch_augmentation("BASF", &provider, &cache).unwrap();
        fetch_augmentation("BASF", &provider, &cache).unwrap();
        assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn augment_all_marks_transient_failures() {
        let cache = AugmentationCache::in_memory();
        cache.insert(AugmentationResult::empty("A", "fixture")).unwrap();
        let provider = CountingProvider { calls: AtomicUsize::new(0) };
        let names: Vec<String> = ["A", "B", "C", "DOWN1", "B"].iter().map(|s| s.to_string()).collect();
        let report = augment_all(&names, Some(&provider), &cache, 3).unwrap();
        assert_eq!(report.cache_hits, 1);
        assert_eq!(report.fetched, 2);
        assert_eq!(report.failed, vec!["DOWN1".to_string()]);
        assert_eq!(cache.len(), 3);

        let offline = augment_all(&names, None, &AugmentationCache::in_memory(), 1).unwrap();
        assert_eq!(offline.missing.len(), 4);
    }

    #[test]
    fn rate_limiter_spaces_requests_per_host() {
        let limiter = RateLimiter::per_second(20.0);
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire("a.example");
        }
        limiter.acquire("b.example");
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(140), "{elapsed:?}");
        assert!(elapsed < Duration::from_millis(1000), "{elapsed:?}");
    }

    #[test]
    fn backoff_is_exponential() {
        let p = RetryPolicy { retries: 3, base_backoff: Duration::from_millis(100) };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(400));
    }

    /// Serves canned responses: the search page, a landing page, and a
    /// configurable number of initial 503s.
    fn serve(fail_first: usize) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let landing = format!("{base}/landing");
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut request_line = String::new();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                reader.read_line(&mut request_line).unwrap();
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                        break;
                    }
                }
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let (status, body) = if n < fail_first {
                    ("503 Service Unavailable", String::new())
                } else if request_line.contains("/landing") {
                    ("200 OK", "<html><body><h1>Innovation Labs</h1><script>x()</script><p>Lab tools</p></body></html>".to_string())
                } else {
                    (
                        "200 OK",
                        format!(
                            "<html><body><div id=\"did_u_mean\"><a>INNOVATION LABS, INC.</a></div>\
                             <a class=\"result__a\" href=\"{landing}\">x</a></body></html>"
                        ),
                    )
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: text/html\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        (base, hits)
    }

    fn local_config(base: &str) -> ProviderConfig {
        ProviderConfig {
            endpoint: format!("{base}/html/"),
            rate_limit_per_s: 1000.0,
            backoff_ms: 5,
            timeout_s: 5,
            ..ProviderConfig::default()
        }
    }

    #[test]
    fn html_provider_extracts_suggestion_url_and_text() {
        let (base, _) = serve(0);
        let provider = HtmlSearchProvider::new(local_config(&base)).unwrap();
        let r = provider.search("INNOVASION LABS, INC.").unwrap();
        assert_eq!(r.query_name, "INNOVASION LABS, INC.");
        assert_eq!(r.corrected_name.as_deref(), Some("INNOVATION LABS, INC."));
        assert_eq!(r.first_url.as_deref(), Some(format!("{base}/landing").as_str()));
        assert_eq!(r.first_text.as_deref(), Some("Innovation Labs Lab tools"));
        assert!(r.provider_id.starts_with("html:"));
    }

    #[test]
    fn html_provider_retries_then_succeeds() {
        let (base, hits) = serve(2);
        let provider = HtmlSearchProvider::new(local_config(&base)).unwrap();
        let r = provider.search("X").unwrap();
        assert!(r.corrected_name.is_some());
        assert_eq!(hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn html_provider_gives_up_after_budget() {
        let (base, _) = serve(usize::MAX);
        let mut cfg = local_config(&base);
        cfg.retries = 1;
        let provider = HtmlSearchProvider::new(cfg).unwrap();
        assert!(matches!(provider.search("X"), Err(Error::Transient { .. })));
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let cfg = ProviderConfig { endpoint: "nope".into(), ..ProviderConfig::default() };
        assert!(matches!(HtmlSearchProvider::new(cfg), Err(Error::Config(_))));
        let cfg = ProviderConfig { result_selector: "[[".into(), ..ProviderConfig::default() };
        assert!(matches!(HtmlSearchProvider::new(cfg), Err(Error::Config(_))));
    }
}
