use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Component as PathComponent, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::DEFAULT_MAX_BYTES;
use crate::syntax::uri_scheme;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("{0}: not found")]
    NotFound(String),
    #[error("{uri}: {message}")]
    Io { uri: String, message: String },
    #[error("{uri}: HTTP status {status}")]
    Status { uri: String, status: u16 },
    #[error("{uri}: larger than {limit} bytes")]
    TooLarge { uri: String, limit: usize },
    #[error("{0}: no fetcher for this URI")]
    Unsupported(String),
}

/// Read-only byte source for by-reference payloads.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError>;
}

impl<F: Fetcher + ?Sized> Fetcher for Arc<F> {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        (**self).fetch(uri)
    }
}

impl<F: Fetcher + ?Sized> Fetcher for &F {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        (**self).fetch(uri)
    }
}

/// Refuses every fetch.
pub struct NoFetch;

impl Fetcher for NoFetch {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        Err(FetchError::Unsupported(uri.to_string()))
    }
}

/// Maps `scheme://host/path` to `<root>/host/path`.
pub struct LocalFetcher {
    pub root: PathBuf,
    pub max_bytes: usize,
}

impl LocalFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalFetcher { root: root.into(), max_bytes: DEFAULT_MAX_BYTES }
    }

    /// On-disk location for `uri`, or `None` when the URI has no authority
    /// part or would escape the root.
    pub fn path_for(&self, uri: &str) -> Option<PathBuf> {
        let (_, rest) = uri.split_once("://")?;
        let rest = rest.split(['?', '#']).next().unwrap_or("");
        let rel = Path::new(rest);
        if rest.is_empty() || !rel.components().all(|c| matches!(c, PathComponent::Normal(_) | PathComponent::RootDir)) {
            return None;
        }
        Some(self.root.join(rest.trim_start_matches('/')))
    }
}

impl Fetcher for LocalFetcher {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        let path = self.path_for(uri).ok_or_else(|| FetchError::Unsupported(uri.to_string()))?;
        let file = std::fs::File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => FetchError::NotFound(uri.to_string()),
            _ => FetchError::Io { uri: uri.to_string(), message: e.to_string() },
        })?;
        read_limited(file, self.max_bytes, uri)
    }
}

fn read_limited(r: impl Read, limit: usize, uri: &str) -> Result<Vec<u8>, FetchError> {
    let mut out = Vec::new();
    r.take(limit as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| FetchError::Io { uri: uri.to_string(), message: e.to_string() })?;
    if out.len() > limit {
        return Err(FetchError::TooLarge { uri: uri.to_string(), limit });
    }
    Ok(out)
}

/// Plain HTTP GET with at most five redirects.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
    pub max_bytes: usize,
}

impl HttpFetcher {
    pub fn new(timeout: Duration, max_bytes: usize) -> Self {
        let client = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::limited(5))
            .timeout(timeout)
            .build()
            .expect("HTTP client configuration is static");
        HttpFetcher { client, max_bytes }
    }
}

impl Default for HttpFetcher {
    fn default() -> Self {
        HttpFetcher::new(Duration::from_secs(30), DEFAULT_MAX_BYTES)
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        let io = |e: reqwest::Error| FetchError::Io { uri: uri.to_string(), message: e.to_string() };
        let resp = self.client.get(uri).send().map_err(io)?;
        let status = resp.status();
        if status == reqwest::StatusCode::NOT_FOUND {
            return Err(FetchError::NotFound(uri.to_string()));
        }
        if !status.is_success() {
            return Err(FetchError::Status { uri: uri.to_string(), status: status.as_u16() });
        }
        if resp.content_length().is_some_and(|n| n > self.max_bytes as u64) {
            return Err(FetchError::TooLarge { uri: uri.to_string(), limit: self.max_bytes });
        }
        read_limited(resp, self.max_bytes, uri)
    }
}

/// Serves recorded bytes; unknown URIs are not found.
#[derive(Debug, Clone, Default)]
pub struct ReplayFetcher {
    pub entries: BTreeMap<String, Vec<u8>>,
}

impl ReplayFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, uri: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        self.entries.insert(uri.into(), bytes.into());
        self
    }

    pub fn insert(&mut self, uri: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.entries.insert(uri.into(), bytes.into());
    }
}

impl Fetcher for ReplayFetcher {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        self.entries.get(uri).cloned().ok_or_else(|| FetchError::NotFound(uri.to_string()))
    }
}

/// Wraps a fetcher and keeps every successful response for later replay.
pub struct RecordingFetcher<F> {
    inner: F,
    log: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl<F: Fetcher> RecordingFetcher<F> {
    pub fn new(inner: F) -> Self {
        RecordingFetcher { inner, log: Mutex::new(BTreeMap::new()) }
    }

    pub fn replay(&self) -> ReplayFetcher {
        ReplayFetcher { entries: self.log.lock().unwrap_or_else(|e| e.into_inner()).clone() }
    }
}

impl<F: Fetcher> Fetcher for RecordingFetcher<F> {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        let bytes = self.inner.fetch(uri)?;
        self.log.lock().unwrap_or_else(|e| e.into_inner()).insert(uri.to_string(), bytes.clone());
        Ok(bytes)
    }
}

/// Routes each URI to the fetcher registered for its scheme.
#[derive(Default, Clone)]
pub struct FetcherRegistry {
    by_scheme: BTreeMap<String, Arc<dyn Fetcher>>,
    fallback: Option<Arc<dyn Fetcher>>,
}

impl FetcherRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, scheme: &str, fetcher: Arc<dyn Fetcher>) -> &mut Self {
        self.by_scheme.insert(scheme.to_ascii_lowercase(), fetcher);
        self
    }

    /// Used for schemes without a registered fetcher.
    pub fn set_fallback(&mut self, fetcher: Arc<dyn Fetcher>) -> &mut Self {
        self.fallback = Some(fetcher);
        self
    }

    pub fn schemes(&self) -> impl Iterator<Item = &str> {
        self.by_scheme.keys().map(String::as_str)
    }
}

impl Fetcher for FetcherRegistry {
    fn fetch(&self, uri: &str) -> Result<Vec<u8>, FetchError> {
        let scheme = uri_scheme(uri).unwrap_or_default();
        match self.by_scheme.get(&scheme).or(self.fallback.as_ref()) {
            Some(f) => f.fetch(uri),
            None => Err(FetchError::Unsupported(uri.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_paths() {
        let f = LocalFetcher::new("/data");
        assert_eq!(f.path_for("http://purl.lanl.gov/tech/pdf/1.pdf").unwrap(), Path::new("/data/purl.lanl.gov/tech/pdf/1.pdf"));
        assert_eq!(f.path_for("http://h/a.txt?x=1#f").unwrap(), Path::new("/data/h/a.txt"));
        assert!(f.path_for("http://h/../../etc/passwd").is_none());
        assert!(f.path_for("info:doi/10.1/x").is_none());
    }

    #[test]
    fn local_fetch_and_limit() {
        let dir = std::env::temp_dir().join(format!("didlkit-fetch-{}", std::process::id()));
        std::fs::create_dir_all(dir.join("h")).unwrap();
        std::fs::write(dir.join("h/a"), b"abc").unwrap();
        let mut f = LocalFetcher::new(&dir);
        assert_eq!(f.fetch("http://h/a").unwrap(), b"abc");
        assert_eq!(f.fetch("http://h/b"), Err(FetchError::NotFound("http://h/b".into())));
        f.max_bytes = 2;
        assert!(matches!(f.fetch("http://h/a"), Err(FetchError::TooLarge { .. })));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn registry_routes_by_scheme() {
        let mut reg = FetcherRegistry::new();
        reg.register("http", Arc::new(ReplayFetcher::new().with("http://a", b"1".to_vec())));
        assert_eq!(reg.fetch("HTTP://a").unwrap_err(), FetchError::NotFound("HTTP://a".into()));
        assert_eq!(reg.fetch("http://a").unwrap(), b"1");
        assert!(matches!(reg.fetch("ftp://a"), Err(FetchError::Unsupported(_))));
    }

    #[test]
    fn recording_replays() {
        let rec = RecordingFetcher::new(ReplayFetcher::new().with("x:1", b"q".to_vec()));
        rec.fetch("x:1").unwrap();
        assert_eq!(rec.replay().fetch("x:1").unwrap(), b"q");
    }
}
