//! Turning resource and statement payloads into bytes.
//!
//! Fetchers and content codings are pluggable: each is a trait object
//! registered under a name (URI scheme or coding token).

mod coding;
mod fetch;

pub use coding::{CodingRegistry, CodingToken, ContentCoding, Deflate, Gzip};
pub use fetch::{FetchError, Fetcher, FetcherRegistry, HttpFetcher, LocalFetcher, NoFetch, RecordingFetcher, ReplayFetcher};

use std::collections::BTreeSet;

use base64::Engine as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::canonical_fragment;
use crate::model::{Component, Content, NodePath, Payload, Provision, Resource};
use crate::syntax::uri_scheme;

pub const DEFAULT_MAX_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaterializeError {
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("unsupported encoding {0:?}")]
    UnsupportedEncoding(String),
    #[error("{0} names a non-digital resource")]
    NonDigital(String),
    #[error("payload has both a ref and inline content")]
    ProvisionConflict,
    #[error("payload exceeds {0} bytes")]
    TooLarge(usize),
}

/// A materialization failure located at a resource.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {source}")]
pub struct ResourceError {
    pub path: NodePath,
    pub source: MaterializeError,
}

/// Materialization settings plus the fetcher to use for references.
pub struct Materializer<'a> {
    pub fetcher: &'a dyn Fetcher,
    pub codings: CodingRegistry,
    /// Schemes naming things that cannot be fetched.
    pub non_dereferenceable: BTreeSet<String>,
    pub max_bytes: usize,
}

impl<'a> Materializer<'a> {
    pub fn new(fetcher: &'a dyn Fetcher) -> Self {
        Materializer {
            fetcher,
            codings: CodingRegistry::default(),
            non_dereferenceable: BTreeSet::from(["urn".to_string()]),
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }

    pub fn materialize(&self, payload: &Payload) -> Result<Vec<u8>, MaterializeError> {
        let mut bytes = match payload.provision().map_err(|_| MaterializeError::ProvisionConflict)? {
            Provision::ByReference(uri) => {
                if uri_scheme(uri).is_some_and(|s| self.non_dereferenceable.contains(&s)) {
                    return Err(MaterializeError::NonDigital(uri.to_string()));
                }
                self.fetcher.fetch(uri)?
            }
            Provision::ByValueText(text) => match payload.encoding.as_deref() {
                None => text.as_bytes().to_vec(),
                Some("base64") => {
                    let compact: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
                    base64::engine::general_purpose::STANDARD
                        .decode(compact)
                        .map_err(|e| MaterializeError::Decode(format!("base64: {e}")))?
                }
                Some(other) => return Err(MaterializeError::UnsupportedEncoding(other.to_string())),
            },
            Provision::ByValueXml(nodes) => match payload.encoding.as_deref() {
                None => canonical_fragment(nodes),
                Some(other) => return Err(MaterializeError::UnsupportedEncoding(other.to_string())),
            },
        };
        if bytes.len() > self.max_bytes {
            return Err(MaterializeError::TooLarge(self.max_bytes));
        }
        for token in payload.content_encoding.iter().rev() {
            let coding = self.codings.get(token).ok_or_else(|| MaterializeError::UnsupportedEncoding(token.clone()))?;
            bytes = coding.decode(&bytes, self.max_bytes).map_err(MaterializeError::Decode)?;
        }
        Ok(bytes)
    }

    pub fn check_component_equivalence(&self, comp: &Component, path: &NodePath) -> Result<EquivalenceReport, ResourceError> {
        let mut digests = Vec::with_capacity(comp.resources.len());
        let mut first: Option<Vec<u8>> = None;
        let mut equivalent = true;
        for (i, r) in comp.resources.iter().enumerate() {
            let rpath = comp.resource_path(path, i);
            let bytes = self.materialize(&r.payload).map_err(|source| ResourceError { path: rpath.clone(), source })?;
            digests.push((rpath, sha256_hex(&bytes)));
            match &first {
                None => first = Some(bytes),
                Some(f) => equivalent &= *f == bytes,
            }
        }
        Ok(EquivalenceReport { equivalent, digests })
    }
}

pub fn materialize(payload: &Payload, fetcher: &dyn Fetcher) -> Result<Vec<u8>, MaterializeError> {
    Materializer::new(fetcher).materialize(payload)
}

/// Per-resource SHA-256 digests of a component. `equivalent` holds when all
/// materialized byte sequences are identical.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    #[serde(serialize_with = "ser_digests")]
    pub digests: Vec<(NodePath, String)>,
}

fn ser_digests<S: serde::Serializer>(d: &[(NodePath, String)], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(d.iter().map(|(p, h)| serde_json::json!({ "path": p.to_string(), "sha256": h })))
}

/// `path` is the component's own node path, used to label digests.
pub fn check_component_equivalence(comp: &Component, path: &NodePath, fetcher: &dyn Fetcher) -> Result<EquivalenceReport, ResourceError> {
    Materializer::new(fetcher).check_component_equivalence(comp, path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A by-value resource whose materialization is `bytes`. The optional
/// coding is applied before base64.
pub fn embed_by_value(bytes: &[u8], mime_type: &str, compress: Option<CodingToken>) -> Resource {
    let (data, content_encoding) = match compress {
        Some(token) => (token.coding().encode(bytes), vec![token.as_str().to_string()]),
        None => (bytes.to_vec(), Vec::new()),
    };
    let text = base64::engine::general_purpose::STANDARD.encode(data);
    Resource::new(Payload {
        mime_type: mime_type.to_string(),
        reference: None,
        content: if text.is_empty() { Content::Empty } else { Content::Text(text) },
        encoding: Some("base64".to_string()),
        content_encoding,
    })
}
