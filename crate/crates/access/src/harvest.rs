//! A minimal OAI-PMH harvester for the `didl` format. It follows
//! resumption tokens to the end of a list and lifts each embedded document
//! out of the envelope byte for byte.

use std::time::Duration;

use didlkit_core::syntax::{format_timestamp, parse_timestamp};
use didlkit_core::Timestamp;

use crate::oai::{METADATA_PREFIX, OAI_NS};
use crate::AccessService;

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("response is not OAI-PMH XML: {0}")]
    Malformed(String),
    #[error("OAI error {code}: {message}")]
    Oai { code: String, message: String },
}

/// Sends one OAI-PMH request and returns the response body.
pub trait OaiTransport {
    fn request(&self, pairs: &[(&str, &str)]) -> Result<Vec<u8>, HarvestError>;
}

impl OaiTransport for AccessService {
    fn request(&self, pairs: &[(&str, &str)]) -> Result<Vec<u8>, HarvestError> {
        Ok(self.oai(pairs))
    }
}

/// Blocking HTTP transport. Must not be driven from inside a tokio runtime.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    oai_url: String,
}

impl HttpTransport {
    /// `base_url` is the service root; `/oai` is appended.
    pub fn new(base_url: &str, timeout: Duration) -> Result<HttpTransport, HarvestError> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| HarvestError::Transport(e.to_string()))?;
        Ok(HttpTransport { client, oai_url: format!("{}/oai", base_url.trim_end_matches('/')) })
    }
}

impl OaiTransport for HttpTransport {
    fn request(&self, pairs: &[(&str, &str)]) -> Result<Vec<u8>, HarvestError> {
        let url = url::Url::parse_with_params(&self.oai_url, pairs).map_err(|e| HarvestError::Transport(e.to_string()))?;
        let resp = self.client.get(url).send().and_then(|r| r.error_for_status()).map_err(|e| HarvestError::Transport(e.to_string()))?;
        Ok(resp.bytes().map_err(|e| HarvestError::Transport(e.to_string()))?.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestedRecord {
    pub identifier: String,
    pub datestamp: Timestamp,
    /// The embedded document exactly as it appears inside `<metadata>`.
    /// Empty for ListIdentifiers.
    pub document: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Harvest {
    pub records: Vec<HarvestedRecord>,
    /// Non-empty resumption tokens followed.
    pub tokens: usize,
    /// `resumptionToken` elements seen, counting the empty one that closes
    /// a resumed list.
    pub token_elements: usize,
    pub requests: usize,
}

struct Parsed {
    records: Vec<HarvestedRecord>,
    /// Outer option: element present. Inner: non-empty value.
    token: Option<Option<String>>,
}

fn oai<'a, 'i>(n: &roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    n.children().find(|c| c.has_tag_name((OAI_NS, name)))
}

fn parse_response(body: &[u8], with_metadata: bool) -> Result<Parsed, HarvestError> {
    let text = std::str::from_utf8(body).map_err(|e| HarvestError::Malformed(e.to_string()))?;
    let xml = roxmltree::Document::parse(text).map_err(|e| HarvestError::Malformed(e.to_string()))?;
    let root = xml.root_element();
    if !root.has_tag_name((OAI_NS, "OAI-PMH")) {
        return Err(HarvestError::Malformed("root is not OAI-PMH".into()));
    }
    if let Some(e) = oai(&root, "error") {
        return Err(HarvestError::Oai { code: e.attribute("code").unwrap_or_default().into(), message: e.text().unwrap_or_default().into() });
    }
    let verb = root
        .children()
        .filter(|c| c.is_element() && c.tag_name().namespace() == Some(OAI_NS))
        .find(|c| !matches!(c.tag_name().name(), "responseDate" | "request"))
        .ok_or_else(|| HarvestError::Malformed("no verb element".into()))?;
    let mut records = Vec::new();
    for n in verb.children().filter(|c| c.is_element()) {
        let header = match n.tag_name().name() {
            "record" => oai(&n, "header"),
            "header" => Some(n),
            _ => continue,
        }
        .ok_or_else(|| HarvestError::Malformed("record without header".into()))?;
        let field = |name: &str| oai(&header, name).and_then(|e| e.text()).map(str::trim).unwrap_or_default().to_string();
        let identifier = field("identifier");
        let stamp = field("datestamp");
        let datestamp = parse_timestamp(&stamp).ok_or_else(|| HarvestError::Malformed(format!("datestamp {stamp:?}")))?;
        let document = if with_metadata {
            let m = oai(&n, "metadata").ok_or_else(|| HarvestError::Malformed(format!("{identifier} has no metadata")))?;
            let doc = m.children().find(|c| c.is_element()).ok_or_else(|| HarvestError::Malformed(format!("{identifier} has empty metadata")))?;
            text[doc.range()].as_bytes().to_vec()
        } else {
            Vec::new()
        };
        records.push(HarvestedRecord { identifier, datestamp, document });
    }
    let token = oai(&verb, "resumptionToken").map(|t| t.text().map(str::trim).filter(|t| !t.is_empty()).map(String::from));
    Ok(Parsed { records, token })
}

/// Runs ListRecords (or ListIdentifiers) to completion. An empty window is
/// an empty harvest, not an error.
pub fn harvest(transport: &dyn OaiTransport, from: Option<Timestamp>, until: Option<Timestamp>, with_metadata: bool) -> Result<Harvest, HarvestError> {
    let verb = if with_metadata { "ListRecords" } else { "ListIdentifiers" };
    let (from, until) = (from.map(|t| format_timestamp(&t)), until.map(|t| format_timestamp(&t)));
    let mut out = Harvest::default();
    let mut token: Option<String> = None;
    loop {
        let mut pairs: Vec<(&str, &str)> = vec![("verb", verb)];
        match &token {
            Some(t) => pairs.push(("resumptionToken", t)),
            None => {
                pairs.push(("metadataPrefix", METADATA_PREFIX));
                if let Some(f) = &from {
                    pairs.push(("from", f));
                }
                if let Some(u) = &until {
                    pairs.push(("until", u));
                }
            }
        }
        let body = transport.request(&pairs)?;
        out.requests += 1;
        let parsed = match parse_response(&body, with_metadata) {
            Err(HarvestError::Oai { code, .. }) if code == "noRecordsMatch" && token.is_none() => return Ok(out),
            other => other?,
        };
        out.records.extend(parsed.records);
        out.token_elements += usize::from(parsed.token.is_some());
        match parsed.token.flatten() {
            Some(t) => {
                out.tokens += 1;
                token = Some(t);
            }
            None => return Ok(out),
        }
    }
}

/// GetRecord for one package.
pub fn get_record(transport: &dyn OaiTransport, package_id: &str) -> Result<HarvestedRecord, HarvestError> {
    let body = transport.request(&[("verb", "GetRecord"), ("metadataPrefix", METADATA_PREFIX), ("identifier", package_id)])?;
    parse_response(&body, true)?.records.pop().ok_or_else(|| HarvestError::Malformed("GetRecord returned no record".into()))
}
