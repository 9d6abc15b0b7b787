//! Asset manifests: the JSON input describing what goes into a package.
//!
//! ```json
//! {
//!   "content_id": "info:doi/10.1045/july95-arms",
//!   "metadata": [{ "label": "dc", "xml": "<oai_dc:dc xmlns:oai_dc=\"...\">...</oai_dc:dc>" }],
//!   "datastreams": [{
//!     "mime_type": "application/pdf",
//!     "source": { "ref": "http://purl.lanl.gov/tech/pdf/015997845.pdf" },
//!     "created": "2003-10-29T18:07:18Z",
//!     "format_id": "info:lanl-repo/fmt/5",
//!     "extra_locations": [],
//!     "embed": "both"
//!   }]
//! }
//! ```
//!
//! `source` is one of `{"ref": uri}`, `{"base64": text}`, `{"text": text}`
//! or `{"xml": text}`. `embed` is `by-ref` (default), `by-value` or `both`.

use didlkit_core::codec::{parse_fragment, CodecError};
use didlkit_core::syntax::{is_absolute_uri, parse_media_type};
use didlkit_core::xml::XmlNode;
use didlkit_core::Timestamp;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetManifest {
    pub content_id: String,
    #[serde(default)]
    pub metadata: Vec<MetadataBlock>,
    #[serde(default)]
    pub datastreams: Vec<DatastreamSpec>,
}

/// A descriptive record. The label is for the submitter's benefit only and
/// is not written into the package.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataBlock {
    #[serde(default)]
    pub label: String,
    pub xml: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatastreamSpec {
    pub mime_type: String,
    pub source: Source,
    #[serde(default, with = "opt_timestamp", skip_serializing_if = "Option::is_none")]
    pub created: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_locations: Vec<String>,
    #[serde(default)]
    pub embed: EmbedPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Ref(String),
    Base64(String),
    Text(String),
    Xml(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedPolicy {
    #[default]
    ByRef,
    ByValue,
    Both,
}

mod opt_timestamp {
    use didlkit_core::syntax::{format_timestamp, parse_timestamp};
    use didlkit_core::Timestamp;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&format_timestamp(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(s) => parse_timestamp(&s).map(Some).ok_or_else(|| D::Error::custom(format!("invalid timestamp {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(String),
    #[error("content_id {0:?} is not an absolute URI")]
    ContentId(String),
    #[error("manifest has no datastreams and no metadata")]
    Empty,
    #[error("metadata block {index} ({label:?}): {source}")]
    Metadata { index: usize, label: String, source: CodecError },
    #[error("datastream {index}: {message}")]
    Datastream { index: usize, message: String },
}

impl AssetManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        serde_json::from_str(text).map_err(|e| ManifestError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Parsed metadata blocks, in manifest order.
    pub fn metadata_nodes(&self) -> Result<Vec<Vec<XmlNode>>, ManifestError> {
        self.metadata
            .iter()
            .enumerate()
            .map(|(index, b)| parse_fragment(&b.xml).map_err(|source| ManifestError::Metadata { index, label: b.label.clone(), source }))
            .collect()
    }

    pub fn check(&self) -> Result<(), ManifestError> {
        if !is_absolute_uri(&self.content_id) {
            return Err(ManifestError::ContentId(self.content_id.clone()));
        }
        if self.datastreams.is_empty() && self.metadata.is_empty() {
            return Err(ManifestError::Empty);
        }
        self.metadata_nodes()?;
        for (index, d) in self.datastreams.iter().enumerate() {
            d.check().map_err(|message| ManifestError::Datastream { index, message })?;
        }
        Ok(())
    }
}

impl DatastreamSpec {
    fn check(&self) -> Result<(), String> {
        if parse_media_type(&self.mime_type).is_none() {
            return Err(format!("mime_type {:?} is not a media type", self.mime_type));
        }
        if let Some(f) = &self.format_id {
            if !is_absolute_uri(f) {
                return Err(format!("format_id {f:?} is not an absolute URI"));
            }
        }
        for uri in self.extra_locations.iter().chain(match &self.source {
            Source::Ref(u) => Some(u),
            _ => None,
        }) {
            if !is_absolute_uri(uri) {
                return Err(format!("location {uri:?} is not an absolute URI"));
            }
        }
        if self.embed != EmbedPolicy::ByValue && !matches!(self.source, Source::Ref(_)) {
            return Err("by-ref and both policies need a ref source".into());
        }
        if let Source::Xml(x) = &self.source {
            parse_fragment(x).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// A small self-contained manifest, distinct for each `n`: one Dublin Core
/// block and one inline text datastream. Used for load tests and demos.
pub fn synthetic(n: u64) -> AssetManifest {
    AssetManifest {
        content_id: format!("info:didlkit-synth/asset/{n}"),
        metadata: vec![MetadataBlock {
            label: "dc".into(),
            xml: format!(
                r#"<oai_dc:dc xmlns:oai_dc="http://www.openarchives.org/OAI/2.0/oai_dc/" xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:title>Synthetic asset {n}</dc:title></oai_dc:dc>"#
            ),
        }],
        datastreams: vec![DatastreamSpec {
            mime_type: "text/plain; charset=UTF-8".into(),
            source: Source::Text(format!("Body of synthetic asset {n}.")),
            created: None,
            format_id: Some("info:didlkit-synth/fmt/text".into()),
            extra_locations: vec![],
            embed: EmbedPolicy::ByValue,
        }],
    }
}
