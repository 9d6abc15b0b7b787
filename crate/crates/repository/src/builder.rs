//! Turns a manifest into a package document.
//!
//! Layout: one Item carrying the content identifier first and the metadata
//! blocks after it, then one Component per datastream. A component holds an
//! admin descriptor (format and creation time) when either is known, an
//! integrity seal, and its resources: references first, then the by-value
//! copy.

use didlkit_core::codec::{DCTERMS_NS, DC_NS, DIADM_NS};
use didlkit_core::dii::identifier_descriptor;
use didlkit_core::integrity::{seal_component_at, IntegrityError, SigningKeyPair};
use didlkit_core::model::*;
use didlkit_core::resourceio::{embed_by_value, MaterializeError, Materializer, ResourceError};
use didlkit_core::syntax::format_timestamp;
use didlkit_core::xml::{QName, XmlElement, XmlNode};
use didlkit_core::Timestamp;
use uuid::Uuid;

use crate::clock::IdSource;
use crate::manifest::{AssetManifest, DatastreamSpec, EmbedPolicy, ManifestError, Source};

pub const STATEMENT_MIME: &str = "text/xml; charset=UTF-8";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Materialize(#[from] ResourceError),
    #[error("sealing datastream {index}: {source}")]
    Seal { index: usize, source: IntegrityError },
}

pub fn package_id(authority: &str, uuid: &Uuid) -> String {
    format!("info:{authority}/i/{uuid}")
}

pub fn xml_id(uuid: &Uuid) -> String {
    format!("uuid-{uuid}")
}

/// The UUID of a package id minted by [`package_id`].
pub fn package_uuid(package_id: &str) -> Option<Uuid> {
    let (_, tail) = package_id.strip_prefix("info:")?.rsplit_once("/i/")?;
    Uuid::parse_str(tail).ok()
}

pub struct BuildContext<'a> {
    pub authority: &'a str,
    pub materializer: &'a Materializer<'a>,
    pub ids: &'a dyn IdSource,
    pub key: Option<&'a SigningKeyPair>,
    pub now: Timestamp,
}

pub fn admin_descriptor(format_id: Option<&str>, created: Option<&Timestamp>) -> Descriptor {
    let mut admin = XmlElement::new(QName::new(DIADM_NS, "Admin")).with_hint("diadm");
    if let Some(f) = format_id {
        admin = admin.with_child(XmlElement::new(QName::new(DC_NS, "format")).with_hint("dc").with_text(f));
    }
    if let Some(t) = created {
        admin = admin.with_child(XmlElement::new(QName::new(DCTERMS_NS, "created")).with_hint("dcterms").with_text(format_timestamp(t)));
    }
    Descriptor::with_statement(Statement::new(Payload::xml(STATEMENT_MIME, vec![XmlNode::Element(admin)])))
}

fn by_value(spec: &DatastreamSpec, path: &NodePath, m: &Materializer<'_>) -> Result<Resource, ResourceError> {
    let mime = spec.mime_type.clone();
    let payload = match &spec.source {
        Source::Ref(uri) => {
            let bytes = m
                .materialize(&Payload::by_reference(mime.clone(), uri.clone()))
                .map_err(|source| ResourceError { path: path.clone(), source })?;
            return Ok(embed_by_value(&bytes, &mime, None));
        }
        Source::Base64(text) => {
            let compact: String = text.chars().filter(|c| !c.is_ascii_whitespace()).collect();
            Payload {
                mime_type: mime,
                encoding: Some("base64".into()),
                content: if compact.is_empty() { Content::Empty } else { Content::Text(compact) },
                ..Default::default()
            }
        }
        Source::Text(text) => Payload {
            mime_type: mime,
            content: if text.is_empty() { Content::Empty } else { Content::Text(text.clone()) },
            ..Default::default()
        },
        Source::Xml(text) => {
            let nodes = didlkit_core::codec::parse_fragment(text)
                .map_err(|e| ResourceError { path: path.clone(), source: MaterializeError::Decode(e.to_string()) })?;
            Payload::xml(mime, nodes)
        }
    };
    Ok(Resource::new(payload))
}

fn build_component(spec: &DatastreamSpec, index: usize, path: &NodePath, cx: &BuildContext<'_>) -> Result<Component, BuildError> {
    let mut comp = Component { xml_id: Some(xml_id(&cx.ids.next_uuid())), ..Default::default() };
    if spec.format_id.is_some() || spec.created.is_some() {
        comp.descriptors.push(admin_descriptor(spec.format_id.as_deref(), spec.created.as_ref()));
    }
    if let (Source::Ref(uri), EmbedPolicy::ByRef | EmbedPolicy::Both) = (&spec.source, spec.embed) {
        comp.resources.push(Resource::new(Payload::by_reference(spec.mime_type.clone(), uri.clone())));
    }
    for uri in &spec.extra_locations {
        comp.resources.push(Resource::new(Payload::by_reference(spec.mime_type.clone(), uri.clone())));
    }
    if spec.embed != EmbedPolicy::ByRef {
        let rpath = comp.resource_path(path, comp.resources.len());
        comp.resources.push(by_value(spec, &rpath, cx.materializer)?);
    }
    match seal_component_at(&comp, path, cx.materializer, cx.key, cx.now) {
        Ok(sealed) => Ok(sealed),
        // Nothing to digest behind a non-digital reference.
        Err(IntegrityError::Materialize(ResourceError { source: MaterializeError::NonDigital(_), .. })) => Ok(comp),
        Err(source) => Err(BuildError::Seal { index, source }),
    }
}

/// Builds the package document. Returns it with its package id.
pub fn build_package(manifest: &AssetManifest, cx: &BuildContext<'_>) -> Result<(String, DidlDocument), BuildError> {
    manifest.check()?;
    let package_uuid = cx.ids.next_uuid();
    let mut item = Item { xml_id: Some(xml_id(&cx.ids.next_uuid())), ..Default::default() };
    item.descriptors.push(identifier_descriptor(&manifest.content_id));
    for nodes in manifest.metadata_nodes()? {
        item.descriptors.push(Descriptor::with_statement(Statement::new(Payload::xml(STATEMENT_MIME, nodes))));
    }
    for (i, spec) in manifest.datastreams.iter().enumerate() {
        let path = NodePath(vec![0, item.descriptors.len() + i]);
        item.children.push(Entity::Component(build_component(spec, i, &path, cx)?));
    }
    let id = package_id(cx.authority, &package_uuid);
    let mut doc = DidlDocument::new(vec![Entity::Item(item)]);
    doc.document_id = Some(id.clone());
    doc.document_created = Some(cx.now);
    Ok((id, doc))
}
