//! Digital Item Identification: identifiers carried in descriptor statements.
//!
//! An identifier belongs to the nearest container, item, component or anchor
//! above its statement. Statements under an annotation describe the
//! annotation target and are not identifiers of anything.

use std::collections::BTreeMap;

use crate::codec::DII_NS;
use crate::model::*;
use crate::syntax::is_absolute_uri;
use crate::xml::{QName, XmlElement, XmlNode};

pub const IDENTIFIER_MIME: &str = "text/xml; charset=UTF-8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierKind {
    Identifier,
    RelatedIdentifier,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct IdentifierRecord {
    pub kind: IdentifierKind,
    /// Trimmed element text.
    pub value: String,
    /// `relationshipType` of a related identifier.
    pub relationship_type: Option<String>,
    #[serde(serialize_with = "ser_path")]
    pub host: NodePath,
    pub host_kind: EntityKind,
    #[serde(serialize_with = "ser_path")]
    pub statement: NodePath,
}

fn ser_path<S: serde::Serializer>(p: &NodePath, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(p)
}

/// A `dii:Identifier` with its host entity.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DiiIdentifier {
    pub value: String,
    #[serde(serialize_with = "ser_path")]
    pub host: NodePath,
    pub host_kind: EntityKind,
}

/// A `dii:RelatedIdentifier` with its host entity.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RelatedIdentifier {
    pub value: String,
    pub relationship_type: Option<String>,
    #[serde(serialize_with = "ser_path")]
    pub host: NodePath,
    pub host_kind: EntityKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiiError {
    #[error("no node at {0}")]
    NoSuchNode(NodePath),
    #[error("bad target: a {0} cannot carry identifiers")]
    BadTarget(EntityKind),
    #[error("invalid URI {0:?}")]
    InvalidUri(String),
    #[error("malformed identifier at {path}: {value:?} is not an absolute URI")]
    MalformedIdentifier { path: NodePath, value: String },
}

/// Top-level DII elements of one statement.
fn dii_elements(s: &Statement) -> impl Iterator<Item = (IdentifierKind, &XmlElement)> {
    s.payload.xml_elements().filter_map(|e| {
        if e.name.is(DII_NS, "Identifier") {
            Some((IdentifierKind::Identifier, e))
        } else if e.name.is(DII_NS, "RelatedIdentifier") {
            Some((IdentifierKind::RelatedIdentifier, e))
        } else {
            None
        }
    })
}

fn collect_values(descriptors: &[Descriptor], out: &mut Vec<String>) {
    for d in descriptors {
        collect_values(&d.nested_descriptors, out);
        for s in &d.statements {
            for (kind, e) in dii_elements(s) {
                if kind == IdentifierKind::Identifier {
                    out.push(e.text().trim().to_string());
                }
            }
        }
    }
}

/// `dii:Identifier` values in a descriptor list, nested descriptors first
/// within each descriptor.
pub fn identifier_values(descriptors: &[Descriptor]) -> Vec<String> {
    let mut out = Vec::new();
    collect_values(descriptors, &mut out);
    out
}

pub fn is_host(kind: EntityKind) -> bool {
    matches!(kind, EntityKind::Container | EntityKind::Item | EntityKind::Component | EntityKind::Anchor)
}

/// Every DII identification element in the document, in document order,
/// without URI checks.
pub fn identifier_records(doc: &DidlDocument) -> Vec<IdentifierRecord> {
    let walk = doc.walk();
    let kinds: BTreeMap<&NodePath, EntityKind> = walk.iter().map(|(p, n)| (p, n.kind())).collect();
    let mut out = Vec::new();
    for (path, node) in &walk {
        let NodeRef::Statement(s) = node else { continue };
        let ancestors: Vec<NodePath> = std::iter::successors(path.parent(), NodePath::parent).collect();
        if ancestors.iter().any(|p| kinds.get(p) == Some(&EntityKind::Annotation)) {
            continue;
        }
        let Some(host) = ancestors.into_iter().find(|p| kinds.get(p).is_some_and(|k| is_host(*k))) else { continue };
        for (kind, e) in dii_elements(s) {
            out.push(IdentifierRecord {
                kind,
                value: e.text().trim().to_string(),
                relationship_type: e.attr(None, "relationshipType").map(|v| v.trim().to_string()),
                host_kind: kinds[&host],
                host: host.clone(),
                statement: path.clone(),
            });
        }
    }
    out
}

fn check_uri(r: &IdentifierRecord, v: &str) -> Result<(), DiiError> {
    if is_absolute_uri(v) {
        Ok(())
    } else {
        Err(DiiError::MalformedIdentifier { path: r.statement.clone(), value: v.to_string() })
    }
}

pub fn extract_identifiers(doc: &DidlDocument) -> Result<Vec<DiiIdentifier>, DiiError> {
    identifier_records(doc)
        .into_iter()
        .filter(|r| r.kind == IdentifierKind::Identifier)
        .map(|r| {
            check_uri(&r, &r.value)?;
            Ok(DiiIdentifier { value: r.value, host: r.host, host_kind: r.host_kind })
        })
        .collect()
}

pub fn extract_related(doc: &DidlDocument) -> Result<Vec<RelatedIdentifier>, DiiError> {
    identifier_records(doc)
        .into_iter()
        .filter(|r| r.kind == IdentifierKind::RelatedIdentifier)
        .map(|r| {
            check_uri(&r, &r.value)?;
            if let Some(t) = &r.relationship_type {
                check_uri(&r, t)?;
            }
            Ok(RelatedIdentifier { value: r.value, relationship_type: r.relationship_type, host: r.host, host_kind: r.host_kind })
        })
        .collect()
}

/// Nodes carrying `value` as a `dii:Identifier`.
pub fn find_by_identifier(doc: &DidlDocument, value: &str) -> Vec<NodePath> {
    identifier_records(doc)
        .into_iter()
        .filter(|r| r.kind == IdentifierKind::Identifier && r.value == value)
        .map(|r| r.host)
        .collect()
}

pub fn identifier_element(value: &str) -> XmlElement {
    XmlElement::new(QName::new(DII_NS, "Identifier")).with_hint("dii").with_text(value)
}

/// A descriptor holding a single `dii:Identifier` statement.
pub fn identifier_descriptor(value: &str) -> Descriptor {
    Descriptor::with_statement(Statement::new(Payload::xml(
        IDENTIFIER_MIME,
        vec![XmlNode::Element(identifier_element(value))],
    )))
}

/// Copy of `doc` with an identifier descriptor prepended to the node at
/// `path`.
pub fn attach_identifier(doc: &DidlDocument, path: &NodePath, uri: &str) -> Result<DidlDocument, DiiError> {
    let mut out = doc.clone();
    attach_identifier_in_place(&mut out, path, uri)?;
    Ok(out)
}

pub fn attach_identifier_in_place(doc: &mut DidlDocument, path: &NodePath, uri: &str) -> Result<(), DiiError> {
    let kind = doc.node_at(path).ok_or_else(|| DiiError::NoSuchNode(path.clone()))?.kind();
    if !is_host(kind) {
        return Err(DiiError::BadTarget(kind));
    }
    if !is_absolute_uri(uri) {
        return Err(DiiError::InvalidUri(uri.to_string()));
    }
    let list = doc.descriptors_mut(path).ok_or_else(|| DiiError::NoSuchNode(path.clone()))?;
    list.insert(0, identifier_descriptor(uri));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item_with(descriptors: Vec<Descriptor>) -> DidlDocument {
        DidlDocument::new(vec![Entity::Item(Item { descriptors, ..Default::default() })])
    }

    #[test]
    fn values_are_trimmed() {
        let doc = item_with(vec![identifier_descriptor("  info:doi/10.1/x \n")]);
        let recs = identifier_records(&doc);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].statement.to_string(), "/0/0/0");
        let ids = extract_identifiers(&doc).unwrap();
        assert_eq!(ids, vec![DiiIdentifier { value: "info:doi/10.1/x".into(), host: NodePath(vec![0]), host_kind: EntityKind::Item }]);
    }

    #[test]
    fn annotation_statements_are_not_identifiers() {
        let ann = Annotation { target: "#x".into(), descriptors: vec![identifier_descriptor("info:a/b")], ..Default::default() };
        let doc = DidlDocument::new(vec![Entity::Item(Item { annotations: vec![ann], ..Default::default() })]);
        assert!(identifier_records(&doc).is_empty());
    }

    #[test]
    fn attach_prepends_and_leaves_input_alone() {
        let orig = item_with(vec![identifier_descriptor("info:a/2")]);
        let doc = attach_identifier(&orig, &NodePath(vec![0]), "info:a/1").unwrap();
        assert_eq!(identifier_records(&orig).len(), 1);
        let values: Vec<String> = extract_identifiers(&doc).unwrap().into_iter().map(|r| r.value).collect();
        assert_eq!(values, ["info:a/1", "info:a/2"]);
        assert_eq!(find_by_identifier(&doc, "info:a/2"), vec![NodePath(vec![0])]);
        assert_eq!(
            attach_identifier(&doc, &NodePath(vec![0, 0, 0]), "info:a/3"),
            Err(DiiError::BadTarget(EntityKind::Statement))
        );
        assert_eq!(attach_identifier(&doc, &NodePath(vec![0]), "no uri"), Err(DiiError::InvalidUri("no uri".into())));
    }

    #[test]
    fn related_identifiers_carry_relationship() {
        let rel = XmlElement::new(QName::new(DII_NS, "RelatedIdentifier"))
            .with_attr(QName::local("relationshipType"), "info:rdd/IsAbstractionOf")
            .with_text("info:x/1");
        let d = Descriptor::with_statement(Statement::new(Payload::xml(IDENTIFIER_MIME, vec![XmlNode::Element(rel)])));
        let doc = item_with(vec![d.clone()]);
        let rel = extract_related(&doc).unwrap();
        assert_eq!(rel[0].relationship_type.as_deref(), Some("info:rdd/IsAbstractionOf"));
        assert!(extract_identifiers(&doc).unwrap().is_empty());
        assert!(identifier_values(&[d]).is_empty());
    }

    #[test]
    fn non_uri_identifier_is_malformed() {
        let doc = item_with(vec![identifier_descriptor("not a uri")]);
        assert!(matches!(extract_identifiers(&doc), Err(DiiError::MalformedIdentifier { .. })));
    }
}
