use std::collections::BTreeSet;

use base64::Engine as _;

use super::{Finding, Mode, Rule, RuleContext, RuleInfo, Severity};
use crate::codec::DII_NS;
use crate::model::*;
use crate::resourceio::{CodingRegistry, MaterializeError};
use crate::syntax::{is_absolute_uri, parse_media_type};

/// Every built-in rule, in id order.
pub fn catalog() -> Vec<Box<dyn Rule>> {
    vec![
        Box::new(SingleProvision),
        Box::new(Base64Encoding),
        Box::new(MimeTypePresent),
        Box::new(ComponentResources),
        Box::new(Containment),
        Box::new(UniqueIds),
        Box::new(AnnotationTarget),
        Box::new(IdentifierUri),
        Box::new(DocumentIdUri),
        Box::new(BitEquivalence),
        Box::new(ContentEncodingTokens),
        Box::new(EmptyItem),
    ]
}

fn info(id: &'static str, severity: Severity, mode: Mode, description: &'static str) -> RuleInfo {
    RuleInfo { id, severity, mode, description }
}

fn payloads<'a>(cx: &'a RuleContext<'_>) -> impl Iterator<Item = (&'a NodePath, &'a Payload)> {
    cx.nodes.iter().filter_map(|(p, n)| match n {
        NodeRef::Resource(r) => Some((p, &r.payload)),
        NodeRef::Statement(s) => Some((p, &s.payload)),
        _ => None,
    })
}

fn element_name(kind: EntityKind) -> &'static str {
    match kind {
        EntityKind::Resource => "Resource",
        _ => "Statement",
    }
}

fn payload_kind(cx: &RuleContext<'_>, path: &NodePath) -> &'static str {
    cx.doc.node_at(path).map(|n| element_name(n.kind())).unwrap_or("payload")
}

struct SingleProvision;

impl Rule for SingleProvision {
    fn info(&self) -> RuleInfo {
        info("R1", Severity::Error, Mode::Shallow, "Resource/Statement has exactly one provision (ref or inline content)")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, p) in payloads(cx) {
            if p.provision().is_err() {
                out.push(self.finding(path, format!("{} has both a ref and inline content", payload_kind(cx, path))));
            }
        }
    }
}

struct Base64Encoding;

impl Rule for Base64Encoding {
    fn info(&self) -> RuleInfo {
        info("R2", Severity::Error, Mode::Shallow, "encoding is exactly \"base64\" on inline text and the text decodes")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, p) in payloads(cx) {
            let Some(enc) = p.encoding.as_deref() else { continue };
            let Ok(provision) = p.provision() else { continue };
            if enc != "base64" {
                out.push(self.finding(path, format!("encoding {enc:?} is not \"base64\"")));
                continue;
            }
            match provision {
                Provision::ByReference(_) => out.push(self.finding(path, "encoding is set on a by-reference payload".into())),
                Provision::ByValueXml(_) => out.push(self.finding(path, "encoding is set on inline XML content".into())),
                Provision::ByValueText(t) => {
                    if let Err(e) = base64::engine::general_purpose::STANDARD.decode(t) {
                        out.push(self.finding(path, format!("payload is not valid base64: {e}")));
                    }
                }
            }
        }
    }
}

fn mime_ok(p: &Payload) -> bool {
    parse_media_type(&p.mime_type).is_some()
}

struct MimeTypePresent;

impl Rule for MimeTypePresent {
    fn info(&self) -> RuleInfo {
        info("R3", Severity::Error, Mode::Shallow, "mimeType is present and well-formed on every Resource and Statement")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, p) in payloads(cx) {
            if p.mime_type.is_empty() {
                out.push(self.finding(path, format!("{} has no mimeType", payload_kind(cx, path))));
            } else if !mime_ok(p) {
                out.push(self.finding(path, format!("mimeType {:?} is not a valid media type", p.mime_type)));
            }
        }
    }
}

struct ComponentResources;

impl Rule for ComponentResources {
    fn info(&self) -> RuleInfo {
        info("R4", Severity::Error, Mode::Shallow, "every Component has at least one Resource and all share one mimeType")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, n) in &cx.nodes {
            let NodeRef::Component(c) = n else { continue };
            if c.resources.is_empty() {
                out.push(self.finding(path, "component has no resource".into()));
                continue;
            }
            // Resources failing R3 are not compared.
            let types: BTreeSet<_> =
                c.resources.iter().filter_map(|r| parse_media_type(&r.payload.mime_type)).map(|m| (m.essence, m.params)).collect();
            if types.len() > 1 {
                let list: Vec<String> = c.resources.iter().filter(|r| mime_ok(&r.payload)).map(|r| r.payload.mime_type.clone()).collect();
                out.push(self.finding(path, format!("component resources have different mime types: {}", list.join(", "))));
            }
        }
    }
}

struct Containment;

impl Containment {
    fn check_children(&self, parent: &str, allowed: &[EntityKind], base: &NodePath, offset: usize, children: &[Entity], out: &mut Vec<Finding>) {
        for (i, child) in children.iter().enumerate() {
            let kind = NodeRef::from(child).kind();
            if !allowed.contains(&kind) {
                out.push(self.finding(&base.child(offset + i), format!("{kind} is not allowed inside {parent}")));
            }
        }
    }
}

impl Rule for Containment {
    fn info(&self) -> RuleInfo {
        info("R5", Severity::Error, Mode::Shallow, "Container holds Items or Containers; Item holds Items or Components")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        let items_or_containers = [EntityKind::Item, EntityKind::Container];
        self.check_children("DIDL", &items_or_containers, &NodePath::root(), 0, &cx.doc.root_entities, out);
        for (path, n) in &cx.nodes {
            match n {
                NodeRef::Container(c) => {
                    if c.children.is_empty() {
                        out.push(self.finding(path, "container has no item or container".into()));
                    }
                    self.check_children("container", &items_or_containers, path, c.descriptors.len(), &c.children, out);
                }
                NodeRef::Item(i) => {
                    self.check_children("item", &[EntityKind::Item, EntityKind::Component], path, i.descriptors.len(), &i.children, out);
                }
                _ => {}
            }
        }
    }
}

struct UniqueIds;

impl Rule for UniqueIds {
    fn info(&self) -> RuleInfo {
        info("R6", Severity::Error, Mode::Shallow, "XML IDs are unique")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        let mut seen = BTreeSet::new();
        for (path, n) in &cx.nodes {
            if let Some(id) = n.xml_id() {
                if !seen.insert(id) {
                    out.push(self.finding(path, format!("XML ID {id:?} is already used")));
                }
            }
        }
    }
}

struct AnnotationTarget;

impl Rule for AnnotationTarget {
    fn info(&self) -> RuleInfo {
        info("R6b", Severity::Error, Mode::Shallow, "Annotation target resolves to an existing XML ID")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        let ids: BTreeSet<&str> = cx.nodes.iter().filter_map(|(_, n)| n.xml_id()).collect();
        for (path, n) in &cx.nodes {
            let NodeRef::Annotation(a) = n else { continue };
            let target = a.target.strip_prefix('#').unwrap_or(&a.target);
            if !ids.contains(target) {
                out.push(self.finding(path, format!("annotation target {:?} does not resolve", a.target)));
            }
        }
    }
}

struct IdentifierUri;

impl Rule for IdentifierUri {
    fn info(&self) -> RuleInfo {
        info("R7", Severity::Error, Mode::Shallow, "DII Identifier and RelatedIdentifier bodies are single absolute URIs")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, n) in &cx.nodes {
            let NodeRef::Statement(s) = n else { continue };
            for e in s.payload.xml_elements() {
                if !e.name.is(DII_NS, "Identifier") && !e.name.is(DII_NS, "RelatedIdentifier") {
                    continue;
                }
                let value = e.text();
                let value = value.trim();
                if e.elements().next().is_some() || !is_absolute_uri(value) {
                    out.push(self.finding(path, format!("dii:{} {value:?} is not a single absolute URI", e.name.local)));
                }
                if let Some(rt) = e.attr(None, "relationshipType") {
                    if !is_absolute_uri(rt.trim()) {
                        out.push(self.finding(path, format!("relationshipType {rt:?} is not an absolute URI")));
                    }
                }
            }
        }
    }
}

struct DocumentIdUri;

impl Rule for DocumentIdUri {
    fn info(&self) -> RuleInfo {
        info("R8", Severity::Error, Mode::Shallow, "DIDLDocumentId, if present, is an absolute URI")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        if let Some(id) = &cx.doc.document_id {
            if !is_absolute_uri(id) {
                out.push(self.finding(&NodePath::root(), format!("DIDLDocumentId {id:?} is not an absolute URI")));
            }
        }
    }
}

struct BitEquivalence;

impl Rule for BitEquivalence {
    fn info(&self) -> RuleInfo {
        info("R9", Severity::Error, Mode::Deep, "resources of a Component are bit-equivalent")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        let Some(m) = &cx.materializer else { return };
        for (path, n) in &cx.nodes {
            let NodeRef::Component(c) = n else { continue };
            let mut digests = Vec::new();
            let mut fetch_failed = false;
            for (i, r) in c.resources.iter().enumerate() {
                let rpath = c.resource_path(path, i);
                match m.materialize(&r.payload) {
                    Ok(bytes) => digests.push((rpath, crate::resourceio::sha256_hex(&bytes))),
                    Err(MaterializeError::Fetch(e)) => {
                        fetch_failed = true;
                        out.push(Finding {
                            rule: "R9-FETCH".into(),
                            severity: Severity::Error,
                            path: rpath,
                            message: format!("cannot fetch resource: {e}"),
                        });
                    }
                    Err(MaterializeError::TooLarge(limit)) => {
                        fetch_failed = true;
                        out.push(Finding {
                            rule: "R9-FETCH".into(),
                            severity: Severity::Error,
                            path: rpath,
                            message: format!("resource exceeds {limit} bytes"),
                        });
                    }
                    // Non-digital resources have no bytes; malformed payloads are
                    // reported by the shallow rules.
                    Err(_) => {}
                }
            }
            if fetch_failed {
                continue;
            }
            let distinct: BTreeSet<&str> = digests.iter().map(|(_, d)| d.as_str()).collect();
            if distinct.len() > 1 {
                let list: Vec<String> = digests.iter().map(|(p, d)| format!("{p}={d}")).collect();
                out.push(self.finding(path, format!("resources differ: {}", list.join(" "))));
            }
        }
    }
}

struct ContentEncodingTokens;

impl Rule for ContentEncodingTokens {
    fn info(&self) -> RuleInfo {
        info("R10", Severity::Error, Mode::Shallow, "contentEncoding tokens are supported and not repeated")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        let registry = CodingRegistry::default();
        for (path, p) in payloads(cx) {
            let mut seen = BTreeSet::new();
            for token in &p.content_encoding {
                if registry.get(token).is_none() {
                    out.push(self.finding(path, format!("unsupported content encoding {token:?}")));
                } else if !seen.insert(token.as_str()) {
                    out.push(self.finding(path, format!("content encoding {token:?} is listed twice")));
                }
            }
        }
    }
}

struct EmptyItem;

impl Rule for EmptyItem {
    fn info(&self) -> RuleInfo {
        info("W1", Severity::Warning, Mode::Shallow, "Item has no Component and no sub-Item")
    }

    fn check(&self, cx: &RuleContext<'_>, out: &mut Vec<Finding>) {
        for (path, n) in &cx.nodes {
            if let NodeRef::Item(i) = n {
                if i.children.is_empty() {
                    out.push(self.finding(path, "item has no component and no sub-item".into()));
                }
            }
        }
    }
}
