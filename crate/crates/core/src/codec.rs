//! DIDL XML parsing and serialization.
//!
//! Parsing never panics: any input yields a document, or at least one fatal
//! diagnostic. Serialization writes every namespace declaration on the
//! outermost element; the canonical form additionally ignores source prefix
//! spellings and emits no whitespace between elements.

use std::collections::BTreeSet;

use base64::Engine as _;
use thiserror::Error;

use crate::model::*;
use crate::syntax::{format_timestamp, parse_timestamp};
use crate::xml::{normalize_children, Attributes, NamespaceUsage, PrefixMap, QName, XmlElement, XmlNode, XmlWriter};

pub const DIDL_NS: &str = "urn:mpeg:mpeg21:2002:02-DIDL-NS";
pub const DII_NS: &str = "urn:mpeg:mpeg21:2002:01-DII-NS";
pub const REL_NS: &str = "urn:mpeg:mpeg21:2003:01-REL-R-NS";
pub const DEFAULT_EXT_NS: &str = "http://library.lanl.gov/2005-08/aDORe/DIDLextension/";
pub const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
pub const DCTERMS_NS: &str = "http://purl.org/dc/terms/";
pub const OAI_DC_NS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const DSIG_NS: &str = "http://www.w3.org/2000/09/xmldsig#";
pub const DIADM_NS: &str = "http://library.lanl.gov/2004-01/STB-RL/DIADM";
pub const INTEGRITY_NS: &str = "urn:x-didlkit:integrity:1";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";

const MAX_DEPTH: usize = 256;
const NODES_LIMIT: u32 = 5_000_000;

/// Namespace configuration. Only the repository extension namespace varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamespaceTable {
    pub ext_ns: String,
}

impl Default for NamespaceTable {
    fn default() -> Self {
        NamespaceTable { ext_ns: DEFAULT_EXT_NS.to_string() }
    }
}

impl NamespaceTable {
    pub const DIDL: &'static str = DIDL_NS;
    pub const DII: &'static str = DII_NS;
    pub const REL: &'static str = REL_NS;

    fn fixed_prefixes(&self) -> Vec<(&str, &str)> {
        let mut v = vec![
            (DIDL_NS, "didl"),
            (DII_NS, "dii"),
            (REL_NS, "r"),
            (DC_NS, "dc"),
            (DCTERMS_NS, "dcterms"),
            (OAI_DC_NS, "oai_dc"),
            (DSIG_NS, "dsig"),
            (DIADM_NS, "diadm"),
            (INTEGRITY_NS, "integ"),
            (XSI_NS, "xsi"),
        ];
        if !v.iter().any(|(ns, _)| *ns == self.ext_ns) {
            v.push((self.ext_ns.as_str(), "diext"));
        }
        v
    }

    fn created_attr(&self) -> QName {
        QName::new(self.ext_ns.clone(), "DIDLDocumentCreated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticSeverity {
    Fatal,
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ParseDiagnostic {
    pub code: &'static str,
    pub node_path: String,
    pub message: String,
    pub severity: DiagnosticSeverity,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            DiagnosticSeverity::Fatal => "fatal",
            DiagnosticSeverity::Error => "error",
            DiagnosticSeverity::Warning => "warning",
        };
        write!(f, "{} {} {} {}", sev, self.code, self.node_path, self.message)
    }
}

/// Result of [`parse_didl`]. `document` is `None` exactly when a fatal
/// diagnostic was produced.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub document: Option<DidlDocument>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity <= DiagnosticSeverity::Error)
    }

    pub fn fatal(&self) -> Option<&ParseDiagnostic> {
        self.diagnostics.iter().find(|d| d.severity == DiagnosticSeverity::Fatal)
    }

    /// The document, provided no fatal or error diagnostic was raised.
    pub fn into_clean(self) -> Result<DidlDocument, Vec<ParseDiagnostic>> {
        if self.has_errors() {
            return Err(self.diagnostics);
        }
        self.document.ok_or(self.diagnostics)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid base64 payload at {path}")]
    InvalidBase64 { path: String },
    #[error("malformed XML fragment: {0}")]
    Fragment(String),
}

pub fn parse_didl(bytes: &[u8]) -> ParseOutcome {
    parse_didl_with(bytes, &NamespaceTable::default())
}

pub fn parse_didl_with(bytes: &[u8], ns: &NamespaceTable) -> ParseOutcome {
    let mut p = Parser { ns, diagnostics: Vec::new(), fatal: false };
    let document = p.run(bytes);
    let document = if p.fatal { None } else { document };
    ParseOutcome { document, diagnostics: p.diagnostics }
}

struct Parser<'n> {
    ns: &'n NamespaceTable,
    diagnostics: Vec<ParseDiagnostic>,
    fatal: bool,
}

type Node<'a, 'i> = roxmltree::Node<'a, 'i>;

/// Marker for an aborted subtree; the diagnostic is already recorded.
struct Abort;

impl<'n> Parser<'n> {
    fn diag(&mut self, severity: DiagnosticSeverity, code: &'static str, path: &NodePath, message: impl Into<String>) {
        if severity == DiagnosticSeverity::Fatal {
            self.fatal = true;
        }
        self.diagnostics.push(ParseDiagnostic { code, node_path: path.to_string(), message: message.into(), severity });
    }

    fn abort(&mut self, code: &'static str, path: &NodePath, message: impl Into<String>) -> Abort {
        self.diag(DiagnosticSeverity::Fatal, code, path, message);
        Abort
    }

    fn run(&mut self, bytes: &[u8]) -> Option<DidlDocument> {
        let root_path = NodePath::root();
        let text = match decode_utf8(bytes) {
            Ok(t) => t,
            Err(msg) => {
                self.abort("E-ENCODING", &root_path, msg);
                return None;
            }
        };
        let opts = roxmltree::ParsingOptions { allow_dtd: false, nodes_limit: NODES_LIMIT, ..Default::default() };
        let xml = match roxmltree::Document::parse_with_options(text, opts) {
            Ok(d) => d,
            Err(roxmltree::Error::DtdDetected) => {
                self.abort("E-DTD", &root_path, "document type declarations are not accepted");
                return None;
            }
            Err(e) => {
                self.abort("E-XML", &root_path, e.to_string());
                return None;
            }
        };
        let root = xml.root_element();
        if root.tag_name().name() != "DIDL" {
            self.abort("E-ROOT", &root_path, format!("root element is {:?}, expected DIDL", root.tag_name().name()));
            return None;
        }
        if root.tag_name().namespace() != Some(DIDL_NS) {
            self.abort(
                "E-NAMESPACE",
                &root_path,
                format!("root element namespace is {:?}, expected {DIDL_NS}", root.tag_name().namespace().unwrap_or("")),
            );
            return None;
        }
        self.document(root).ok()
    }

    fn document(&mut self, root: Node<'_, '_>) -> Result<DidlDocument, Abort> {
        let path = NodePath::root();
        let mut doc = DidlDocument::default();
        let created_name = self.ns.created_attr();
        for a in root.attributes() {
            let name = attr_qname(&a);
            if name.ns.is_none() && name.local == "DIDLDocumentId" {
                doc.document_id = Some(a.value().to_string());
            } else if name == created_name {
                match parse_timestamp(a.value()) {
                    Some(t) => doc.document_created = Some(t),
                    None => {
                        self.diag(
                            DiagnosticSeverity::Warning,
                            "W-DATETIME",
                            &path,
                            format!("DIDLDocumentCreated {:?} is not a whole-second RFC 3339 timestamp; kept as a plain attribute", a.value()),
                        );
                        doc.foreign_attributes.insert(name, a.value().to_string());
                    }
                }
            } else {
                doc.foreign_attributes.insert(name, a.value().to_string());
            }
        }
        for child in root.children() {
            match self.classify(child, &path)? {
                Child::Skip => {}
                Child::Didl("DIDLInfo") => {
                    let nodes = self.foreign_children(child, 1)?;
                    doc.didl_info.get_or_insert_with(Vec::new).extend(nodes);
                }
                Child::Didl("Item" | "Container" | "Component") => {
                    let p = path.child(doc.root_entities.len());
                    let e = self.entity(child, &p)?;
                    doc.root_entities.push(e);
                }
                Child::Didl(other) => return Err(self.unexpected(other, "DIDL", &path)),
            }
        }
        if doc.root_entities.is_empty() {
            return Err(self.abort("E-NO-ENTITIES", &path, "DIDL element contains no Item or Container"));
        }
        let mut seen = BTreeSet::new();
        for (p, id) in doc.xml_ids() {
            if !seen.insert(id.to_string()) {
                return Err(self.abort("E-DUPLICATE-ID", &p, format!("XML ID {id:?} is used more than once")));
            }
        }
        Ok(doc)
    }

    fn unexpected(&mut self, name: &str, parent: &str, path: &NodePath) -> Abort {
        self.abort("E-STRUCTURE", path, format!("element {name} is not allowed inside {parent}"))
    }

    fn classify<'i>(&mut self, node: Node<'_, 'i>, path: &NodePath) -> Result<Child<'i>, Abort> {
        if node.is_text() {
            let t = node.text().unwrap_or("");
            if t.chars().all(crate::xml::is_xml_space) {
                return Ok(Child::Skip);
            }
            return Err(self.abort("E-STRUCTURE", path, format!("unexpected character data {:?}", truncate(t))));
        }
        if !node.is_element() {
            return Ok(Child::Skip);
        }
        let tag = node.tag_name();
        if tag.namespace() != Some(DIDL_NS) {
            return Err(self.abort(
                "E-STRUCTURE",
                path,
                format!("foreign element {{{}}}{} is only allowed inside Statement, Resource or DIDLInfo", tag.namespace().unwrap_or(""), tag.name()),
            ));
        }
        match tag.name() {
            "Reference" | "Declarations" => Err(self.abort(
                "E-REFERENCE-REMOVED",
                path,
                format!("{} is a first-edition element that was removed from the second edition", tag.name()),
            )),
            name => Ok(Child::Didl(name)),
        }
    }

    fn entity(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Entity, Abort> {
        match node.tag_name().name() {
            "Item" => self.item(node, path).map(Entity::Item),
            "Container" => self.container(node, path).map(Entity::Container),
            _ => self.component(node, path).map(Entity::Component),
        }
    }

    fn check_depth(&mut self, path: &NodePath) -> Result<(), Abort> {
        if path.0.len() > MAX_DEPTH {
            return Err(self.abort("E-DEPTH", path, "element nesting is too deep"));
        }
        Ok(())
    }

    fn container(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Container, Abort> {
        self.check_depth(path)?;
        let (xml_id, foreign_attributes) = split_attrs(node);
        let mut c = Container { xml_id, foreign_attributes, ..Default::default() };
        let mut descriptors = Vec::new();
        let mut children = Vec::new();
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Descriptor") => descriptors.push(child),
                Child::Didl("Item" | "Container" | "Component") => children.push(child),
                Child::Didl(other) => return Err(self.unexpected(other, "Container", path)),
            }
        }
        for d in descriptors {
            let p = path.child(c.descriptors.len());
            c.descriptors.push(self.descriptor(d, &p)?);
        }
        for e in children {
            let p = path.child(c.descriptors.len() + c.children.len());
            c.children.push(self.entity(e, &p)?);
        }
        Ok(c)
    }

    fn item(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Item, Abort> {
        self.check_depth(path)?;
        let (xml_id, foreign_attributes) = split_attrs(node);
        let mut item = Item { xml_id, foreign_attributes, ..Default::default() };
        let (mut descriptors, mut children, mut annotations) = (Vec::new(), Vec::new(), Vec::new());
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Condition") => item.conditions.push(self.opaque(child, path)?),
                Child::Didl("Choice") => item.choice_groups.push(self.opaque(child, path)?),
                Child::Didl("Descriptor") => descriptors.push(child),
                Child::Didl("Item" | "Container" | "Component") => children.push(child),
                Child::Didl("Annotation") => annotations.push(child),
                Child::Didl(other) => return Err(self.unexpected(other, "Item", path)),
            }
        }
        for d in descriptors {
            let p = path.child(item.descriptors.len());
            item.descriptors.push(self.descriptor(d, &p)?);
        }
        for e in children {
            let p = path.child(item.descriptors.len() + item.children.len());
            item.children.push(self.entity(e, &p)?);
        }
        for a in annotations {
            let p = path.child(item.descriptors.len() + item.children.len() + item.annotations.len());
            item.annotations.push(self.annotation(a, &p)?);
        }
        Ok(item)
    }

    fn component(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Component, Abort> {
        self.check_depth(path)?;
        let (xml_id, foreign_attributes) = split_attrs(node);
        let mut comp = Component { xml_id, foreign_attributes, ..Default::default() };
        let (mut descriptors, mut resources, mut anchors) = (Vec::new(), Vec::new(), Vec::new());
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Condition") => comp.conditions.push(self.opaque(child, path)?),
                Child::Didl("Descriptor") => descriptors.push(child),
                Child::Didl("Resource") => resources.push(child),
                Child::Didl("Anchor") => anchors.push(child),
                Child::Didl(other) => return Err(self.unexpected(other, "Component", path)),
            }
        }
        for d in descriptors {
            let p = path.child(comp.descriptors.len());
            comp.descriptors.push(self.descriptor(d, &p)?);
        }
        for r in resources {
            let p = path.child(comp.descriptors.len() + comp.resources.len());
            let (payload, foreign_attributes) = self.payload(r, &p)?;
            comp.resources.push(Resource { payload, foreign_attributes });
        }
        for a in anchors {
            let p = path.child(comp.descriptors.len() + comp.resources.len() + comp.anchors.len());
            comp.anchors.push(self.anchor(a, &p)?);
        }
        Ok(comp)
    }

    fn descriptor(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Descriptor, Abort> {
        self.check_depth(path)?;
        let (xml_id, foreign_attributes) = split_attrs(node);
        let mut d = Descriptor { xml_id, foreign_attributes, ..Default::default() };
        let (mut nested, mut statements) = (Vec::new(), Vec::new());
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Condition") => d.conditions.push(self.opaque(child, path)?),
                Child::Didl("Descriptor") => nested.push(child),
                Child::Didl("Statement") => statements.push(child),
                Child::Didl("Component") => {
                    return Err(self.abort("E-STRUCTURE", path, "component-valued descriptors are not supported"))
                }
                Child::Didl(other) => return Err(self.unexpected(other, "Descriptor", path)),
            }
        }
        for n in nested {
            let p = path.child(d.nested_descriptors.len());
            d.nested_descriptors.push(self.descriptor(n, &p)?);
        }
        for s in statements {
            let p = path.child(d.nested_descriptors.len() + d.statements.len());
            let (payload, foreign_attributes) = self.payload(s, &p)?;
            d.statements.push(Statement { payload, foreign_attributes });
        }
        if d.nested_descriptors.is_empty() && d.statements.is_empty() {
            return Err(self.abort("E-EMPTY-DESCRIPTOR", path, "Descriptor has no Statement and no nested Descriptor"));
        }
        Ok(d)
    }

    fn anchor(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Anchor, Abort> {
        self.check_depth(path)?;
        let (xml_id, foreign_attributes) = split_attrs(node);
        let mut a = Anchor { xml_id, foreign_attributes, ..Default::default() };
        let mut descriptors = Vec::new();
        let mut fragment = None;
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Condition") => a.conditions.push(self.opaque(child, path)?),
                Child::Didl("Descriptor") => descriptors.push(child),
                Child::Didl("Fragment") if fragment.is_none() => fragment = Some(child),
                Child::Didl(other) => return Err(self.unexpected(other, "Anchor", path)),
            }
        }
        for d in descriptors {
            let p = path.child(a.descriptors.len());
            a.descriptors.push(self.descriptor(d, &p)?);
        }
        let fpath = path.child(a.descriptors.len());
        let Some(f) = fragment else {
            return Err(self.abort("E-ANCHOR", path, "Anchor has no Fragment"));
        };
        let (_, mut fattrs) = split_attrs(f);
        let fragment_id = fattrs.remove(&QName::local("fragmentId")).unwrap_or_default();
        if fragment_id.is_empty() {
            return Err(self.abort("E-FRAGMENT", &fpath, "Fragment has no fragmentId"));
        }
        if f.children().any(|c| c.is_element() || c.text().is_some_and(|t| !t.trim().is_empty())) {
            return Err(self.abort("E-STRUCTURE", &fpath, "Fragment content is not supported"));
        }
        a.fragment = Fragment { fragment_id, foreign_attributes: fattrs };
        Ok(a)
    }

    fn annotation(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<Annotation, Abort> {
        self.check_depth(path)?;
        let (xml_id, mut foreign_attributes) = split_attrs(node);
        let target = foreign_attributes.remove(&QName::local("target")).unwrap_or_default();
        let mut a = Annotation { xml_id, target, foreign_attributes, ..Default::default() };
        let (mut descriptors, mut anchors) = (Vec::new(), Vec::new());
        for child in node.children() {
            match self.classify(child, path)? {
                Child::Skip => {}
                Child::Didl("Descriptor") => descriptors.push(child),
                Child::Didl("Anchor") => anchors.push(child),
                Child::Didl("Assertion") => a.assertions.push(self.opaque(child, path)?),
                Child::Didl(other) => return Err(self.unexpected(other, "Annotation", path)),
            }
        }
        for d in descriptors {
            let p = path.child(a.descriptors.len());
            a.descriptors.push(self.descriptor(d, &p)?);
        }
        for n in anchors {
            let p = path.child(a.descriptors.len() + a.anchors.len());
            a.anchors.push(self.anchor(n, &p)?);
        }
        Ok(a)
    }

    fn payload(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<(Payload, Attributes), Abort> {
        self.check_depth(path)?;
        let mut attrs = Attributes::new();
        let mut payload = Payload::default();
        let mut mime = None;
        for a in node.attributes() {
            let name = attr_qname(&a);
            match (name.ns.as_deref(), name.local.as_str()) {
                (None, "mimeType") => mime = Some(a.value().to_string()),
                (None, "ref") => payload.reference = Some(a.value().to_string()),
                (None, "encoding") => payload.encoding = Some(a.value().to_string()),
                (None, "contentEncoding") => {
                    payload.content_encoding = a.value().split_whitespace().map(str::to_string).collect()
                }
                _ => {
                    attrs.insert(name, a.value().to_string());
                }
            }
        }
        match mime {
            Some(m) => payload.mime_type = m,
            None => self.diag(
                DiagnosticSeverity::Error,
                "E-MIMETYPE",
                path,
                format!("{} has no mimeType attribute", node.tag_name().name()),
            ),
        }
        let children = self.foreign_children(node, path.0.len() + 1)?;
        payload.content = content_from(children, payload.reference.is_some(), payload.encoding.is_some());
        Ok((payload, attrs))
    }

    fn opaque(&mut self, node: Node<'_, '_>, path: &NodePath) -> Result<XmlElement, Abort> {
        match self.foreign(node, path.0.len() + 1)? {
            XmlNode::Element(e) => Ok(e),
            _ => unreachable!("opaque blocks are elements"),
        }
    }

    fn foreign_children(&mut self, node: Node<'_, '_>, depth: usize) -> Result<Vec<XmlNode>, Abort> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_element() || c.is_text() || c.is_comment() {
                out.push(self.foreign(c, depth + 1)?);
            }
        }
        Ok(normalize_children(out))
    }

    fn foreign(&mut self, node: Node<'_, '_>, depth: usize) -> Result<XmlNode, Abort> {
        if depth > MAX_DEPTH {
            return Err(self.abort("E-DEPTH", &NodePath::root(), "element nesting is too deep"));
        }
        if node.is_text() {
            return Ok(XmlNode::Text(node.text().unwrap_or("").to_string()));
        }
        if node.is_comment() {
            return Ok(XmlNode::Comment(node.text().unwrap_or("").to_string()));
        }
        let tag = node.tag_name();
        if tag.namespace() == Some(DIDL_NS) && matches!(tag.name(), "Reference" | "Declarations") {
            return Err(self.abort("E-REFERENCE-REMOVED", &NodePath::root(), format!("{} was removed in the second edition", tag.name())));
        }
        let name = QName { ns: tag.namespace().filter(|n| !n.is_empty()).map(str::to_string), local: tag.name().to_string() };
        let prefix_hint = tag.namespace().and_then(|ns| node.lookup_prefix(ns)).filter(|p| !p.is_empty()).map(str::to_string);
        let attributes = node.attributes().map(|a| (attr_qname(&a), a.value().to_string())).collect();
        let children = self.foreign_children(node, depth)?;
        Ok(XmlNode::Element(XmlElement { name, prefix_hint, attributes, children }))
    }
}

enum Child<'i> {
    Skip,
    Didl(&'i str),
}

fn truncate(s: &str) -> String {
    s.trim().chars().take(40).collect()
}

fn attr_qname(a: &roxmltree::Attribute<'_, '_>) -> QName {
    QName { ns: a.namespace().filter(|n| !n.is_empty()).map(str::to_string), local: a.name().to_string() }
}

/// Splits the `id` attribute from the rest.
fn split_attrs(node: Node<'_, '_>) -> (Option<String>, Attributes) {
    let mut id = None;
    let mut rest = Attributes::new();
    for a in node.attributes() {
        let name = attr_qname(&a);
        if name.ns.is_none() && name.local == "id" {
            id = Some(a.value().to_string());
        } else {
            rest.insert(name, a.value().to_string());
        }
    }
    (id, rest)
}

fn content_from(children: Vec<XmlNode>, has_ref: bool, encoded: bool) -> Content {
    if children.iter().any(|c| !matches!(c, XmlNode::Text(_))) {
        return Content::Xml(children);
    }
    let text: String = children
        .into_iter()
        .map(|c| match c {
            XmlNode::Text(t) => t,
            _ => String::new(),
        })
        .collect();
    if encoded {
        let compact: String = text.chars().filter(|c| !crate::xml::is_xml_space(*c)).collect();
        return if compact.is_empty() { Content::Empty } else { Content::Text(compact) };
    }
    if text.is_empty() || (has_ref && text.chars().all(crate::xml::is_xml_space)) {
        Content::Empty
    } else {
        Content::Text(text)
    }
}

fn decode_utf8(bytes: &[u8]) -> Result<&str, String> {
    if bytes.starts_with(&[0xFE, 0xFF]) || bytes.starts_with(&[0xFF, 0xFE]) {
        return Err("UTF-16 input is not supported; documents must be UTF-8".into());
    }
    let bytes = bytes.strip_prefix(&[0xEF, 0xBB, 0xBF]).unwrap_or(bytes);
    let text = std::str::from_utf8(bytes).map_err(|e| format!("input is not valid UTF-8: {e}"))?;
    if let Some(enc) = declared_encoding(text) {
        if !enc.eq_ignore_ascii_case("utf-8") && !enc.eq_ignore_ascii_case("utf8") {
            return Err(format!("declared encoding {enc:?} is not supported; documents must be UTF-8"));
        }
    }
    Ok(text)
}

fn declared_encoding(text: &str) -> Option<&str> {
    let decl = text.strip_prefix("<?xml")?;
    let decl = &decl[..decl.find("?>")?];
    let at = decl.find("encoding")?;
    let rest = decl[at + "encoding".len()..].trim_start().strip_prefix('=')?.trim_start();
    let quote = rest.chars().next().filter(|c| *c == '"' || *c == '\'')?;
    let rest = &rest[1..];
    Some(&rest[..rest.find(quote)?])
}

/// Parses a standalone XML fragment (one or more elements, optionally with
/// text and comments) into owned nodes. Used for manifest metadata blocks.
pub fn parse_fragment(text: &str) -> Result<Vec<XmlNode>, CodecError> {
    let body = match text.trim_start().strip_prefix("<?xml") {
        Some(rest) => rest.find("?>").map(|i| &rest[i + 2..]).unwrap_or(""),
        None => text,
    };
    let wrapped = format!("<didlkit-fragment>{body}</didlkit-fragment>");
    let opts = roxmltree::ParsingOptions { allow_dtd: false, nodes_limit: NODES_LIMIT, ..Default::default() };
    let xml = roxmltree::Document::parse_with_options(&wrapped, opts).map_err(|e| CodecError::Fragment(e.to_string()))?;
    let ns = NamespaceTable::default();
    let mut p = Parser { ns: &ns, diagnostics: Vec::new(), fatal: false };
    p.foreign_children(xml.root_element(), 1).map_err(|_| {
        CodecError::Fragment(p.diagnostics.first().map(|d| d.message.clone()).unwrap_or_default())
    })
}

// ---------------------------------------------------------------------------
// Serialization

/// Output style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Style {
    pub pretty: bool,
    pub use_hints: bool,
    pub wrap_base64: bool,
}

impl Style {
    pub const PRETTY: Style = Style { pretty: true, use_hints: true, wrap_base64: true };
    pub const CANONICAL: Style = Style { pretty: false, use_hints: false, wrap_base64: false };
}

/// Pretty-printed DIDL with a UTF-8 XML declaration.
pub fn serialize_didl(doc: &DidlDocument) -> Result<Vec<u8>, CodecError> {
    serialize_didl_with(doc, &NamespaceTable::default())
}

pub fn serialize_didl_with(doc: &DidlDocument, ns: &NamespaceTable) -> Result<Vec<u8>, CodecError> {
    check_base64(doc)?;
    Ok(write_document(doc, ns, Style::PRETTY))
}

/// Deterministic byte form: equal trees give equal bytes.
pub fn canonical_bytes(doc: &DidlDocument) -> Result<Vec<u8>, CodecError> {
    canonical_bytes_with(doc, &NamespaceTable::default())
}

pub fn canonical_bytes_with(doc: &DidlDocument, ns: &NamespaceTable) -> Result<Vec<u8>, CodecError> {
    check_base64(doc)?;
    Ok(write_document(doc, ns, Style::CANONICAL))
}

/// Rejects documents whose base64-flagged text payloads do not decode.
pub fn check_base64(doc: &DidlDocument) -> Result<(), CodecError> {
    for (path, node) in doc.walk() {
        let payload = match node {
            NodeRef::Resource(r) => &r.payload,
            NodeRef::Statement(s) => &s.payload,
            _ => continue,
        };
        if let (true, Content::Text(t)) = (payload.is_base64(), &payload.content) {
            if base64::engine::general_purpose::STANDARD.decode(t).is_err() {
                return Err(CodecError::InvalidBase64 { path: path.to_string() });
            }
        }
    }
    Ok(())
}

/// Serializes without the base64 check. Test fixtures use this to emit
/// deliberately broken documents.
pub fn write_document(doc: &DidlDocument, ns: &NamespaceTable, style: Style) -> Vec<u8> {
    let mut usage = NamespaceUsage::default();
    usage.note(Some(DIDL_NS), Some("didl"));
    if doc.document_created.is_some() {
        usage.note(Some(&ns.ext_ns), Some("diext"));
    }
    usage.note_attributes(&doc.foreign_attributes);
    if let Some(info) = &doc.didl_info {
        usage.note_nodes(info);
    }
    for (_, node) in doc.walk() {
        note_node(&mut usage, node);
    }
    let prefixes = PrefixMap::assign(&usage, &ns.fixed_prefixes(), style.use_hints);
    let mut w = DidlWriter { w: XmlWriter::new(&prefixes, style.pretty), style };
    w.w.declaration();
    let root = didl("DIDL");
    w.w.open(&root, true);
    if let Some(id) = &doc.document_id {
        w.w.attr(&QName::local("DIDLDocumentId"), id);
    }
    let mut attrs = doc.foreign_attributes.clone();
    if let Some(t) = &doc.document_created {
        attrs.insert(ns.created_attr(), format_timestamp(t));
    }
    for (k, v) in &attrs {
        w.w.attr(k, v);
    }
    w.w.close_start(false);
    w.w.indent();
    if let Some(info) = &doc.didl_info {
        w.w.newline();
        let name = didl("DIDLInfo");
        w.w.open(&name, false);
        if info.is_empty() {
            w.w.close_start(true);
        } else {
            w.w.close_start(false);
            w.w.children(info);
            w.w.end(&name);
        }
    }
    for e in &doc.root_entities {
        w.entity(e);
    }
    w.w.dedent();
    w.w.newline();
    w.w.end(&root);
    if style.pretty {
        w.w.buf.push('\n');
    }
    w.w.buf.into_bytes()
}

/// Serializes one node as a standalone fragment with its own namespace
/// declarations and no XML declaration.
pub fn serialize_node(node: NodeRef<'_>, style: Style) -> Vec<u8> {
    let ns = NamespaceTable::default();
    let mut usage = NamespaceUsage::default();
    usage.note(Some(DIDL_NS), Some("didl"));
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        note_node(&mut usage, n);
        stack.extend(n.children());
    }
    let prefixes = PrefixMap::assign(&usage, &ns.fixed_prefixes(), style.use_hints);
    let mut w = DidlWriter { w: XmlWriter::new(&prefixes, style.pretty), style };
    w.node(node, true);
    w.w.buf.into_bytes()
}

/// Canonical bytes of inline XML content. Every top-level element carries
/// the declarations for the whole fragment.
pub fn canonical_fragment(nodes: &[XmlNode]) -> Vec<u8> {
    let ns = NamespaceTable::default();
    let mut usage = NamespaceUsage::default();
    usage.note_nodes(nodes);
    let prefixes = PrefixMap::assign(&usage, &ns.fixed_prefixes(), false);
    let mut w = XmlWriter::new(&prefixes, false);
    for n in nodes {
        w.node(n, true);
    }
    w.buf.into_bytes()
}

/// Serializes a foreign element standalone (namespace declarations on it).
pub fn serialize_element(e: &XmlElement, style: Style) -> Vec<u8> {
    let ns = NamespaceTable::default();
    let mut usage = NamespaceUsage::default();
    usage.note_element(e);
    let prefixes = PrefixMap::assign(&usage, &ns.fixed_prefixes(), style.use_hints);
    let mut w = XmlWriter::new(&prefixes, style.pretty);
    w.element(e, true);
    w.buf.into_bytes()
}

fn note_node(usage: &mut NamespaceUsage, node: NodeRef<'_>) {
    let (attrs, extra): (&Attributes, Vec<&[XmlNode]>) = match node {
        NodeRef::Container(c) => (&c.foreign_attributes, vec![]),
        NodeRef::Item(i) => {
            for e in i.conditions.iter().chain(&i.choice_groups) {
                usage.note_element(e);
            }
            (&i.foreign_attributes, vec![])
        }
        NodeRef::Component(c) => {
            for e in &c.conditions {
                usage.note_element(e);
            }
            (&c.foreign_attributes, vec![])
        }
        NodeRef::Descriptor(d) => {
            for e in &d.conditions {
                usage.note_element(e);
            }
            (&d.foreign_attributes, vec![])
        }
        NodeRef::Statement(s) => (&s.foreign_attributes, content_nodes(&s.payload)),
        NodeRef::Resource(r) => (&r.foreign_attributes, content_nodes(&r.payload)),
        NodeRef::Anchor(a) => {
            for e in &a.conditions {
                usage.note_element(e);
            }
            (&a.foreign_attributes, vec![])
        }
        NodeRef::Fragment(f) => (&f.foreign_attributes, vec![]),
        NodeRef::Annotation(a) => {
            for e in &a.assertions {
                usage.note_element(e);
            }
            (&a.foreign_attributes, vec![])
        }
    };
    usage.note_attributes(attrs);
    for nodes in extra {
        usage.note_nodes(nodes);
    }
}

fn content_nodes(p: &Payload) -> Vec<&[XmlNode]> {
    match &p.content {
        Content::Xml(n) => vec![n.as_slice()],
        _ => vec![],
    }
}

fn didl(local: &str) -> QName {
    QName::new(DIDL_NS, local)
}

struct DidlWriter<'a> {
    w: XmlWriter<'a>,
    style: Style,
}

impl DidlWriter<'_> {
    fn entity(&mut self, e: &Entity) {
        self.w.newline();
        self.node(NodeRef::from(e), false);
    }

    fn start(&mut self, local: &str, declare: bool, id: Option<&str>, known: &[(&str, &str)], foreign: &Attributes) -> QName {
        let name = didl(local);
        self.w.open(&name, declare);
        if let Some(id) = id {
            self.w.attr(&QName::local("id"), id);
        }
        for (k, v) in known {
            self.w.attr(&QName::local(*k), v);
        }
        for (k, v) in foreign {
            self.w.attr(k, v);
        }
        name
    }

    fn opaque(&mut self, blocks: &[XmlElement]) {
        for b in blocks {
            self.w.newline();
            self.w.element(b, false);
        }
    }

    fn descriptors(&mut self, ds: &[Descriptor]) {
        for d in ds {
            self.w.newline();
            self.node(NodeRef::Descriptor(d), false);
        }
    }

    fn node(&mut self, node: NodeRef<'_>, declare: bool) {
        match node {
            NodeRef::Container(c) => {
                let name = self.start("Container", declare, c.xml_id.as_deref(), &[], &c.foreign_attributes);
                self.body(&name, |w| {
                    w.descriptors(&c.descriptors);
                    for e in &c.children {
                        w.entity(e);
                    }
                }, c.descriptors.is_empty() && c.children.is_empty());
            }
            NodeRef::Item(i) => {
                let name = self.start("Item", declare, i.xml_id.as_deref(), &[], &i.foreign_attributes);
                let empty = i.conditions.is_empty()
                    && i.descriptors.is_empty()
                    && i.choice_groups.is_empty()
                    && i.children.is_empty()
                    && i.annotations.is_empty();
                self.body(&name, |w| {
                    w.opaque(&i.conditions);
                    w.descriptors(&i.descriptors);
                    w.opaque(&i.choice_groups);
                    for e in &i.children {
                        w.entity(e);
                    }
                    for a in &i.annotations {
                        w.w.newline();
                        w.node(NodeRef::Annotation(a), false);
                    }
                }, empty);
            }
            NodeRef::Component(c) => {
                let name = self.start("Component", declare, c.xml_id.as_deref(), &[], &c.foreign_attributes);
                let empty = c.conditions.is_empty() && c.descriptors.is_empty() && c.resources.is_empty() && c.anchors.is_empty();
                self.body(&name, |w| {
                    w.opaque(&c.conditions);
                    w.descriptors(&c.descriptors);
                    for r in &c.resources {
                        w.w.newline();
                        w.node(NodeRef::Resource(r), false);
                    }
                    for a in &c.anchors {
                        w.w.newline();
                        w.node(NodeRef::Anchor(a), false);
                    }
                }, empty);
            }
            NodeRef::Descriptor(d) => {
                let name = self.start("Descriptor", declare, d.xml_id.as_deref(), &[], &d.foreign_attributes);
                let empty = d.conditions.is_empty() && d.nested_descriptors.is_empty() && d.statements.is_empty();
                self.body(&name, |w| {
                    w.opaque(&d.conditions);
                    w.descriptors(&d.nested_descriptors);
                    for s in &d.statements {
                        w.w.newline();
                        w.node(NodeRef::Statement(s), false);
                    }
                }, empty);
            }
            NodeRef::Statement(s) => self.payload("Statement", declare, &s.payload, &s.foreign_attributes),
            NodeRef::Resource(r) => self.payload("Resource", declare, &r.payload, &r.foreign_attributes),
            NodeRef::Anchor(a) => {
                let name = self.start("Anchor", declare, a.xml_id.as_deref(), &[], &a.foreign_attributes);
                self.body(&name, |w| {
                    w.opaque(&a.conditions);
                    w.descriptors(&a.descriptors);
                    w.w.newline();
                    w.node(NodeRef::Fragment(&a.fragment), false);
                }, false);
            }
            NodeRef::Fragment(f) => {
                self.start("Fragment", declare, None, &[("fragmentId", &f.fragment_id)], &f.foreign_attributes);
                self.w.close_start(true);
            }
            NodeRef::Annotation(a) => {
                let name =
                    self.start("Annotation", declare, a.xml_id.as_deref(), &[("target", &a.target)], &a.foreign_attributes);
                let empty = a.descriptors.is_empty() && a.anchors.is_empty() && a.assertions.is_empty();
                self.body(&name, |w| {
                    w.descriptors(&a.descriptors);
                    for n in &a.anchors {
                        w.w.newline();
                        w.node(NodeRef::Anchor(n), false);
                    }
                    w.opaque(&a.assertions);
                }, empty);
            }
        }
    }

    fn body(&mut self, name: &QName, f: impl FnOnce(&mut Self), empty: bool) {
        if empty {
            self.w.close_start(true);
            return;
        }
        self.w.close_start(false);
        self.w.indent();
        f(self);
        self.w.dedent();
        self.w.newline();
        self.w.end(name);
    }

    fn payload(&mut self, local: &str, declare: bool, p: &Payload, foreign: &Attributes) {
        let ce = p.content_encoding.join(" ");
        let mut known: Vec<(&str, &str)> = vec![("mimeType", &p.mime_type)];
        if let Some(r) = &p.reference {
            known.push(("ref", r));
        }
        if let Some(e) = &p.encoding {
            known.push(("encoding", e));
        }
        if !ce.is_empty() {
            known.push(("contentEncoding", &ce));
        }
        // An empty mimeType round-trips as absent.
        known.retain(|(k, v)| *k != "mimeType" || !v.is_empty());
        let name = self.start(local, declare, None, &known, foreign);
        match &p.content {
            Content::Empty => self.w.close_start(true),
            Content::Text(t) if p.encoding.is_some() && self.style.wrap_base64 => {
                self.w.close_start(false);
                self.w.indent();
                let bytes = t.as_bytes();
                for chunk in bytes.chunks(76) {
                    self.w.newline();
                    // Base64 text is ASCII, so chunk boundaries are char boundaries.
                    self.w.text(std::str::from_utf8(chunk).unwrap_or_default());
                }
                self.w.dedent();
                self.w.newline();
                self.w.end(&name);
            }
            Content::Text(t) => {
                self.w.close_start(false);
                self.w.text(t);
                self.w.end(&name);
            }
            Content::Xml(nodes) => {
                self.w.close_start(false);
                self.w.children(nodes);
                self.w.end(&name);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<didl:DIDL xmlns:didl="urn:mpeg:mpeg21:2002:02-DIDL-NS">
  <didl:Item id="i1">
    <didl:Component>
      <didl:Resource mimeType="text/plain" ref="http://example.org/a.txt"/>
    </didl:Component>
  </didl:Item>
</didl:DIDL>"#;

    fn codes(out: &ParseOutcome) -> Vec<&'static str> {
        out.diagnostics.iter().map(|d| d.code).collect()
    }

    #[test]
    fn parses_minimal_document() {
        let out = parse_didl(MINIMAL.as_bytes());
        assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
        let doc = out.document.unwrap();
        assert_eq!(doc.root_entities.len(), 1);
        assert_eq!(doc.find_by_id("i1").unwrap().kind(), EntityKind::Item);
    }

    #[test]
    fn empty_root_is_fatal() {
        let out = parse_didl(br#"<didl:DIDL xmlns:didl="urn:mpeg:mpeg21:2002:02-DIDL-NS"/>"#);
        assert!(out.document.is_none());
        assert_eq!(codes(&out), ["E-NO-ENTITIES"]);
    }

    #[test]
    fn rejects_wrong_root_and_namespace() {
        let out = parse_didl(b"<DIDL/>");
        assert_eq!(codes(&out), ["E-NAMESPACE"]);
        let out = parse_didl(br#"<x:Foo xmlns:x="urn:mpeg:mpeg21:2002:02-DIDL-NS"/>"#);
        assert_eq!(codes(&out), ["E-ROOT"]);
        let out = parse_didl(b"<didl:DIDL");
        assert_eq!(codes(&out), ["E-XML"]);
    }

    #[test]
    fn rejects_first_edition_elements() {
        let src = MINIMAL.replace("<didl:Component>", "<didl:Reference target=\"#x\"/><didl:Component>");
        let out = parse_didl(src.as_bytes());
        assert!(out.document.is_none());
        assert_eq!(codes(&out), ["E-REFERENCE-REMOVED"]);
        let src = MINIMAL.replace("<didl:Item id=\"i1\">", "<didl:Declarations/><didl:Item id=\"i1\">");
        assert_eq!(codes(&parse_didl(src.as_bytes())), ["E-REFERENCE-REMOVED"]);
    }

    #[test]
    fn rejects_dtd_and_foreign_encodings() {
        let src = format!("<!DOCTYPE x [<!ENTITY e \"boom\">]>{}", MINIMAL.split_once("?>").unwrap().1);
        assert_eq!(codes(&parse_didl(src.as_bytes())), ["E-DTD"]);
        let src = MINIMAL.replace("UTF-8", "ISO-8859-1");
        assert_eq!(codes(&parse_didl(src.as_bytes())), ["E-ENCODING"]);
        assert_eq!(codes(&parse_didl(&[0xff, 0xfe, 0x3c, 0x00])), ["E-ENCODING"]);
        assert_eq!(codes(&parse_didl(&[0x3c, 0xc3, 0x28])), ["E-ENCODING"]);
    }

    #[test]
    fn duplicate_ids_are_fatal() {
        let src = MINIMAL.replace("<didl:Component>", "<didl:Component id=\"i1\">");
        let out = parse_didl(src.as_bytes());
        assert!(out.document.is_none());
        assert_eq!(codes(&out), ["E-DUPLICATE-ID"]);
    }

    #[test]
    fn missing_mime_type_is_an_error_not_fatal() {
        let src = MINIMAL.replace("mimeType=\"text/plain\" ", "");
        let out = parse_didl(src.as_bytes());
        assert_eq!(codes(&out), ["E-MIMETYPE"]);
        assert_eq!(out.diagnostics[0].node_path, "/0/0/0");
        assert!(out.document.is_some());
        assert!(out.clone().into_clean().is_err());
    }

    #[test]
    fn empty_descriptor_is_fatal() {
        let src = MINIMAL.replace("<didl:Component>", "<didl:Descriptor/><didl:Component>");
        assert_eq!(codes(&parse_didl(src.as_bytes())), ["E-EMPTY-DESCRIPTOR"]);
    }

    #[test]
    fn base64_whitespace_is_dropped_and_rewrapped() {
        let payload = "QUJD".repeat(40);
        let src = MINIMAL.replace(
            r#"<didl:Resource mimeType="text/plain" ref="http://example.org/a.txt"/>"#,
            &format!("<didl:Resource mimeType=\"text/plain\" encoding=\"base64\">\n  {}\n  {}</didl:Resource>", &payload[..80], &payload[80..]),
        );
        let doc = parse_didl(src.as_bytes()).into_clean().unwrap();
        let NodeRef::Resource(r) = doc.node_at(&NodePath(vec![0, 0, 0])).unwrap() else { panic!() };
        assert_eq!(r.payload.content, Content::Text(payload.clone()));
        let out = String::from_utf8(serialize_didl(&doc).unwrap()).unwrap();
        let b64_lines: Vec<&str> = out.lines().map(str::trim).filter(|l| l.starts_with("QUJD")).collect();
        assert_eq!(b64_lines.iter().map(|l| l.len()).collect::<Vec<_>>(), [76, 76, 8]);
        assert_eq!(parse_didl(out.as_bytes()).into_clean().unwrap(), doc);
    }

    #[test]
    fn serialize_refuses_invalid_base64() {
        let src = MINIMAL.replace(
            r#"ref="http://example.org/a.txt"/>"#,
            r#"encoding="base64">not*base64</didl:Resource>"#,
        );
        let doc = parse_didl(src.as_bytes()).into_clean().unwrap();
        assert_eq!(serialize_didl(&doc), Err(CodecError::InvalidBase64 { path: "/0/0/0".into() }));
    }

    #[test]
    fn root_attribute_order_is_canonical() {
        let mut doc = parse_didl(MINIMAL.as_bytes()).into_clean().unwrap();
        doc.document_id = Some("info:x/i/1".into());
        doc.document_created = parse_timestamp("2004-11-22T18:07:18Z");
        doc.foreign_attributes.insert(QName::new("urn:z", "b"), "2".into());
        doc.foreign_attributes.insert(QName::new("urn:a", "a"), "1".into());
        let out = String::from_utf8(canonical_bytes(&doc).unwrap()).unwrap();
        let root = out.lines().nth(1).unwrap();
        let decls = root.find("xmlns:").unwrap();
        let id = root.find("DIDLDocumentId").unwrap();
        let created = root.find("diext:DIDLDocumentCreated").unwrap();
        let a = root.find("ns1:a=").unwrap();
        let b = root.find("ns2:b=").unwrap();
        assert!(decls < id && id < created && created < a && a < b, "{root}");
    }

    #[test]
    fn unqualified_foreign_elements_undeclare_default_namespace() {
        let src = MINIMAL.replace(
            r#"<didl:Resource mimeType="text/plain" ref="http://example.org/a.txt"/>"#,
            r#"<didl:Resource mimeType="text/xml"><plain>x</plain></didl:Resource>"#,
        );
        let doc = parse_didl(src.as_bytes()).into_clean().unwrap();
        let out = String::from_utf8(canonical_bytes(&doc).unwrap()).unwrap();
        assert!(out.contains(" xmlns=\"\""));
        let embedded = format!("<env xmlns=\"urn:other\">{}</env>", out.split_once("?>\n").unwrap().1);
        let x = roxmltree::Document::parse(&embedded).unwrap();
        let plain = x.descendants().find(|n| n.has_tag_name("plain")).unwrap();
        assert_eq!(plain.tag_name().namespace().filter(|n| !n.is_empty()), None);
    }

    #[test]
    fn fragment_parsing() {
        let nodes = parse_fragment("<a:x xmlns:a=\"urn:a\">t<a:y/></a:x>").unwrap();
        assert_eq!(nodes.len(), 1);
        assert!(parse_fragment("<unclosed>").is_err());
        assert_eq!(
            String::from_utf8(canonical_fragment(&nodes)).unwrap(),
            "<ns1:x xmlns:ns1=\"urn:a\">t<ns1:y/></ns1:x>"
        );
    }
}
