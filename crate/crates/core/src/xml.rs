//! A small owned XML tree for foreign-namespace content, plus the writer
//! used by every serializer in the crate.
//!
//! Equality on [`XmlElement`] ignores the prefix a node was spelled with in
//! its source document; only namespace URIs and local names are significant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";

/// Expanded XML name: optional namespace URI plus local part.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QName {
    pub ns: Option<String>,
    pub local: String,
}

impl QName {
    pub fn new(ns: impl Into<String>, local: impl Into<String>) -> Self {
        QName { ns: Some(ns.into()), local: local.into() }
    }

    pub fn local(local: impl Into<String>) -> Self {
        QName { ns: None, local: local.into() }
    }

    pub fn is(&self, ns: &str, local: &str) -> bool {
        self.ns.as_deref() == Some(ns) && self.local == local
    }
}

impl fmt::Display for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.ns {
            Some(ns) => write!(f, "{{{}}}{}", ns, self.local),
            None => f.write_str(&self.local),
        }
    }
}

pub type Attributes = BTreeMap<QName, String>;

#[derive(Debug, Clone)]
pub struct XmlElement {
    pub name: QName,
    /// Prefix used in the source document, if any. Serializers may reuse it.
    pub prefix_hint: Option<String>,
    pub attributes: Attributes,
    pub children: Vec<XmlNode>,
}

impl PartialEq for XmlElement {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.attributes == other.attributes && self.children == other.children
    }
}

impl XmlElement {
    pub fn new(name: QName) -> Self {
        XmlElement { name, prefix_hint: None, attributes: Attributes::new(), children: Vec::new() }
    }

    pub fn with_hint(mut self, prefix: &str) -> Self {
        self.prefix_hint = Some(prefix.to_string());
        self
    }

    pub fn with_attr(mut self, name: QName, value: impl Into<String>) -> Self {
        self.attributes.insert(name, value.into());
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlNode::Text(text.into()));
        self
    }

    pub fn with_child(mut self, child: XmlElement) -> Self {
        self.children.push(XmlNode::Element(child));
        self
    }

    pub fn attr(&self, ns: Option<&str>, local: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k.ns.as_deref() == ns && k.local == local)
            .map(|(_, v)| v.as_str())
    }

    /// Concatenated character data of the direct text children.
    pub fn text(&self) -> String {
        self.children
            .iter()
            .filter_map(|c| match c {
                XmlNode::Text(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn elements(&self) -> impl Iterator<Item = &XmlElement> {
        self.children.iter().filter_map(XmlNode::as_element)
    }

    /// Depth-first, document-order iteration over this element and all
    /// descendant elements.
    pub fn descendants(&self) -> Vec<&XmlElement> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            out.push(e);
            for c in e.elements().collect::<Vec<_>>().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum XmlNode {
    Element(XmlElement),
    Text(String),
    Comment(String),
}

impl XmlNode {
    pub fn as_element(&self) -> Option<&XmlElement> {
        match self {
            XmlNode::Element(e) => Some(e),
            _ => None,
        }
    }
}

/// Drops whitespace-only text next to element children and merges adjacent
/// text runs. Parsed content is always in this form.
pub fn normalize_children(children: Vec<XmlNode>) -> Vec<XmlNode> {
    let has_element = children.iter().any(|c| matches!(c, XmlNode::Element(_)));
    let mut out: Vec<XmlNode> = Vec::with_capacity(children.len());
    for child in children {
        match child {
            XmlNode::Text(t) if t.is_empty() => {}
            XmlNode::Text(t) if has_element && t.chars().all(is_xml_space) => {}
            XmlNode::Text(t) => {
                if let Some(XmlNode::Text(prev)) = out.last_mut() {
                    prev.push_str(&t);
                } else {
                    out.push(XmlNode::Text(t));
                }
            }
            other => out.push(other),
        }
    }
    out
}

pub fn is_xml_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r')
}

pub fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

pub fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

/// Collects namespace URIs in first-use document order together with the
/// first prefix hint seen for each.
#[derive(Debug, Default)]
pub struct NamespaceUsage {
    order: Vec<(String, Option<String>)>,
    seen: BTreeSet<String>,
    pub has_unqualified_element: bool,
}

impl NamespaceUsage {
    pub fn note(&mut self, ns: Option<&str>, hint: Option<&str>) {
        let Some(ns) = ns else { return };
        if ns == XML_NS {
            return;
        }
        if self.seen.insert(ns.to_string()) {
            self.order.push((ns.to_string(), hint.map(str::to_string)));
        } else if let Some(h) = hint {
            if let Some(entry) = self.order.iter_mut().find(|(n, _)| n == ns) {
                entry.1.get_or_insert_with(|| h.to_string());
            }
        }
    }

    pub fn note_element(&mut self, e: &XmlElement) {
        for el in e.descendants() {
            if el.name.ns.is_none() {
                self.has_unqualified_element = true;
            }
            self.note(el.name.ns.as_deref(), el.prefix_hint.as_deref());
            for k in el.attributes.keys() {
                self.note(k.ns.as_deref(), None);
            }
        }
    }

    pub fn note_nodes(&mut self, nodes: &[XmlNode]) {
        for n in nodes {
            if let XmlNode::Element(e) = n {
                self.note_element(e);
            }
        }
    }

    pub fn note_attributes(&mut self, attrs: &Attributes) {
        for k in attrs.keys() {
            self.note(k.ns.as_deref(), None);
        }
    }
}

/// Namespace URI to prefix assignment for one serialized unit.
#[derive(Debug, Clone)]
pub struct PrefixMap {
    by_ns: BTreeMap<String, String>,
    /// Declarations in emission order (sorted by prefix).
    decls: Vec<(String, String)>,
    undeclare_default: bool,
}

impl PrefixMap {
    /// `fixed` pins well-known namespaces to stable prefixes. Other namespaces
    /// take their source hint when `use_hints` is set and the hint is free,
    /// else `ns1`, `ns2`, ... in first-use order.
    pub fn assign(usage: &NamespaceUsage, fixed: &[(&str, &str)], use_hints: bool) -> Self {
        let mut by_ns = BTreeMap::new();
        let mut taken: BTreeSet<String> = fixed.iter().map(|(_, p)| p.to_string()).collect();
        let mut counter = 0usize;
        for (ns, hint) in &usage.order {
            if let Some((_, p)) = fixed.iter().find(|(n, _)| n == ns) {
                by_ns.insert(ns.clone(), p.to_string());
                continue;
            }
            let hinted = hint
                .as_ref()
                .filter(|h| use_hints && is_ncname(h) && !h.to_ascii_lowercase().starts_with("xml") && !taken.contains(*h));
            let prefix = match hinted {
                Some(h) => h.clone(),
                None => loop {
                    counter += 1;
                    let candidate = format!("ns{counter}");
                    if !taken.contains(&candidate) {
                        break candidate;
                    }
                },
            };
            taken.insert(prefix.clone());
            by_ns.insert(ns.clone(), prefix);
        }
        let mut decls: Vec<(String, String)> = by_ns.iter().map(|(n, p)| (p.clone(), n.clone())).collect();
        decls.sort();
        PrefixMap { by_ns, decls, undeclare_default: usage.has_unqualified_element }
    }

    pub fn qualify(&self, name: &QName) -> String {
        match name.ns.as_deref() {
            None => name.local.clone(),
            Some(XML_NS) => format!("xml:{}", name.local),
            Some(ns) => match self.by_ns.get(ns) {
                Some(p) => format!("{}:{}", p, name.local),
                // Callers always collect usage first; unreachable in practice.
                None => name.local.clone(),
            },
        }
    }
}

fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Streaming writer over a [`PrefixMap`]. `pretty` indents element-only
/// content with two spaces; text-bearing content is never reflowed.
pub struct XmlWriter<'a> {
    pub buf: String,
    pub pretty: bool,
    prefixes: &'a PrefixMap,
    level: usize,
}

impl<'a> XmlWriter<'a> {
    pub fn new(prefixes: &'a PrefixMap, pretty: bool) -> Self {
        XmlWriter { buf: String::new(), pretty, prefixes, level: 0 }
    }

    pub fn declaration(&mut self) {
        self.buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    }

    pub fn qualify(&self, name: &QName) -> String {
        self.prefixes.qualify(name)
    }

    pub fn newline(&mut self) {
        if self.pretty {
            self.buf.push('\n');
            for _ in 0..self.level {
                self.buf.push_str("  ");
            }
        }
    }

    pub fn indent(&mut self) {
        self.level += 1;
    }

    pub fn dedent(&mut self) {
        self.level = self.level.saturating_sub(1);
    }

    /// Writes `<name attrs...` and, when `declare` is set, every namespace
    /// declaration of the map. The tag is left open; finish with
    /// [`Self::close_start`].
    pub fn open(&mut self, name: &QName, declare: bool) {
        self.buf.push('<');
        let q = self.qualify(name);
        self.buf.push_str(&q);
        if declare {
            if self.prefixes.undeclare_default {
                self.buf.push_str(" xmlns=\"\"");
            }
            for (p, ns) in &self.prefixes.decls {
                self.buf.push_str(" xmlns:");
                self.buf.push_str(p);
                self.buf.push_str("=\"");
                escape_attr(ns, &mut self.buf);
                self.buf.push('"');
            }
        }
    }

    pub fn attr(&mut self, name: &QName, value: &str) {
        self.buf.push(' ');
        let q = self.qualify(name);
        self.buf.push_str(&q);
        self.buf.push_str("=\"");
        escape_attr(value, &mut self.buf);
        self.buf.push('"');
    }

    pub fn close_start(&mut self, empty: bool) {
        self.buf.push_str(if empty { "/>" } else { ">" });
    }

    pub fn end(&mut self, name: &QName) {
        self.buf.push_str("</");
        let q = self.qualify(name);
        self.buf.push_str(&q);
        self.buf.push('>');
    }

    pub fn text(&mut self, s: &str) {
        escape_text(s, &mut self.buf);
    }

    pub fn element(&mut self, e: &XmlElement, declare: bool) {
        self.open(&e.name, declare);
        for (k, v) in &e.attributes {
            self.attr(k, v);
        }
        if e.children.is_empty() {
            self.close_start(true);
            return;
        }
        self.close_start(false);
        self.children(&e.children);
        self.end(&e.name);
    }

    /// Writes content nodes; indents only element-only content.
    pub fn children(&mut self, nodes: &[XmlNode]) {
        let indentable = nodes.iter().any(|n| matches!(n, XmlNode::Element(_)))
            && !nodes.iter().any(|n| matches!(n, XmlNode::Text(_)));
        if self.pretty && indentable {
            self.indent();
            for n in nodes {
                self.newline();
                self.node(n, false);
            }
            self.dedent();
            self.newline();
        } else {
            for n in nodes {
                self.node(n, false);
            }
        }
    }

    pub fn node(&mut self, n: &XmlNode, declare: bool) {
        match n {
            XmlNode::Element(e) => self.element(e, declare),
            XmlNode::Text(t) => self.text(t),
            XmlNode::Comment(c) => {
                self.buf.push_str("<!--");
                self.buf.push_str(c);
                self.buf.push_str("-->");
            }
        }
    }
}
