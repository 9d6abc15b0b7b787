//! The Digital Item Declaration entity tree.
//!
//! A [`DidlDocument`] owns a forest of containers and items. Entities are
//! addressed by [`NodePath`], a `/`-joined list of child indices from the
//! document root. Child indices follow a fixed per-kind order:
//!
//! | parent      | children, in order                          |
//! |-------------|---------------------------------------------|
//! | document    | root entities                               |
//! | container   | descriptors, children                       |
//! | item        | descriptors, children, annotations          |
//! | component   | descriptors, resources, anchors             |
//! | descriptor  | nested descriptors, statements              |
//! | anchor      | descriptors, fragment                       |
//! | annotation  | descriptors, anchors                        |
//!
//! Condition, choice and assertion blocks are opaque and not addressable.

use std::collections::BTreeSet;
use std::fmt;

use crate::xml::{Attributes, XmlElement, XmlNode};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DidlDocument {
    pub document_id: Option<String>,
    pub document_created: Option<Timestamp>,
    pub didl_info: Option<Vec<XmlNode>>,
    pub foreign_attributes: Attributes,
    pub root_entities: Vec<Entity>,
}

/// A structural entity. The parser places whatever the source contains;
/// containment rules are checked by the validator.
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Container(Container),
    Item(Item),
    Component(Component),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub xml_id: Option<String>,
    pub descriptors: Vec<Descriptor>,
    pub children: Vec<Entity>,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Item {
    pub xml_id: Option<String>,
    pub conditions: Vec<XmlElement>,
    pub descriptors: Vec<Descriptor>,
    pub choice_groups: Vec<XmlElement>,
    pub children: Vec<Entity>,
    pub annotations: Vec<Annotation>,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Component {
    pub xml_id: Option<String>,
    pub conditions: Vec<XmlElement>,
    pub descriptors: Vec<Descriptor>,
    pub resources: Vec<Resource>,
    pub anchors: Vec<Anchor>,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptor {
    pub xml_id: Option<String>,
    pub conditions: Vec<XmlElement>,
    pub nested_descriptors: Vec<Descriptor>,
    pub statements: Vec<Statement>,
    pub foreign_attributes: Attributes,
}

/// Inline content of a `Resource` or `Statement` element.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Content {
    #[default]
    Empty,
    /// Character data. Base64 payloads are stored with whitespace removed.
    Text(String),
    /// Element (mixed) content.
    Xml(Vec<XmlNode>),
}

impl Content {
    pub fn is_empty(&self) -> bool {
        matches!(self, Content::Empty)
    }
}

/// Attributes and content shared by resources and statements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Payload {
    pub mime_type: String,
    pub reference: Option<String>,
    pub content: Content,
    pub encoding: Option<String>,
    pub content_encoding: Vec<String>,
}

/// How a payload is supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provision<'a> {
    ByReference(&'a str),
    ByValueText(&'a str),
    ByValueXml(&'a [XmlNode]),
}

/// Both a `ref` and inline content were given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProvisionConflict;

impl Payload {
    pub fn by_reference(mime_type: impl Into<String>, uri: impl Into<String>) -> Self {
        Payload { mime_type: mime_type.into(), reference: Some(uri.into()), ..Default::default() }
    }

    pub fn xml(mime_type: impl Into<String>, nodes: Vec<XmlNode>) -> Self {
        Payload { mime_type: mime_type.into(), content: Content::Xml(nodes), ..Default::default() }
    }

    pub fn provision(&self) -> Result<Provision<'_>, ProvisionConflict> {
        match (&self.reference, &self.content) {
            (Some(r), Content::Empty) => Ok(Provision::ByReference(r)),
            (Some(_), _) => Err(ProvisionConflict),
            (None, Content::Empty) => Ok(Provision::ByValueText("")),
            (None, Content::Text(t)) => Ok(Provision::ByValueText(t)),
            (None, Content::Xml(n)) => Ok(Provision::ByValueXml(n)),
        }
    }

    pub fn is_base64(&self) -> bool {
        self.encoding.as_deref() == Some("base64")
    }

    /// Top-level elements of inline XML content.
    pub fn xml_elements(&self) -> impl Iterator<Item = &XmlElement> {
        let nodes: &[XmlNode] = match &self.content {
            Content::Xml(n) => n,
            _ => &[],
        };
        nodes.iter().filter_map(XmlNode::as_element)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Statement {
    pub payload: Payload,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Resource {
    pub payload: Payload,
    pub foreign_attributes: Attributes,
}

impl Statement {
    pub fn new(payload: Payload) -> Self {
        Statement { payload, foreign_attributes: Attributes::new() }
    }
}

impl Resource {
    pub fn new(payload: Payload) -> Self {
        Resource { payload, foreign_attributes: Attributes::new() }
    }
}

impl Descriptor {
    pub fn with_statement(statement: Statement) -> Self {
        Descriptor { statements: vec![statement], ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Anchor {
    pub xml_id: Option<String>,
    pub conditions: Vec<XmlElement>,
    pub descriptors: Vec<Descriptor>,
    pub fragment: Fragment,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fragment {
    pub fragment_id: String,
    pub foreign_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Annotation {
    pub xml_id: Option<String>,
    pub target: String,
    pub descriptors: Vec<Descriptor>,
    pub anchors: Vec<Anchor>,
    pub assertions: Vec<XmlElement>,
    pub foreign_attributes: Attributes,
}

/// Child-index address of a node; the empty path is the document root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<NodePath> {
        let mut v = self.0.clone();
        v.pop()?;
        Some(NodePath(v))
    }

    pub fn parse(s: &str) -> Option<NodePath> {
        if s == "/" {
            return Some(NodePath::root());
        }
        let rest = s.strip_prefix('/')?;
        rest.split('/').map(|p| p.parse().ok()).collect::<Option<Vec<_>>>().map(NodePath)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Container,
    Item,
    Component,
    Descriptor,
    Statement,
    Resource,
    Anchor,
    Fragment,
    Annotation,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Container => "container",
            EntityKind::Item => "item",
            EntityKind::Component => "component",
            EntityKind::Descriptor => "descriptor",
            EntityKind::Statement => "statement",
            EntityKind::Resource => "resource",
            EntityKind::Anchor => "anchor",
            EntityKind::Fragment => "fragment",
            EntityKind::Annotation => "annotation",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Borrowed view of any addressable node.
#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Container(&'a Container),
    Item(&'a Item),
    Component(&'a Component),
    Descriptor(&'a Descriptor),
    Statement(&'a Statement),
    Resource(&'a Resource),
    Anchor(&'a Anchor),
    Fragment(&'a Fragment),
    Annotation(&'a Annotation),
}

impl<'a> From<&'a Entity> for NodeRef<'a> {
    fn from(e: &'a Entity) -> Self {
        match e {
            Entity::Container(c) => NodeRef::Container(c),
            Entity::Item(i) => NodeRef::Item(i),
            Entity::Component(c) => NodeRef::Component(c),
        }
    }
}

/// Abstract Model entity name of a node.
pub fn entity_kind(node: NodeRef<'_>) -> EntityKind {
    match node {
        NodeRef::Container(_) => EntityKind::Container,
        NodeRef::Item(_) => EntityKind::Item,
        NodeRef::Component(_) => EntityKind::Component,
        NodeRef::Descriptor(_) => EntityKind::Descriptor,
        NodeRef::Statement(_) => EntityKind::Statement,
        NodeRef::Resource(_) => EntityKind::Resource,
        NodeRef::Anchor(_) => EntityKind::Anchor,
        NodeRef::Fragment(_) => EntityKind::Fragment,
        NodeRef::Annotation(_) => EntityKind::Annotation,
    }
}

impl<'a> NodeRef<'a> {
    pub fn kind(&self) -> EntityKind {
        entity_kind(*self)
    }

    pub fn xml_id(&self) -> Option<&'a str> {
        match self {
            NodeRef::Container(c) => c.xml_id.as_deref(),
            NodeRef::Item(i) => i.xml_id.as_deref(),
            NodeRef::Component(c) => c.xml_id.as_deref(),
            NodeRef::Descriptor(d) => d.xml_id.as_deref(),
            NodeRef::Anchor(a) => a.xml_id.as_deref(),
            NodeRef::Annotation(a) => a.xml_id.as_deref(),
            NodeRef::Statement(_) | NodeRef::Resource(_) | NodeRef::Fragment(_) => None,
        }
    }

    pub fn descriptors(&self) -> &'a [Descriptor] {
        match self {
            NodeRef::Container(c) => &c.descriptors,
            NodeRef::Item(i) => &i.descriptors,
            NodeRef::Component(c) => &c.descriptors,
            NodeRef::Descriptor(d) => &d.nested_descriptors,
            NodeRef::Anchor(a) => &a.descriptors,
            NodeRef::Annotation(a) => &a.descriptors,
            NodeRef::Statement(_) | NodeRef::Resource(_) | NodeRef::Fragment(_) => &[],
        }
    }

    /// Addressable children in path-index order.
    pub fn children(&self) -> Vec<NodeRef<'a>> {
        let mut out: Vec<NodeRef<'a>> = Vec::new();
        match *self {
            NodeRef::Container(c) => {
                out.extend(c.descriptors.iter().map(NodeRef::Descriptor));
                out.extend(c.children.iter().map(NodeRef::from));
            }
            NodeRef::Item(i) => {
                out.extend(i.descriptors.iter().map(NodeRef::Descriptor));
                out.extend(i.children.iter().map(NodeRef::from));
                out.extend(i.annotations.iter().map(NodeRef::Annotation));
            }
            NodeRef::Component(c) => {
                out.extend(c.descriptors.iter().map(NodeRef::Descriptor));
                out.extend(c.resources.iter().map(NodeRef::Resource));
                out.extend(c.anchors.iter().map(NodeRef::Anchor));
            }
            NodeRef::Descriptor(d) => {
                out.extend(d.nested_descriptors.iter().map(NodeRef::Descriptor));
                out.extend(d.statements.iter().map(NodeRef::Statement));
            }
            NodeRef::Anchor(a) => {
                out.extend(a.descriptors.iter().map(NodeRef::Descriptor));
                out.push(NodeRef::Fragment(&a.fragment));
            }
            NodeRef::Annotation(a) => {
                out.extend(a.descriptors.iter().map(NodeRef::Descriptor));
                out.extend(a.anchors.iter().map(NodeRef::Anchor));
            }
            NodeRef::Statement(_) | NodeRef::Resource(_) | NodeRef::Fragment(_) => {}
        }
        out
    }
}

impl Component {
    /// Path of the `index`-th resource given the component's own path.
    pub fn resource_path(&self, component: &NodePath, index: usize) -> NodePath {
        component.child(self.descriptors.len() + index)
    }
}

impl DidlDocument {
    pub fn new(root_entities: Vec<Entity>) -> Self {
        DidlDocument { root_entities, ..Default::default() }
    }

    /// Every addressable node with its path, in document (pre-)order.
    pub fn walk(&self) -> Vec<(NodePath, NodeRef<'_>)> {
        let mut out = Vec::new();
        let mut stack: Vec<(NodePath, NodeRef<'_>)> = self
            .root_entities
            .iter()
            .enumerate()
            .rev()
            .map(|(i, e)| (NodePath(vec![i]), NodeRef::from(e)))
            .collect();
        while let Some((path, node)) = stack.pop() {
            for (i, child) in node.children().into_iter().enumerate().rev() {
                stack.push((path.child(i), child));
            }
            out.push((path, node));
        }
        out
    }

    pub fn node_at(&self, path: &NodePath) -> Option<NodeRef<'_>> {
        let (first, rest) = path.0.split_first()?;
        let mut node = NodeRef::from(self.root_entities.get(*first)?);
        for i in rest {
            node = node.children().get(*i).copied()?;
        }
        Some(node)
    }

    /// Mutable access to the descriptor list of the node at `path`, for
    /// kinds that carry descriptors.
    pub fn descriptors_mut(&mut self, path: &NodePath) -> Option<&mut Vec<Descriptor>> {
        match self.node_mut(path)? {
            NodeMut::Container(c) => Some(&mut c.descriptors),
            NodeMut::Item(i) => Some(&mut i.descriptors),
            NodeMut::Component(c) => Some(&mut c.descriptors),
            NodeMut::Descriptor(d) => Some(&mut d.nested_descriptors),
            NodeMut::Anchor(a) => Some(&mut a.descriptors),
            NodeMut::Annotation(a) => Some(&mut a.descriptors),
            NodeMut::Statement(_) | NodeMut::Resource(_) | NodeMut::Fragment(_) => None,
        }
    }

    pub fn node_mut(&mut self, path: &NodePath) -> Option<NodeMut<'_>> {
        let (first, rest) = path.0.split_first()?;
        let mut node = NodeMut::from(self.root_entities.get_mut(*first)?);
        for &i in rest {
            node = node.into_child(i)?;
        }
        Some(node)
    }

    /// Node bearing the given XML ID, if any.
    pub fn find_by_id(&self, xml_id: &str) -> Option<NodeRef<'_>> {
        self.find_path_by_id(xml_id).and_then(|p| self.node_at(&p))
    }

    pub fn find_path_by_id(&self, xml_id: &str) -> Option<NodePath> {
        self.walk().into_iter().find(|(_, n)| n.xml_id() == Some(xml_id)).map(|(p, _)| p)
    }

    /// All XML IDs in document order (duplicates included).
    pub fn xml_ids(&self) -> Vec<(NodePath, &str)> {
        self.walk().into_iter().filter_map(|(p, n)| n.xml_id().map(|id| (p, id))).collect()
    }

    /// Structural invariants the parser guarantees for every document it
    /// returns. Validator-level constraints are not included.
    pub fn construction_violations(&self) -> Vec<(NodePath, String)> {
        let mut out = Vec::new();
        if self.root_entities.is_empty() {
            out.push((NodePath::root(), "document has no root entities".to_string()));
        }
        let mut seen = BTreeSet::new();
        for (path, node) in self.walk() {
            if let Some(id) = node.xml_id() {
                if !seen.insert(id) {
                    out.push((path.clone(), format!("duplicate XML ID {id:?}")));
                }
            }
            match node {
                NodeRef::Descriptor(d) if d.statements.is_empty() && d.nested_descriptors.is_empty() => {
                    out.push((path, "descriptor has no statement or nested descriptor".to_string()));
                }
                NodeRef::Fragment(f) if f.fragment_id.is_empty() => {
                    out.push((path, "fragment has an empty fragment id".to_string()));
                }
                _ => {}
            }
        }
        out
    }
}

/// Mutable counterpart of [`NodeRef`].
#[derive(Debug)]
pub enum NodeMut<'a> {
    Container(&'a mut Container),
    Item(&'a mut Item),
    Component(&'a mut Component),
    Descriptor(&'a mut Descriptor),
    Statement(&'a mut Statement),
    Resource(&'a mut Resource),
    Anchor(&'a mut Anchor),
    Fragment(&'a mut Fragment),
    Annotation(&'a mut Annotation),
}

impl<'a> From<&'a mut Entity> for NodeMut<'a> {
    fn from(e: &'a mut Entity) -> Self {
        match e {
            Entity::Container(c) => NodeMut::Container(c),
            Entity::Item(i) => NodeMut::Item(i),
            Entity::Component(c) => NodeMut::Component(c),
        }
    }
}

// Ok(element) when `index` falls in `list`, else Err(offset past its end).
fn pick<T>(list: &mut [T], index: usize) -> Result<&mut T, usize> {
    let len = list.len();
    if index < len {
        Ok(&mut list[index])
    } else {
        Err(index - len)
    }
}

impl<'a> NodeMut<'a> {
    fn into_child(self, i: usize) -> Option<NodeMut<'a>> {
        // Walk the same ordered segments as `NodeRef::children`.
        match self {
            NodeMut::Container(c) => match pick(&mut c.descriptors, i) {
                Ok(d) => Some(NodeMut::Descriptor(d)),
                Err(i) => c.children.get_mut(i).map(NodeMut::from),
            },
            NodeMut::Item(it) => {
                let nd = it.descriptors.len();
                let nc = it.children.len();
                if i < nd {
                    it.descriptors.get_mut(i).map(NodeMut::Descriptor)
                } else if i < nd + nc {
                    it.children.get_mut(i - nd).map(NodeMut::from)
                } else {
                    it.annotations.get_mut(i - nd - nc).map(NodeMut::Annotation)
                }
            }
            NodeMut::Component(c) => {
                let nd = c.descriptors.len();
                let nr = c.resources.len();
                if i < nd {
                    c.descriptors.get_mut(i).map(NodeMut::Descriptor)
                } else if i < nd + nr {
                    c.resources.get_mut(i - nd).map(NodeMut::Resource)
                } else {
                    c.anchors.get_mut(i - nd - nr).map(NodeMut::Anchor)
                }
            }
            NodeMut::Descriptor(d) => match pick(&mut d.nested_descriptors, i) {
                Ok(n) => Some(NodeMut::Descriptor(n)),
                Err(i) => d.statements.get_mut(i).map(NodeMut::Statement),
            },
            NodeMut::Anchor(a) => match pick(&mut a.descriptors, i) {
                Ok(d) => Some(NodeMut::Descriptor(d)),
                Err(0) => Some(NodeMut::Fragment(&mut a.fragment)),
                Err(_) => None,
            },
            NodeMut::Annotation(a) => match pick(&mut a.descriptors, i) {
                Ok(d) => Some(NodeMut::Descriptor(d)),
                Err(i) => a.anchors.get_mut(i).map(NodeMut::Anchor),
            },
            NodeMut::Statement(_) | NodeMut::Resource(_) | NodeMut::Fragment(_) => None,
        }
    }
}

/// Structural relationship that follows from the tree itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    HasResource,
    IsPartOfItem,
    HasIdentifier,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::HasResource => "hasResource",
            Predicate::IsPartOfItem => "isPartOfItem",
            Predicate::HasIdentifier => "hasIdentifier",
        }
    }
}

/// Subject or object of a relationship triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Node with an XML ID.
    Id(String),
    /// Node without an XML ID.
    Path(NodePath),
    /// An identifier value.
    Uri(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Id(id) => write!(f, "#{id}"),
            Term::Path(p) => write!(f, "{p}"),
            Term::Uri(u) => write!(f, "<{u}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationshipTriple {
    pub subject: Term,
    pub predicate: Predicate,
    pub object: Term,
}

fn term_for(path: &NodePath, node: NodeRef<'_>) -> Term {
    match node.xml_id() {
        Some(id) => Term::Id(id.to_string()),
        None => Term::Path(path.clone()),
    }
}

/// Relationships implied by document structure, in document order.
///
/// Identifiers are taken from DII `Identifier` statements in the node's own
/// descriptors (nested descriptors included).
pub fn derive_relationships(doc: &DidlDocument) -> Vec<RelationshipTriple> {
    let mut out = Vec::new();
    for (path, node) in doc.walk() {
        let subject = || term_for(&path, node);
        if matches!(node, NodeRef::Container(_) | NodeRef::Item(_) | NodeRef::Component(_) | NodeRef::Anchor(_)) {
            for value in crate::dii::identifier_values(node.descriptors()) {
                out.push(RelationshipTriple { subject: subject(), predicate: Predicate::HasIdentifier, object: Term::Uri(value) });
            }
        }
        match node {
            NodeRef::Item(item) => {
                for (i, child) in item.children.iter().enumerate() {
                    if let Entity::Item(_) = child {
                        let child_path = path.child(item.descriptors.len() + i);
                        out.push(RelationshipTriple {
                            subject: term_for(&child_path, NodeRef::from(child)),
                            predicate: Predicate::IsPartOfItem,
                            object: subject(),
                        });
                    }
                }
            }
            NodeRef::Component(comp) => {
                for i in 0..comp.resources.len() {
                    out.push(RelationshipTriple {
                        subject: subject(),
                        predicate: Predicate::HasResource,
                        object: Term::Path(comp.resource_path(&path, i)),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn component(n: usize) -> Component {
        Component {
            resources: (0..n).map(|i| Resource::new(Payload::by_reference("application/pdf", format!("http://x/{i}")))).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn paths_follow_kind_order() {
        let desc = Descriptor::with_statement(Statement::new(Payload::xml("text/xml", vec![])));
        let item = Item {
            xml_id: Some("it".into()),
            descriptors: vec![desc.clone(), desc],
            children: vec![Entity::Component(component(1)), Entity::Component(component(2))],
            ..Default::default()
        };
        let doc = DidlDocument::new(vec![Entity::Item(item)]);
        let paths: Vec<String> = doc.walk().iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(paths, ["/0", "/0/0", "/0/0/0", "/0/1", "/0/1/0", "/0/2", "/0/2/0", "/0/3", "/0/3/0", "/0/3/1"]);
        let p = NodePath::parse("/0/3/1").unwrap();
        assert_eq!(doc.node_at(&p).unwrap().kind(), EntityKind::Resource);
        assert_eq!(p.to_string(), "/0/3/1");
        assert_eq!(NodePath::parse("/").unwrap(), NodePath::root());
        assert!(NodePath::parse("0/1").is_none());
    }

    #[test]
    fn node_mut_matches_node_at() {
        let anchor = Anchor { fragment: Fragment { fragment_id: "p1".into(), ..Default::default() }, ..Default::default() };
        let mut comp = component(2);
        comp.anchors.push(anchor);
        let mut doc = DidlDocument::new(vec![Entity::Item(Item { children: vec![Entity::Component(comp)], ..Default::default() })]);
        let paths: Vec<NodePath> = doc.walk().into_iter().map(|(p, _)| p).collect();
        for p in paths {
            let kind = doc.node_at(&p).unwrap().kind();
            let kind_mut = match doc.node_mut(&p).unwrap() {
                NodeMut::Item(_) => EntityKind::Item,
                NodeMut::Component(_) => EntityKind::Component,
                NodeMut::Resource(_) => EntityKind::Resource,
                NodeMut::Anchor(_) => EntityKind::Anchor,
                NodeMut::Fragment(_) => EntityKind::Fragment,
                other => panic!("unexpected {other:?}"),
            };
            assert_eq!(kind, kind_mut, "{p}");
        }
        assert!(doc.node_mut(&NodePath(vec![0, 0, 9])).is_none());
    }

    #[test]
    fn find_by_id_absent() {
        let doc = DidlDocument::new(vec![Entity::Item(Item::default())]);
        assert!(doc.find_by_id("no-such-id").is_none());
    }

    #[test]
    fn empty_item_has_no_relationships() {
        let doc = DidlDocument::new(vec![Entity::Item(Item::default())]);
        assert!(derive_relationships(&doc).is_empty());
    }

    #[test]
    fn nested_items_are_part_of_parent() {
        let inner = Item { xml_id: Some("inner".into()), ..Default::default() };
        let outer = Item { xml_id: Some("outer".into()), children: vec![Entity::Item(inner)], ..Default::default() };
        let doc = DidlDocument::new(vec![Entity::Item(outer)]);
        assert_eq!(
            derive_relationships(&doc),
            vec![RelationshipTriple {
                subject: Term::Id("inner".into()),
                predicate: Predicate::IsPartOfItem,
                object: Term::Id("outer".into())
            }]
        );
    }

    #[test]
    fn provision_matrix() {
        let mut p = Payload::by_reference("application/pdf", "http://x");
        assert_eq!(p.provision(), Ok(Provision::ByReference("http://x")));
        p.content = Content::Text("abc".into());
        assert_eq!(p.provision(), Err(ProvisionConflict));
        p.reference = None;
        assert_eq!(p.provision(), Ok(Provision::ByValueText("abc")));
        p.content = Content::Empty;
        assert_eq!(p.provision(), Ok(Provision::ByValueText("")));
    }

    #[test]
    fn construction_violations_detects_duplicates_and_empty_descriptors() {
        let item = Item {
            xml_id: Some("a".into()),
            descriptors: vec![Descriptor { xml_id: Some("a".into()), ..Default::default() }],
            ..Default::default()
        };
        let v = DidlDocument::new(vec![Entity::Item(item)]).construction_violations();
        assert_eq!(v.len(), 2);
        assert!(DidlDocument::default().construction_violations().iter().any(|(p, _)| *p == NodePath::root()));
    }
}
