//! Golden corpus: transcribed listings, constructed fatal cases and
//! model-level mutants of the Table 9 asset.
//!
//! Listing fixtures are embedded at compile time; `index.json` records where
//! each one came from and what parsing it must produce. Mutants are derived
//! on demand by applying a [`MutationOperator`] to the parsed Table 9 model
//! and serialized without the usual base64 check, so broken payloads survive
//! into the bytes.

use std::path::PathBuf;
use std::sync::OnceLock;

use base64::Engine;
use serde::Deserialize;

use crate::codec::{parse_didl, write_document, NamespaceTable, Style};
use crate::model::*;
use crate::resourceio::ReplayFetcher;
use crate::validator::Mode;

/// The Table 9 base every mutant is derived from.
pub const MUTANT_BASE: &str = "table9";

pub const PDF_URI: &str = "http://purl.lanl.gov/tech/pdf/015997845.pdf";
pub const PS_URI: &str = "http://purl.lanl.gov/tech/ps/015997845.ps";

/// Synthetic stand-ins for the documents behind the purl URIs. The base64
/// payloads in the listings decode to `PDF_STUB`.
pub const PDF_STUB: &[u8] = include_bytes!("../fixtures/blobs/purl.lanl.gov/tech/pdf/015997845.pdf");
pub const PS_STUB: &[u8] = include_bytes!("../fixtures/blobs/purl.lanl.gov/tech/ps/015997845.ps");

const INDEX: &str = include_str!("../fixtures/index.json");

/// Ingest manifest describing the complete sample asset: the DOI, its Dublin
/// Core record, the PDF by reference and by value, the PostScript by
/// reference.
pub const SAMPLE75_MANIFEST: &str = include_str!("../fixtures/manifests/sample75.json");

const FILES: &[(&str, &[u8])] = &[
    ("table2", include_bytes!("../fixtures/table2.xml")),
    ("table3", include_bytes!("../fixtures/table3.xml")),
    ("table4", include_bytes!("../fixtures/table4.xml")),
    ("table5", include_bytes!("../fixtures/table5.xml")),
    ("table6", include_bytes!("../fixtures/table6.xml")),
    ("table7", include_bytes!("../fixtures/table7.xml")),
    ("table8", include_bytes!("../fixtures/table8.xml")),
    ("table9", include_bytes!("../fixtures/table9.xml")),
    ("table10", include_bytes!("../fixtures/table10.xml")),
    ("sample75", include_bytes!("../fixtures/sample75.xml")),
    ("fatal-reference", include_bytes!("../fixtures/fatal-reference.xml")),
    ("fatal-empty", include_bytes!("../fixtures/fatal-empty.xml")),
    ("fatal-namespace", include_bytes!("../fixtures/fatal-namespace.xml")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// Transcribed from a numbered table.
    Table(u32),
    /// Transcribed from the complete sample document.
    Sample,
    Constructed,
    Mutant { base: String, operator: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    ParseOk,
    /// Validating the model yields exactly this rule, once, at `path`.
    RuleFinding { rule: String, path: NodePath, mode: Mode },
    Fatal { code: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureEntry {
    pub name: String,
    pub source: Source,
    pub expected: Expected,
    /// Node the fixture is about.
    pub focus: Option<NodePath>,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no fixture named {0:?}")]
pub struct NotFound(pub String);

#[derive(Deserialize)]
struct IndexFile {
    blobs: std::collections::BTreeMap<String, String>,
    fixtures: Vec<IndexEntry>,
}

#[derive(Deserialize)]
struct IndexEntry {
    name: String,
    file: String,
    source: String,
    expected: IndexExpected,
    focus: Option<String>,
    #[serde(default)]
    notes: String,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum IndexExpected {
    ParseOk,
    Fatal { code: String },
}

fn index() -> &'static IndexFile {
    static INDEX_FILE: OnceLock<IndexFile> = OnceLock::new();
    INDEX_FILE.get_or_init(|| serde_json::from_str(INDEX).expect("fixtures/index.json is well-formed"))
}

fn parse_source(s: &str) -> Source {
    if let Some(n) = s.strip_prefix("paper-table-") {
        Source::Table(n.parse().expect("table number"))
    } else if s.starts_with("paper-section") {
        Source::Sample
    } else {
        Source::Constructed
    }
}

fn file_entries() -> impl Iterator<Item = FixtureEntry> {
    index().fixtures.iter().map(|e| FixtureEntry {
        name: e.name.clone(),
        source: parse_source(&e.source),
        expected: match &e.expected {
            IndexExpected::ParseOk => Expected::ParseOk,
            IndexExpected::Fatal { code } => Expected::Fatal { code: code.clone() },
        },
        focus: e.focus.as_deref().and_then(NodePath::parse),
        notes: e.notes.clone(),
    })
}

pub fn mutant_name(operator: &str) -> String {
    format!("mutant-{MUTANT_BASE}-{operator}")
}

/// Every fixture: listing files in index order, then one mutant per operator.
pub fn catalog() -> Vec<FixtureEntry> {
    let mut out: Vec<FixtureEntry> = file_entries().collect();
    out.extend(mutation_operators().iter().map(|op| FixtureEntry {
        name: mutant_name(op.name),
        source: Source::Mutant { base: MUTANT_BASE.into(), operator: op.name.into() },
        expected: Expected::RuleFinding { rule: op.rule.into(), path: path(op.path), mode: op.mode },
        focus: Some(path(op.path)),
        notes: op.description.into(),
    }));
    out
}

pub fn entry(name: &str) -> Result<FixtureEntry, NotFound> {
    catalog().into_iter().find(|e| e.name == name).ok_or_else(|| NotFound(name.into()))
}

pub fn load_fixture(name: &str) -> Result<Vec<u8>, NotFound> {
    if let Some(bytes) = file_bytes(name) {
        return Ok(bytes.to_vec());
    }
    let doc = mutant(name).ok_or_else(|| NotFound(name.into()))?;
    Ok(write_document(&doc, &NamespaceTable::default(), Style::PRETTY))
}

fn file_bytes(name: &str) -> Option<&'static [u8]> {
    let file = &index().fixtures.iter().find(|e| e.name == name)?.file;
    let stem = file.strip_suffix(".xml")?;
    FILES.iter().find(|(n, _)| *n == stem).map(|(_, b)| *b)
}

/// Parsed model of a fixture that parses cleanly, or of a mutant.
pub fn load_document(name: &str) -> Result<DidlDocument, NotFound> {
    if let Some(doc) = mutant(name) {
        return Ok(doc);
    }
    let bytes = file_bytes(name).ok_or_else(|| NotFound(name.into()))?;
    parse_didl(bytes).into_clean().map_err(|_| NotFound(name.into()))
}

/// Directory holding the blob stubs, laid out as `<host>/<path>` so a
/// `LocalFetcher` rooted here resolves the purl URIs.
pub fn blob_root() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/blobs"))
}

/// A fetcher serving the blob stubs from memory.
pub fn blob_fetcher() -> ReplayFetcher {
    let mut f = ReplayFetcher::new();
    for uri in index().blobs.keys() {
        let bytes = match uri.as_str() {
            PDF_URI => PDF_STUB,
            PS_URI => PS_STUB,
            other => panic!("index.json lists blob {other} with no embedded copy"),
        };
        f.insert(uri.clone(), bytes);
    }
    f
}

/// A single targeted edit of the Table 9 model with its predicted finding.
pub struct MutationOperator {
    pub name: &'static str,
    pub rule: &'static str,
    /// Where the finding lands, in the mutated document.
    pub path: &'static str,
    pub mode: Mode,
    pub description: &'static str,
    pub apply: fn(&mut DidlDocument),
}

fn path(s: &str) -> NodePath {
    NodePath::parse(s).expect("operator paths are well-formed")
}

// Table 9 layout: Item /0 with descriptors /0/0 (identifier) and /0/1
// (Dublin Core), the PDF component /0/2 holding a by-reference resource
// /0/2/0 and a base64 resource /0/2/1, and the PS component /0/3.

fn item(doc: &mut DidlDocument) -> &mut Item {
    match &mut doc.root_entities[0] {
        Entity::Item(i) => i,
        _ => unreachable!("Table 9 root is an Item"),
    }
}

fn component(doc: &mut DidlDocument, index: usize) -> &mut Component {
    match &mut item(doc).children[index - 2] {
        Entity::Component(c) => c,
        _ => unreachable!("Table 9 item children are Components"),
    }
}

fn resource(doc: &mut DidlDocument, comp: usize, index: usize) -> &mut Payload {
    &mut component(doc, comp).resources[index].payload
}

fn identifier_payload(doc: &mut DidlDocument) -> &mut Payload {
    &mut item(doc).descriptors[0].statements[0].payload
}

fn first_element(p: &mut Payload) -> &mut crate::xml::XmlElement {
    let Content::Xml(nodes) = &mut p.content else { unreachable!("identifier statement holds XML") };
    nodes
        .iter_mut()
        .find_map(|n| match n {
            crate::xml::XmlNode::Element(e) => Some(e),
            _ => None,
        })
        .expect("identifier element")
}

pub fn mutation_operators() -> &'static [MutationOperator] {
    use Mode::{Deep, Shallow};
    static OPS: &[MutationOperator] = &[
        MutationOperator {
            name: "add-ref-to-base64",
            rule: "R1",
            path: "/0/2/1",
            mode: Shallow,
            description: "Base64 resource also given a ref attribute.",
            apply: |d| resource(d, 2, 1).reference = Some(PDF_URI.into()),
        },
        MutationOperator {
            name: "corrupt-base64",
            rule: "R2",
            path: "/0/2/1",
            mode: Shallow,
            description: "Base64 payload replaced by text outside the alphabet.",
            apply: |d| resource(d, 2, 1).content = Content::Text("!!not*base64!!".into()),
        },
        MutationOperator {
            name: "encoding-base32",
            rule: "R2",
            path: "/0/2/1",
            mode: Shallow,
            description: "encoding attribute set to an unsupported value.",
            apply: |d| resource(d, 2, 1).encoding = Some("base32".into()),
        },
        MutationOperator {
            name: "drop-mimetype",
            rule: "R3",
            path: "/0/3/0",
            mode: Shallow,
            description: "mimeType removed from the PS resource.",
            apply: |d| resource(d, 3, 0).mime_type.clear(),
        },
        MutationOperator {
            name: "drop-statement-mimetype",
            rule: "R3",
            path: "/0/0/0",
            mode: Shallow,
            description: "mimeType removed from the identifier statement.",
            apply: |d| identifier_payload(d).mime_type.clear(),
        },
        MutationOperator {
            name: "mixed-mimetypes",
            rule: "R4",
            path: "/0/2",
            mode: Shallow,
            description: "PDF component resources given different media types.",
            apply: |d| resource(d, 2, 0).mime_type = "application/postscript".into(),
        },
        MutationOperator {
            name: "empty-component",
            rule: "R4",
            path: "/0/3",
            mode: Shallow,
            description: "PS component stripped of its resource.",
            apply: |d| component(d, 3).resources.clear(),
        },
        MutationOperator {
            name: "component-at-root",
            rule: "R5",
            path: "/1",
            mode: Shallow,
            description: "PS component moved out of the Item to the document root.",
            apply: |d| {
                let c = item(d).children.remove(1);
                d.root_entities.push(c);
            },
        },
        MutationOperator {
            name: "container-in-item",
            rule: "R5",
            path: "/0/4",
            mode: Shallow,
            description: "Container wrapping a copy of the Item nested inside the Item.",
            apply: |d| {
                let copy = d.root_entities[0].clone();
                item(d).children.push(Entity::Container(Container { children: vec![copy], ..Default::default() }));
            },
        },
        MutationOperator {
            name: "duplicate-id",
            rule: "R6",
            path: "/0/3",
            mode: Shallow,
            description: "Item and PS component share one XML ID.",
            apply: |d| {
                item(d).xml_id = Some("uuid-dup".into());
                component(d, 3).xml_id = Some("uuid-dup".into());
            },
        },
        MutationOperator {
            name: "dangling-annotation",
            rule: "R6b",
            path: "/0/4",
            mode: Shallow,
            description: "Annotation targeting an XML ID that does not exist.",
            apply: |d| {
                item(d).annotations.push(Annotation {
                    target: "#uuid-missing".into(),
                    descriptors: vec![Descriptor::with_statement(Statement::new(Payload {
                        mime_type: "text/plain".into(),
                        content: Content::Text("note".into()),
                        ..Default::default()
                    }))],
                    ..Default::default()
                })
            },
        },
        MutationOperator {
            name: "identifier-not-uri",
            rule: "R7",
            path: "/0/0/0",
            mode: Shallow,
            description: "Identifier value with a space and no scheme.",
            apply: |d| {
                let e = first_element(identifier_payload(d));
                e.children = vec![crate::xml::XmlNode::Text("doi 10.1045/july95-arms".into())];
            },
        },
        MutationOperator {
            name: "relative-document-id",
            rule: "R8",
            path: "/",
            mode: Shallow,
            description: "DIDLDocumentId set to a relative reference.",
            apply: |d| d.document_id = Some("packages/july95-arms".into()),
        },
        MutationOperator {
            name: "flip-payload-byte",
            rule: "R9",
            path: "/0/2",
            mode: Deep,
            description: "One bit of the embedded PDF flipped, so it no longer matches the referenced copy.",
            apply: |d| {
                let p = resource(d, 2, 1);
                let Content::Text(t) = &p.content else { unreachable!("base64 payload is text") };
                let engine = base64::engine::general_purpose::STANDARD;
                let mut bytes = engine.decode(t).expect("fixture payload is valid base64");
                bytes[0] ^= 0x01;
                p.content = Content::Text(engine.encode(bytes));
            },
        },
        MutationOperator {
            name: "unknown-content-encoding",
            rule: "R10",
            path: "/0/3/0",
            mode: Shallow,
            description: "contentEncoding token outside the supported set.",
            apply: |d| resource(d, 3, 0).content_encoding = vec!["br".into()],
        },
        MutationOperator {
            name: "repeated-content-encoding",
            rule: "R10",
            path: "/0/3/0",
            mode: Shallow,
            description: "contentEncoding lists gzip twice.",
            apply: |d| resource(d, 3, 0).content_encoding = vec!["gzip".into(), "gzip".into()],
        },
        MutationOperator {
            name: "empty-subitem",
            rule: "W1",
            path: "/0/4",
            mode: Shallow,
            description: "Sub-Item with no components or children appended.",
            apply: |d| item(d).children.push(Entity::Item(Item::default())),
        },
    ];
    OPS
}

pub fn operator(name: &str) -> Option<&'static MutationOperator> {
    mutation_operators().iter().find(|op| op.name == name)
}

/// Parsed Table 9 model.
pub fn mutant_base() -> DidlDocument {
    load_document(MUTANT_BASE).expect("Table 9 fixture parses cleanly")
}

/// The mutant named `mutant-table9-<operator>`, as a model.
pub fn mutant(name: &str) -> Option<DidlDocument> {
    let op = name.strip_prefix("mutant-")?.strip_prefix(MUTANT_BASE)?.strip_prefix('-')?;
    let op = operator(op)?;
    let mut doc = mutant_base();
    (op.apply)(&mut doc);
    Some(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_index_entry_has_bytes() {
        for e in file_entries() {
            assert!(file_bytes(&e.name).is_some(), "{}", e.name);
        }
        assert_eq!(index().fixtures.len(), FILES.len());
    }

    #[test]
    fn unknown_name_is_not_found() {
        assert_eq!(load_fixture("table11"), Err(NotFound("table11".into())));
        assert!(load_fixture("mutant-table9-nonsense").is_err());
    }

    #[test]
    fn mutant_names_are_unique() {
        let mut names: Vec<_> = mutation_operators().iter().map(|o| o.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), mutation_operators().len());
    }
}
