//! Append-only package store.
//!
//! Layout under the root:
//!
//! ```text
//! packages/<first two hex digits of uuid>/<uuid>.didl.xml
//! index.log     created \t package_id \t content_id ...   one line per package
//! ```
//!
//! A package is committed when its index line, newline included, is on
//! disk. The package file is renamed into place before that line is
//! written, so every indexed package has its file. On open the log is
//! replayed, a torn final line is cut off, and package files the log does
//! not mention (left by a crash before commit) are removed along with any
//! temporaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use didlkit_core::codec::{canonical_bytes, parse_didl, serialize_node, CodecError, Style};
use didlkit_core::dii::{extract_identifiers, find_by_identifier, DiiError};
use didlkit_core::integrity::SigningKeyPair;
use didlkit_core::model::{EntityKind, NodePath};
use didlkit_core::resourceio::{Fetcher, Materializer};
use didlkit_core::syntax::{format_timestamp, parse_timestamp, truncate_seconds};
use didlkit_core::validator::{validate, ValidationReport};
use didlkit_core::Timestamp;
use uuid::Uuid;

use crate::builder::{build_package, package_uuid, BuildContext, BuildError};
use crate::clock::{Clock, IdSource};
use crate::failpoint;
use crate::manifest::AssetManifest;

pub const DEFAULT_AUTHORITY: &str = "didlkit-repo";
pub const INDEX_FILE: &str = "index.log";
pub const PACKAGES_DIR: &str = "packages";

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("package failed validation:\n{}", .0.to_text())]
    ValidationFailed(ValidationReport),
    #[error("package id {0} is already taken; the id source is repeating itself")]
    IdCollision(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad resumption cursor {0:?}")]
    BadCursor(String),
    #[error("from {from} is after until {until}")]
    BadRange { from: String, until: String },
    #[error("index.log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("stored package {package_id} does not parse: {message}")]
    Unreadable { package_id: String, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Identifier(#[from] DiiError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RepoError + '_ {
    move |source| RepoError::Io { path: path.to_path_buf(), source }
}

pub struct StoreConfig {
    /// Authority segment of minted `info:` package ids.
    pub authority: String,
    /// Signs component seals when set.
    pub signing_key: Option<SigningKeyPair>,
    /// Limit on any one materialized datastream.
    pub max_bytes: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { authority: DEFAULT_AUTHORITY.into(), signing_key: None, max_bytes: didlkit_core::resourceio::DEFAULT_MAX_BYTES }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct PackageHeader {
    pub package_id: String,
    #[serde(with = "ts")]
    pub created: Timestamp,
    pub content_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageRecord {
    pub package_id: String,
    pub created: Timestamp,
    pub document_bytes: Vec<u8>,
    pub content_ids: Vec<String>,
    pub item_xml_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub headers: Vec<PackageHeader>,
    pub next: Option<String>,
}

/// What opening the store had to clean up.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub torn_tail: bool,
    pub removed: Vec<PathBuf>,
}

mod ts {
    use didlkit_core::syntax::format_timestamp;
    use didlkit_core::Timestamp;

    pub fn serialize<S: serde::Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(t))
    }
}

#[derive(Default)]
struct Index {
    packages: BTreeMap<String, PackageHeader>,
    by_content: BTreeMap<String, BTreeSet<String>>,
    by_time: BTreeSet<(Timestamp, String)>,
    uuids: BTreeSet<Uuid>,
    last_created: Option<Timestamp>,
}

impl Index {
    fn insert(&mut self, h: PackageHeader) {
        for c in &h.content_ids {
            self.by_content.entry(c.clone()).or_default().insert(h.package_id.clone());
        }
        self.by_time.insert((h.created, h.package_id.clone()));
        if let Some(u) = package_uuid(&h.package_id) {
            self.uuids.insert(u);
        }
        self.last_created = self.last_created.max(Some(h.created));
        self.packages.insert(h.package_id.clone(), h);
    }
}

fn index_line(h: &PackageHeader) -> String {
    let mut line = format!("{}\t{}", format_timestamp(&h.created), h.package_id);
    for c in &h.content_ids {
        line.push('\t');
        line.push_str(c);
    }
    line.push('\n');
    line
}

fn parse_line(line: &str, n: usize) -> Result<PackageHeader, RepoError> {
    let corrupt = |message: &str| RepoError::Corrupt { line: n, message: message.into() };
    let mut fields = line.split('\t');
    let created = fields.next().and_then(parse_timestamp).ok_or_else(|| corrupt("bad timestamp"))?;
    let package_id = fields.next().filter(|p| package_uuid(p).is_some()).ok_or_else(|| corrupt("bad package id"))?;
    Ok(PackageHeader { package_id: package_id.to_string(), created, content_ids: fields.map(str::to_string).collect() })
}

pub struct Store {
    root: PathBuf,
    config: StoreConfig,
    index: RwLock<Index>,
    writer: Mutex<()>,
    recovery: Recovery,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, RepoError> {
        Store::open_with(root, StoreConfig::default())
    }

    pub fn open_with(root: impl Into<PathBuf>, config: StoreConfig) -> Result<Store, RepoError> {
        let root = root.into();
        let packages = root.join(PACKAGES_DIR);
        fs::create_dir_all(&packages).map_err(io_err(&packages))?;
        let mut recovery = Recovery::default();
        let index = Store::replay(&root, &mut recovery)?;
        Store::sweep(&packages, &index, &mut recovery)?;
        Ok(Store { root, config, index: RwLock::new(index), writer: Mutex::new(()), recovery })
    }

    fn replay(root: &Path, recovery: &mut Recovery) -> Result<Index, RepoError> {
        let path = root.join(INDEX_FILE);
        let text = match fs::read(&path) {
            Ok(b) => String::from_utf8(b).map_err(|_| RepoError::Corrupt { line: 0, message: "index is not UTF-8".into() })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let committed = text.rfind('\n').map_or(0, |i| i + 1);
        if committed < text.len() {
            recovery.torn_tail = true;
            let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
            f.set_len(committed as u64).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
        }
        let mut index = Index::default();
        for (n, line) in text[..committed].lines().enumerate() {
            let h = parse_line(line, n + 1)?;
            let file = Store::file_for(root, &h.package_id);
            if !file.is_file() {
                return Err(RepoError::Corrupt { line: n + 1, message: format!("{} has no package file", h.package_id) });
            }
            index.insert(h);
        }
        Ok(index)
    }

    fn sweep(packages: &Path, index: &Index, recovery: &mut Recovery) -> Result<(), RepoError> {
        for shard in fs::read_dir(packages).map_err(io_err(packages))? {
            let shard = shard.map_err(io_err(packages))?.path();
            if !shard.is_dir() {
                continue;
            }
            for f in fs::read_dir(&shard).map_err(io_err(&shard))? {
                let f = f.map_err(io_err(&shard))?.path();
                let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let committed = name.strip_suffix(".didl.xml").and_then(|u| Uuid::parse_str(u).ok()).is_some_and(|u| index.uuids.contains(&u));
                if !committed {
                    fs::remove_file(&f).map_err(io_err(&f))?;
                    recovery.removed.push(f);
                }
            }
        }
        Ok(())
    }

    fn file_for(root: &Path, package_id: &str) -> PathBuf {
        let u = package_uuid(package_id).map(|u| u.to_string()).unwrap_or_default();
        root.join(PACKAGES_DIR).join(&u[..2.min(u.len())]).join(format!("{u}.didl.xml"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index poisoned").packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds, validates and commits a package for `manifest`.
    pub fn ingest(&self, manifest: &AssetManifest, fetcher: &dyn Fetcher, clock: &dyn Clock, ids: &dyn IdSource) -> Result<String, RepoError> {
        let _w = self.writer.lock().expect("writer poisoned");
        let last = self.index.read().expect("index poisoned").last_created;
        // Creation times never go backwards within a store.
        let now = truncate_seconds(clock.now()).max(last.unwrap_or(Timestamp::MIN_UTC));
        let mut m = Materializer::new(fetcher);
        m.max_bytes = self.config.max_bytes;
        let cx = BuildContext { authority: &self.config.authority, materializer: &m, ids, key: self.config.signing_key.as_ref(), now };
        let (package_id, doc) = build_package(manifest, &cx)?;
        let report = validate(&doc, None);
        if !report.passed {
            return Err(RepoError::ValidationFailed(report));
        }
        let bytes = canonical_bytes(&doc)?;
        let mut content_ids: Vec<String> = Vec::new();
        for id in extract_identifiers(&doc)? {
            if !content_ids.contains(&id.value) {
                content_ids.push(id.value);
            }
        }
        let header = PackageHeader { package_id: package_id.clone(), created: now, content_ids };
        let file = Store::file_for(&self.root, &package_id);
        if self.index.read().expect("index poisoned").packages.contains_key(&package_id) || file.exists() {
            return Err(RepoError::IdCollision(package_id));
        }
        self.write_package(&file, &bytes)?;
        self.append_index(&header)?;
        self.index.write().expect("index poisoned").insert(header);
        Ok(package_id)
    }

    fn write_package(&self, file: &Path, bytes: &[u8]) -> Result<(), RepoError> {
        let dir = file.parent().expect("package files live in a shard");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tmp = file.with_extension("xml.tmp");
        let mut f = OpenOptions::new().write(true).create_new(true).open(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        failpoint::hit(failpoint::AFTER_TEMP_WRITE);
        fs::rename(&tmp, file).map_err(io_err(file))?;
        sync_dir(dir)?;
        failpoint::hit(failpoint::AFTER_RENAME);
        Ok(())
    }

    fn append_index(&self, h: &PackageHeader) -> Result<(), RepoError> {
        let path = self.root.join(INDEX_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let line = index_line(h);
        if failpoint::triggers(failpoint::TORN_INDEX) {
            let _ = f.write_all(&line.as_bytes()[..line.len() / 2]);
            let _ = f.sync_all();
            failpoint::crash();
        }
        f.write_all(line.as_bytes()).map_err(io_err(&path))?;
        f.sync_all().map_err(io_err(&path))?;
        sync_dir(&self.root)?;
        failpoint::hit(failpoint::AFTER_INDEX);
        Ok(())
    }

    pub fn header(&self, package_id: &str) -> Option<PackageHeader> {
        self.index.read().expect("index poisoned").packages.get(package_id).cloned()
    }

    pub fn get_package(&self, package_id: &str) -> Result<PackageRecord, RepoError> {
        let h = self.header(package_id).ok_or_else(|| RepoError::NotFound(package_id.to_string()))?;
        let file = Store::file_for(&self.root, package_id);
        let document_bytes = fs::read(&file).map_err(io_err(&file))?;
        let doc = parse_didl(&document_bytes)
            .into_clean()
            .map_err(|d| RepoError::Unreadable { package_id: package_id.to_string(), message: format!("{d:?}") })?;
        let item_xml_ids = doc
            .walk()
            .into_iter()
            .filter(|(_, n)| n.kind() == EntityKind::Item)
            .filter_map(|(_, n)| n.xml_id().map(str::to_string))
            .collect();
        Ok(PackageRecord { package_id: h.package_id, created: h.created, document_bytes, content_ids: h.content_ids, item_xml_ids })
    }

    /// Packages carrying `content_id`, newest first; equal times by id.
    pub fn resolve_content(&self, content_id: &str) -> Vec<(String, Timestamp)> {
        let index = self.index.read().expect("index poisoned");
        let mut out: Vec<(String, Timestamp)> = index
            .by_content
            .get(content_id)
            .into_iter()
            .flatten()
            .map(|p| (p.clone(), index.packages[p].created))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Nodes of the package that carry `content_id`.
    pub fn content_hosts(&self, package_id: &str, content_id: &str) -> Result<Vec<NodePath>, RepoError> {
        let rec = self.get_package(package_id)?;
        let doc = parse_didl(&rec.document_bytes).document.expect("get_package checked the parse");
        Ok(find_by_identifier(&doc, content_id))
    }

    pub fn get_fragment(&self, package_id: &str, xml_id: &str) -> Result<Vec<u8>, RepoError> {
        let rec = self.get_package(package_id)?;
        let doc = parse_didl(&rec.document_bytes).document.expect("get_package checked the parse");
        let node = doc.find_by_id(xml_id).ok_or_else(|| RepoError::NotFound(format!("{package_id}#{xml_id}")))?;
        Ok(serialize_node(node, Style::PRETTY))
    }

    /// Headers with `from <= created <= until` in (created, package_id)
    /// order, resuming strictly after `after`.
    pub fn list_packages(
        &self,
        from: Option<Timestamp>,
        until: Option<Timestamp>,
        after: Option<&str>,
        page_size: usize,
    ) -> Result<Page, RepoError> {
        if let (Some(f), Some(u)) = (from, until) {
            if f > u {
                return Err(RepoError::BadRange { from: format_timestamp(&f), until: format_timestamp(&u) });
            }
        }
        let after = after.map(|c| decode_cursor(c).ok_or_else(|| RepoError::BadCursor(c.to_string()))).transpose()?;
        let index = self.index.read().expect("index poisoned");
        let page_size = page_size.max(1);
        let mut iter = index
            .by_time
            .iter()
            .filter(|(t, _)| from.is_none_or(|f| *t >= f) && until.is_none_or(|u| *t <= u))
            .filter(|k| after.as_ref().is_none_or(|a| *k > a));
        let headers: Vec<PackageHeader> = iter.by_ref().take(page_size).map(|(_, p)| index.packages[p].clone()).collect();
        let next = match (iter.next(), headers.last()) {
            (Some(_), Some(last)) => Some(encode_cursor(&(last.created, last.package_id.clone()))),
            _ => None,
        };
        Ok(Page { headers, next })
    }

    pub fn all_headers(&self) -> Vec<PackageHeader> {
        let index = self.index.read().expect("index poisoned");
        index.by_time.iter().map(|(_, p)| index.packages[p].clone()).collect()
    }

    /// Earliest creation time in the store.
    pub fn earliest(&self) -> Option<Timestamp> {
        self.index.read().expect("index poisoned").by_time.first().map(|(t, _)| *t)
    }
}

fn sync_dir(dir: &Path) -> Result<(), RepoError> {
    #[cfg(unix)]
    File::open(dir).and_then(|d| d.sync_all()).map_err(io_err(dir))?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}

fn encode_cursor(key: &(Timestamp, String)) -> String {
    hex::encode(format!("{}\t{}", key.0.timestamp(), key.1))
}

fn decode_cursor(c: &str) -> Option<(Timestamp, String)> {
    let text = String::from_utf8(hex::decode(c).ok()?).ok()?;
    let (secs, pid) = text.split_once('\t')?;
    Some((Timestamp::from_timestamp(secs.parse().ok()?, 0)?, pid.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lines_round_trip() {
        let h = PackageHeader {
            package_id: "info:didlkit-repo/i/00002cb8-c477-41d8-a819-b1db893d21e6".into(),
            created: parse_timestamp("2004-11-22T18:07:18Z").unwrap(),
            content_ids: vec!["info:doi/10.1045/july95-arms".into(), "info:x/2".into()],
        };
        let line = index_line(&h);
        assert_eq!(line, "2004-11-22T18:07:18Z\tinfo:didlkit-repo/i/00002cb8-c477-41d8-a819-b1db893d21e6\tinfo:doi/10.1045/july95-arms\tinfo:x/2\n");
        assert_eq!(parse_line(line.trim_end(), 1).unwrap(), h);
        assert!(matches!(parse_line("nonsense", 3), Err(RepoError::Corrupt { line: 3, .. })));
    }

    #[test]
    fn cursors_round_trip() {
        let key = (parse_timestamp("2004-11-22T18:07:18Z").unwrap(), "info:a/i/x".to_string());
        assert_eq!(decode_cursor(&encode_cursor(&key)), Some(key));
        assert_eq!(decode_cursor("zz"), None);
    }
}
