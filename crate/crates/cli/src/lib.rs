//! The `didlkit` command line.
//!
//! Data goes to stdout and diagnostics to stderr. Exit status is 0 on
//! success, 1 when a document or manifest fails validation, 2 on usage
//! errors, 3 on I/O failures and 4 when a requested object does not exist.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use didlkit_access::{AccessConfig, AccessService};
use didlkit_core::codec::{parse_didl, write_document, NamespaceTable, ParseDiagnostic, Style};
use didlkit_core::dii::{extract_identifiers, extract_related};
use didlkit_core::integrity::{seal_component_at, seal_document_at, verify_component_with, verify_document, KeyFile, Keyring, SigningKeyPair, Verdict};
use didlkit_core::model::{derive_relationships, DidlDocument, NodeRef};
use didlkit_core::resourceio::{Fetcher, FetcherRegistry, HttpFetcher, LocalFetcher, Materializer, NoFetch, DEFAULT_MAX_BYTES};
use didlkit_core::syntax::format_timestamp;
use didlkit_core::validator::validate;
use didlkit_repository::{
    build_package, synthetic, AssetManifest, BuildContext, BuildError, Clock, RandomIds, RepoError, Store, StoreConfig, SystemClock, DEFAULT_AUTHORITY,
};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_FOUND: i32 = 4;

pub const STORE_ENV: &str = "DIDLKIT_STORE";

#[derive(Parser, Debug)]
#[command(name = "didlkit", version, about = "MPEG-21 DIDL documents and a package repository built on them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a package from a manifest and print it, without storing it
    Create {
        /// Manifest JSON file, or `-` for stdin
        manifest: String,
        #[arg(long, default_value = DEFAULT_AUTHORITY)]
        authority: String,
        #[command(flatten)]
        signing: Signing,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Check a DIDL document against the structural rules
    Validate {
        /// DIDL file, or `-` for stdin
        file: String,
        /// Also materialize resources and compare bit-equivalent copies
        #[arg(long)]
        deep: bool,
        /// Treat warnings as errors
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Print identifiers, relationships and component digests
    Inspect {
        file: String,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Store a package built from a manifest and print its package id
    Ingest {
        /// Manifest JSON file, or `-` for stdin
        #[arg(required_unless_present = "synthetic")]
        manifest: Option<String>,
        /// Ingest this many generated manifests instead
        #[arg(long, conflicts_with = "manifest")]
        synthetic: Option<u64>,
        /// Number of the first generated manifest
        #[arg(long, default_value_t = 0, requires = "synthetic")]
        offset: u64,
        #[arg(long, default_value = DEFAULT_AUTHORITY)]
        authority: String,
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        signing: Signing,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Print a stored package document
    Get {
        package_id: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// List packages carrying a content identifier, newest first
    Resolve {
        content_id: String,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Print the subtree with an XML id from a stored package
    Fragment {
        package_id: String,
        xml_id: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Serve OAI-PMH at /oai and OpenURL at /openurl
    Serve {
        #[arg(long, env = "DIDLKIT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "DIDLKIT_BIND", default_value = "127.0.0.1")]
        bind: String,
        /// Public root URL; defaults to http://<bind>:<port>
        #[arg(long, env = "DIDLKIT_BASE_URL")]
        base_url: Option<String>,
        #[arg(long, env = "DIDLKIT_REPOSITORY_NAME", default_value = "didlkit repository")]
        repository_name: String,
        #[arg(long, env = "DIDLKIT_ADMIN_EMAIL", default_value = "admin@localhost")]
        admin_email: String,
        #[arg(long, env = "DIDLKIT_PAGE_SIZE", default_value_t = didlkit_access::DEFAULT_PAGE_SIZE)]
        page_size: usize,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Add integrity blocks to a document and print it
    Seal {
        file: String,
        /// Seal every component with resources as well as the document
        #[arg(long)]
        components: bool,
        #[command(flatten)]
        signing: Signing,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Check integrity blocks; exit 1 unless the document verifies and no
    /// sealed component fails
    Verify {
        file: String,
        /// Public or secret key file trusted for signatures; repeatable
        #[arg(long = "keyring")]
        keyring: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        fetch: Fetch,
    },
    /// Write a new Ed25519 key file
    Keygen {
        #[arg(long)]
        key_id: String,
        /// Secret key file to write
        #[arg(long)]
        out: PathBuf,
        /// Also write the public half here
        #[arg(long)]
        public: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct StoreArg {
    /// Store directory
    #[arg(long = "store", env = STORE_ENV)]
    pub path: PathBuf,
}

#[derive(Args, Debug)]
pub struct Signing {
    /// Secret key file used to sign integrity blocks
    #[arg(long)]
    pub key: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Fetch {
    /// Resolve http(s) references to files under this directory
    /// (`<root>/<host>/<path>`)
    #[arg(long)]
    pub fetch_root: Option<PathBuf>,
    /// Fetch http references over the network
    #[arg(long)]
    pub allow_http: bool,
}

impl Fetch {
    /// Network access for `http` wins over the local root when both are set.
    pub fn fetcher(&self) -> Box<dyn Fetcher> {
        if self.fetch_root.is_none() && !self.allow_http {
            return Box::new(NoFetch);
        }
        let mut r = FetcherRegistry::new();
        if let Some(root) = &self.fetch_root {
            r.set_fallback(Arc::new(LocalFetcher::new(root)));
        }
        if self.allow_http {
            r.register("http", Arc::new(HttpFetcher::new(Duration::from_secs(30), DEFAULT_MAX_BYTES)));
        }
        Box::new(r)
    }
}

/// Standard streams, replaceable for in-process testing.
pub struct Io<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<RepoError> for Failure {
    fn from(e: RepoError) -> Self {
        let code = match &e {
            RepoError::NotFound(_) => EXIT_NOT_FOUND,
            RepoError::ValidationFailed(_) | RepoError::Build(BuildError::Manifest(_)) => EXIT_VALIDATION,
            _ => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = io.stderr.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = io.stdout.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, io) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(io.stderr, "didlkit: {}", f.message);
            f.code
        }
    }
}

fn read_input(name: &str, stdin: &mut dyn Read) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    if name == "-" {
        stdin.read_to_end(&mut buf)?;
    } else {
        buf = fs::read(name).map_err(|e| Failure::new(EXIT_IO, format!("{name}: {e}")))?;
    }
    Ok(buf)
}

fn read_manifest(name: &str, stdin: &mut dyn Read) -> Result<AssetManifest, Failure> {
    let bytes = read_input(name, stdin)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::new(EXIT_VALIDATION, format!("{name}: manifest is not UTF-8")))?;
    AssetManifest::from_json(&text).map_err(|e| Failure::new(EXIT_VALIDATION, format!("{name}: {e}")))
}

fn load_key(path: &Option<PathBuf>) -> Result<Option<SigningKeyPair>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let file = read_key_file(path)?;
    SigningKeyPair::from_file(&file).map(Some).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn read_key_file(path: &Path) -> Result<KeyFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn report_diagnostics(diags: &[ParseDiagnostic], stderr: &mut dyn Write) -> std::io::Result<()> {
    for d in diags {
        writeln!(stderr, "{d}")?;
    }
    Ok(())
}

/// Parses a document; diagnostics go to stderr and any error ends the command.
fn parse_input(name: &str, io: &mut Io<'_>) -> Result<DidlDocument, Failure> {
    let bytes = read_input(name, io.stdin)?;
    let outcome = parse_didl(&bytes);
    report_diagnostics(&outcome.diagnostics, io.stderr)?;
    outcome.into_clean().map_err(|_| Failure::new(EXIT_VALIDATION, format!("{name}: document does not parse cleanly")))
}

fn print_json(out: &mut dyn Write, v: &serde_json::Value) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)
}

fn open_store(arg: &StoreArg, authority: Option<&str>, key: Option<SigningKeyPair>) -> Result<Store, Failure> {
    let config = StoreConfig { authority: authority.unwrap_or(DEFAULT_AUTHORITY).to_string(), signing_key: key, ..Default::default() };
    Ok(Store::open_with(&arg.path, config)?)
}

fn dispatch(command: Command, io: &mut Io<'_>) -> Outcome {
    match command {
        Command::Create { manifest, authority, signing, fetch } => {
            let manifest = read_manifest(&manifest, io.stdin)?;
            let key = load_key(&signing.key)?;
            let fetcher = fetch.fetcher();
            let materializer = Materializer::new(fetcher.as_ref());
            let cx = BuildContext { authority: &authority, materializer: &materializer, ids: &RandomIds, key: key.as_ref(), now: SystemClock.now() };
            let (_, doc) = build_package(&manifest, &cx).map_err(|e| Failure::from(RepoError::Build(e)))?;
            io.stdout.write_all(&write_document(&doc, &NamespaceTable::default(), Style::PRETTY))?;
            Ok(EXIT_OK)
        }
        Command::Validate { file, deep, strict, json, fetch } => {
            let bytes = read_input(&file, io.stdin)?;
            let outcome = parse_didl(&bytes);
            report_diagnostics(&outcome.diagnostics, io.stderr)?;
            let parse_ok = !outcome.has_errors();
            let Some(doc) = outcome.document else {
                return Ok(EXIT_VALIDATION);
            };
            let fetcher = fetch.fetcher();
            let mut report = validate(&doc, deep.then_some(fetcher.as_ref()));
            if strict {
                report = report.strict();
            }
            if json {
                let mut v = report.to_json();
                v["parse_ok"] = json!(parse_ok);
                print_json(io.stdout, &v)?;
            } else {
                io.stdout.write_all(report.to_text().as_bytes())?;
            }
            Ok(if report.passed && parse_ok { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Inspect { file, json, fetch } => {
            let doc = parse_input(&file, io)?;
            inspect(&doc, json, fetch.fetcher().as_ref(), io.stdout)?;
            Ok(EXIT_OK)
        }
        Command::Ingest { manifest, synthetic: count, offset, authority, store, signing, fetch } => {
            let key = load_key(&signing.key)?;
            let store = open_store(&store, Some(&authority), key)?;
            let fetcher = fetch.fetcher();
            let manifests: Box<dyn Iterator<Item = Result<AssetManifest, Failure>>> = match (manifest, count) {
                (Some(m), _) => Box::new(std::iter::once(read_manifest(&m, io.stdin))),
                (None, Some(n)) => Box::new((offset..offset + n).map(|i| Ok(synthetic(i)))),
                (None, None) => return Err(Failure::new(EXIT_USAGE, "nothing to ingest")),
            };
            for m in manifests {
                let pid = store.ingest(&m?, fetcher.as_ref(), &SystemClock, &RandomIds)?;
                writeln!(io.stdout, "{pid}")?;
            }
            Ok(EXIT_OK)
        }
        Command::Get { package_id, store } => {
            let rec = open_store(&store, None, None)?.get_package(&package_id)?;
            io.stdout.write_all(&rec.document_bytes)?;
            Ok(EXIT_OK)
        }
        Command::Resolve { content_id, json, store } => {
            let versions = open_store(&store, None, None)?.resolve_content(&content_id);
            if json {
                let list: Vec<_> = versions.iter().map(|(p, t)| json!({ "package_id": p, "created": format_timestamp(t) })).collect();
                print_json(io.stdout, &json!(list))?;
            } else {
                for (p, t) in &versions {
                    writeln!(io.stdout, "{p}\t{}", format_timestamp(t))?;
                }
            }
            if versions.is_empty() {
                return Err(Failure::new(EXIT_NOT_FOUND, format!("no package carries {content_id}")));
            }
            Ok(EXIT_OK)
        }
        Command::Fragment { package_id, xml_id, store } => {
            let bytes = open_store(&store, None, None)?.get_fragment(&package_id, &xml_id)?;
            io.stdout.write_all(&bytes)?;
            Ok(EXIT_OK)
        }
        Command::Serve { port, bind, base_url, repository_name, admin_email, page_size, store } => {
            let store = Arc::new(open_store(&store, None, None)?);
            serve(store, &bind, port, base_url, repository_name, admin_email, page_size, io.stderr)
        }
        Command::Seal { file, components, signing, fetch } => {
            let mut doc = parse_input(&file, io)?;
            let key = load_key(&signing.key)?;
            let now = SystemClock.now();
            if components {
                let fetcher = fetch.fetcher();
                let m = Materializer::new(fetcher.as_ref());
                let paths: Vec<_> = doc.walk().into_iter().filter(|(_, n)| matches!(n, NodeRef::Component(c) if !c.resources.is_empty())).map(|(p, _)| p).collect();
                for path in paths {
                    let Some(NodeRef::Component(c)) = doc.node_at(&path) else { continue };
                    let sealed = seal_component_at(c, &path, &m, key.as_ref(), now).map_err(|e| Failure::new(EXIT_IO, format!("{path}: {e}")))?;
                    replace_component(&mut doc, &path, sealed);
                }
            }
            let doc = seal_document_at(&doc, key.as_ref(), now).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
            io.stdout.write_all(&write_document(&doc, &NamespaceTable::default(), Style::PRETTY))?;
            Ok(EXIT_OK)
        }
        Command::Verify { file, keyring, json, fetch } => {
            let doc = parse_input(&file, io)?;
            let mut ring = Keyring::new();
            for path in &keyring {
                ring.add_file(&read_key_file(path)?).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
            }
            verify(&doc, &ring, fetch.fetcher().as_ref(), json, io.stdout)
        }
        Command::Keygen { key_id, out, public } => {
            let pair = SigningKeyPair::from_seed(key_id, rand::random());
            let write = |path: &Path, f: &KeyFile| fs::write(path, serde_json::to_string_pretty(f).expect("key file serializes") + "\n").map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())));
            write(&out, &pair.secret_file())?;
            if let Some(p) = public {
                write(&p, &pair.public_file())?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn replace_component(doc: &mut DidlDocument, path: &didlkit_core::model::NodePath, sealed: didlkit_core::model::Component) {
    use didlkit_core::model::NodeMut;
    if let Some(NodeMut::Component(c)) = doc.node_mut(path) {
        *c = sealed;
    }
}

fn inspect(doc: &DidlDocument, as_json: bool, fetcher: &dyn Fetcher, out: &mut dyn Write) -> Result<(), Failure> {
    let ids = extract_identifiers(doc).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let related = extract_related(doc).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let triples = derive_relationships(doc);
    let m = Materializer::new(fetcher);
    let mut components = Vec::new();
    for (path, node) in doc.walk() {
        let NodeRef::Component(c) = node else { continue };
        let v = match m.check_component_equivalence(c, &path) {
            Ok(r) => json!({
                "path": path.to_string(),
                "xml_id": c.xml_id,
                "equivalent": r.equivalent,
                "digests": r.digests.iter().map(|(p, h)| json!({ "path": p.to_string(), "sha256": h })).collect::<Vec<_>>(),
            }),
            Err(e) => json!({ "path": path.to_string(), "xml_id": c.xml_id, "error": e.to_string() }),
        };
        components.push(v);
    }
    let v = json!({
        "document_id": doc.document_id,
        "document_created": doc.document_created.as_ref().map(format_timestamp),
        "identifiers": ids,
        "related_identifiers": related,
        "relationships": triples.iter().map(|t| json!({ "subject": t.subject.to_string(), "predicate": t.predicate.as_str(), "object": t.object.to_string() })).collect::<Vec<_>>(),
        "components": components,
    });
    if as_json {
        return Ok(print_json(out, &v)?);
    }
    writeln!(out, "document_id\t{}", doc.document_id.as_deref().unwrap_or("-"))?;
    writeln!(out, "document_created\t{}", doc.document_created.as_ref().map(format_timestamp).unwrap_or_else(|| "-".into()))?;
    for i in &ids {
        writeln!(out, "identifier\t{}\t{}", i.host, i.value)?;
    }
    for r in &related {
        writeln!(out, "related\t{}\t{}\t{}", r.host, r.relationship_type.as_deref().unwrap_or("-"), r.value)?;
    }
    for t in &triples {
        writeln!(out, "relationship\t{}\t{}\t{}", t.subject, t.predicate.as_str(), t.object)?;
    }
    for c in &components {
        match c.get("digests") {
            Some(ds) => {
                for d in ds.as_array().into_iter().flatten() {
                    writeln!(out, "digest\t{}\t{}\t{}", d["path"].as_str().unwrap_or_default(), d["sha256"].as_str().unwrap_or_default(), if c["equivalent"] == true { "equivalent" } else { "differs" })?;
                }
            }
            None => writeln!(out, "digest\t{}\terror\t{}", c["path"].as_str().unwrap_or_default(), c["error"].as_str().unwrap_or_default())?,
        }
    }
    Ok(())
}

fn verify(doc: &DidlDocument, ring: &Keyring, fetcher: &dyn Fetcher, as_json: bool, out: &mut dyn Write) -> Outcome {
    let doc_verdict = verify_document(doc, ring).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let m = Materializer::new(fetcher);
    let mut rows = Vec::new();
    let mut ok = doc_verdict == Verdict::Ok;
    for (path, node) in doc.walk() {
        let NodeRef::Component(c) = node else { continue };
        let (verdict, error) = match verify_component_with(c, &path, &m, ring) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        // Unsealed components are allowed; anything else must verify.
        ok &= matches!(verdict, Some(Verdict::Ok | Verdict::Unsealed));
        rows.push((path, verdict, error));
    }
    if as_json {
        let comps: Vec<_> = rows
            .iter()
            .map(|(p, v, e)| match v {
                Some(v) => json!({ "path": p.to_string(), "verdict": v.as_str() }),
                None => json!({ "path": p.to_string(), "error": e }),
            })
            .collect();
        print_json(out, &json!({ "document": doc_verdict.as_str(), "components": comps, "ok": ok }))?;
    } else {
        writeln!(out, "document\t/\t{}", doc_verdict.as_str())?;
        for (p, v, e) in &rows {
            match v {
                Some(v) => writeln!(out, "component\t{p}\t{}", v.as_str())?,
                None => writeln!(out, "component\t{p}\terror\t{}", e.as_deref().unwrap_or_default())?,
            }
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_VALIDATION })
}

#[allow(clippy::too_many_arguments)]
fn serve(store: Arc<Store>, bind: &str, port: u16, base_url: Option<String>, repository_name: String, admin_email: String, page_size: usize, stderr: &mut dyn Write) -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port)).await.map_err(|e| Failure::new(EXIT_IO, format!("{bind}:{port}: {e}")))?;
        let addr = listener.local_addr()?;
        let base_url = base_url.unwrap_or_else(|| format!("http://{addr}"));
        let config = AccessConfig { repository_name, admin_email, page_size: page_size.max(1), ..AccessConfig::new(base_url.clone()) };
        let service = Arc::new(AccessService::new(store, config));
        writeln!(stderr, "didlkit: serving {} packages at {base_url}/oai and {base_url}/openurl", service.store.len())?;
        stderr.flush()?;
        didlkit_access::serve(listener, service).await?;
        Ok(EXIT_OK)
    })
}
