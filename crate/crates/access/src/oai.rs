//! OAI-PMH 2.0 over the package-identifier axis.
//!
//! Each verb is an [`OaiVerb`] in a [`VerbRegistry`]. Records carry the
//! stored package document verbatim inside `<metadata>`, with the creation
//! time as datestamp, and a Dublin Core rendering inside `<about>`. The
//! envelope uses an `oai:` prefix so that unqualified elements in an
//! embedded document keep their empty namespace.

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeZone, Utc};
use didlkit_core::codec::{parse_didl, serialize_element, Style, DC_NS, DIDL_NS, OAI_DC_NS};
use didlkit_core::model::NodeRef;
use didlkit_core::syntax::{format_timestamp, parse_timestamp};
use didlkit_core::xml::{escape_attr, escape_text};
use didlkit_core::Timestamp;
use didlkit_repository::{PackageHeader, RepoError, Store};

pub const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
pub const OAI_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd";
pub const DIDL_SCHEMA: &str = "http://standards.iso.org/ittf/PubliclyAvailableStandards/MPEG-21_schema_files/did/didl.xsd";
pub const METADATA_PREFIX: &str = "didl";
pub const GRANULARITY: &str = "YYYY-MM-DDThh:mm:ssZ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiError {
    pub code: &'static str,
    pub message: String,
}

impl OaiError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        OaiError { code, message: message.into() }
    }

    fn bad_argument(message: impl Into<String>) -> Self {
        OaiError::new("badArgument", message)
    }
}

/// A request with its arguments checked for duplicates, not yet for verb
/// fit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OaiRequest {
    pub verb: Option<String>,
    pub args: BTreeMap<String, String>,
}

impl OaiRequest {
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<OaiRequest, OaiError> {
        let mut req = OaiRequest::default();
        for (k, v) in pairs {
            let (k, v) = (k.as_ref(), v.as_ref().to_string());
            if k == "verb" {
                if req.verb.replace(v).is_some() {
                    return Err(OaiError::new("badVerb", "verb is repeated"));
                }
            } else if req.args.insert(k.to_string(), v).is_some() {
                return Err(OaiError::bad_argument(format!("argument {k} is repeated")));
            }
        }
        Ok(req)
    }

    pub fn verb(verb: &str) -> OaiRequest {
        OaiRequest { verb: Some(verb.into()), args: BTreeMap::new() }
    }

    pub fn arg(mut self, k: &str, v: &str) -> OaiRequest {
        self.args.insert(k.into(), v.into());
        self
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.args.get(k).map(String::as_str)
    }
}

/// Argument shape of a verb.
pub struct Arguments {
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    /// An argument that must appear alone when present.
    pub exclusive: Option<&'static str>,
}

impl Arguments {
    fn check(&self, req: &OaiRequest) -> Result<(), OaiError> {
        if let Some(x) = self.exclusive {
            if req.args.contains_key(x) {
                if req.args.len() > 1 {
                    return Err(OaiError::bad_argument(format!("{x} is an exclusive argument")));
                }
                return Ok(());
            }
        }
        for k in req.args.keys() {
            if !self.required.contains(&k.as_str()) && !self.optional.contains(&k.as_str()) {
                return Err(OaiError::bad_argument(format!("illegal argument {k}")));
            }
        }
        for r in self.required {
            if !req.args.contains_key(*r) {
                return Err(OaiError::bad_argument(format!("missing argument {r}")));
            }
        }
        Ok(())
    }
}

pub struct OaiContext<'a> {
    pub store: &'a Store,
    pub repository_name: &'a str,
    pub base_url: &'a str,
    pub admin_email: &'a str,
    pub page_size: usize,
}

impl OaiContext<'_> {
    pub fn oai_url(&self) -> String {
        format!("{}/oai", self.base_url.trim_end_matches('/'))
    }
}

/// One OAI-PMH verb. `respond` appends the verb element to `out`.
pub trait OaiVerb: Send + Sync {
    fn name(&self) -> &'static str;
    fn arguments(&self) -> Arguments;
    fn respond(&self, req: &OaiRequest, cx: &OaiContext<'_>, out: &mut String) -> Result<(), OaiError>;
}

pub struct VerbRegistry {
    verbs: BTreeMap<&'static str, Box<dyn OaiVerb>>,
}

impl Default for VerbRegistry {
    fn default() -> Self {
        let mut r = VerbRegistry::empty();
        r.register(Box::new(Identify));
        r.register(Box::new(ListMetadataFormats));
        r.register(Box::new(ListSets));
        r.register(Box::new(GetRecord));
        r.register(Box::new(ListRecords { with_metadata: false }));
        r.register(Box::new(ListRecords { with_metadata: true }));
        r
    }
}

impl VerbRegistry {
    pub fn empty() -> Self {
        VerbRegistry { verbs: BTreeMap::new() }
    }

    pub fn register(&mut self, verb: Box<dyn OaiVerb>) {
        self.verbs.insert(verb.name(), verb);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.verbs.keys().copied()
    }

    /// Full response document for a request.
    pub fn handle(&self, req: Result<OaiRequest, OaiError>, cx: &OaiContext<'_>, now: Timestamp) -> Vec<u8> {
        let mut body = String::new();
        // Attributes are echoed only when the request itself was well formed.
        let echoed = match req.and_then(|req| self.check(&req).map(|v| (v, req))) {
            Ok((verb, req)) => {
                if let Err(e) = verb.respond(&req, cx, &mut body) {
                    body.clear();
                    write_error(&mut body, &e);
                }
                Some(req)
            }
            Err(e) => {
                write_error(&mut body, &e);
                None
            }
        };
        envelope(cx, now, echoed.as_ref(), &body)
    }

    fn check(&self, req: &OaiRequest) -> Result<&dyn OaiVerb, OaiError> {
        let name = req.verb.as_deref().ok_or_else(|| OaiError::new("badVerb", "missing verb"))?;
        let verb = self.verbs.get(name).ok_or_else(|| OaiError::new("badVerb", format!("illegal verb {name}")))?;
        verb.arguments().check(req)?;
        Ok(verb.as_ref())
    }
}

fn write_error(out: &mut String, e: &OaiError) {
    out.push_str("<oai:error code=\"");
    escape_attr(e.code, out);
    out.push_str("\">");
    escape_text(&e.message, out);
    out.push_str("</oai:error>");
}

fn envelope(cx: &OaiContext<'_>, now: Timestamp, req: Option<&OaiRequest>, body: &str) -> Vec<u8> {
    let mut out = String::with_capacity(body.len() + 512);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<oai:OAI-PMH xmlns:oai=\"{OAI_NS}\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" xsi:schemaLocation=\"{OAI_NS} {OAI_SCHEMA}\">"
    ));
    out.push_str(&format!("<oai:responseDate>{}</oai:responseDate>", format_timestamp(&now)));
    out.push_str("<oai:request");
    if let Some(req) = req {
        if let Some(v) = &req.verb {
            push_attr(&mut out, "verb", v);
        }
        for (k, v) in &req.args {
            push_attr(&mut out, k, v);
        }
    }
    out.push('>');
    escape_text(&cx.oai_url(), &mut out);
    out.push_str("</oai:request>");
    out.push_str(body);
    out.push_str("</oai:OAI-PMH>\n");
    out.into_bytes()
}

fn push_attr(out: &mut String, k: &str, v: &str) {
    out.push(' ');
    out.push_str(k);
    out.push_str("=\"");
    escape_attr(v, out);
    out.push('"');
}

fn element(out: &mut String, name: &str, text: &str) {
    out.push_str(&format!("<oai:{name}>"));
    escape_text(text, out);
    out.push_str(&format!("</oai:{name}>"));
}

fn check_prefix(req: &OaiRequest) -> Result<(), OaiError> {
    match req.get("metadataPrefix") {
        Some(METADATA_PREFIX) | None => Ok(()),
        Some(other) => Err(OaiError::new("cannotDisseminateFormat", format!("metadataPrefix {other} is not supported; use {METADATA_PREFIX}"))),
    }
}

/// Stored bytes with any XML declaration removed, ready for embedding.
pub fn embeddable(document: &[u8]) -> &str {
    let text = std::str::from_utf8(document).unwrap_or_default();
    let body = match text.strip_prefix("<?xml") {
        Some(rest) => rest.find("?>").map_or(text, |i| &rest[i + 2..]),
        None => text,
    };
    body.trim()
}

/// The Item's first Dublin Core record, or a title-only stand-in.
pub fn dublin_core(document: &[u8], package_id: &str) -> String {
    let doc = parse_didl(document).document;
    let dc = doc.as_ref().and_then(|d| {
        d.walk().into_iter().find_map(|(_, n)| match n {
            NodeRef::Item(i) => i
                .descriptors
                .iter()
                .flat_map(|d| &d.statements)
                .flat_map(|s| s.payload.xml_elements())
                .find(|e| e.name.is(OAI_DC_NS, "dc"))
                .map(|e| String::from_utf8(serialize_element(e, Style::CANONICAL)).expect("serializer emits UTF-8")),
            _ => None,
        })
    });
    dc.unwrap_or_else(|| {
        let mut s = format!("<oai_dc:dc xmlns:oai_dc=\"{OAI_DC_NS}\" xmlns:dc=\"{DC_NS}\"><dc:title>");
        escape_text(package_id, &mut s);
        s.push_str("</dc:title></oai_dc:dc>");
        s
    })
}

fn write_header(out: &mut String, h: &PackageHeader) {
    out.push_str("<oai:header>");
    element(out, "identifier", &h.package_id);
    element(out, "datestamp", &format_timestamp(&h.created));
    out.push_str("</oai:header>");
}

fn write_record(out: &mut String, cx: &OaiContext<'_>, h: &PackageHeader) -> Result<(), OaiError> {
    let rec = cx.store.get_package(&h.package_id).map_err(internal)?;
    out.push_str("<oai:record>");
    write_header(out, h);
    out.push_str("<oai:metadata>");
    out.push_str(embeddable(&rec.document_bytes));
    out.push_str("</oai:metadata><oai:about>");
    out.push_str(&dublin_core(&rec.document_bytes, &h.package_id));
    out.push_str("</oai:about></oai:record>");
    Ok(())
}

fn internal(e: RepoError) -> OaiError {
    match e {
        RepoError::NotFound(id) => OaiError::new("idDoesNotExist", format!("{id} is not in this repository")),
        other => OaiError::new("badArgument", other.to_string()),
    }
}

/// Parses an OAI datestamp argument. Day granularity expands to the start
/// of the day for `from` and its last second for `until`.
pub fn parse_datestamp(s: &str, end_of_day: bool) -> Option<(Timestamp, bool)> {
    if let Some(t) = parse_timestamp(s).filter(|_| s.ends_with('Z') && s.len() == 20) {
        return Some((t, false));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().filter(|_| s.len() == 10)?;
    let t = if end_of_day { d.and_hms_opt(23, 59, 59)? } else { d.and_hms_opt(0, 0, 0)? };
    Some((Utc.from_utc_datetime(&t), true))
}

struct Identify;

impl OaiVerb for Identify {
    fn name(&self) -> &'static str {
        "Identify"
    }

    fn arguments(&self) -> Arguments {
        Arguments { required: &[], optional: &[], exclusive: None }
    }

    fn respond(&self, _: &OaiRequest, cx: &OaiContext<'_>, out: &mut String) -> Result<(), OaiError> {
        let earliest = cx.store.earliest().unwrap_or(Timestamp::UNIX_EPOCH);
        out.push_str("<oai:Identify>");
        element(out, "repositoryName", cx.repository_name);
        element(out, "baseURL", &cx.oai_url());
        element(out, "protocolVersion", "2.0");
        element(out, "adminEmail", cx.admin_email);
        element(out, "earliestDatestamp", &format_timestamp(&earliest));
        element(out, "deletedRecord", "no");
        element(out, "granularity", GRANULARITY);
        out.push_str("</oai:Identify>");
        Ok(())
    }
}

struct ListMetadataFormats;

impl OaiVerb for ListMetadataFormats {
    fn name(&self) -> &'static str {
        "ListMetadataFormats"
    }

    fn arguments(&self) -> Arguments {
        Arguments { required: &[], optional: &["identifier"], exclusive: None }
    }

    fn respond(&self, req: &OaiRequest, cx: &OaiContext<'_>, out: &mut String) -> Result<(), OaiError> {
        if let Some(id) = req.get("identifier") {
            if cx.store.header(id).is_none() {
                return Err(OaiError::new("idDoesNotExist", format!("{id} is not in this repository")));
            }
        }
        out.push_str("<oai:ListMetadataFormats><oai:metadataFormat>");
        element(out, "metadataPrefix", METADATA_PREFIX);
        element(out, "schema", DIDL_SCHEMA);
        element(out, "metadataNamespace", DIDL_NS);
        out.push_str("</oai:metadataFormat></oai:ListMetadataFormats>");
        Ok(())
    }
}

struct ListSets;

impl OaiVerb for ListSets {
    fn name(&self) -> &'static str {
        "ListSets"
    }

    fn arguments(&self) -> Arguments {
        Arguments { required: &[], optional: &[], exclusive: Some("resumptionToken") }
    }

    fn respond(&self, _: &OaiRequest, _: &OaiContext<'_>, _: &mut String) -> Result<(), OaiError> {
        Err(OaiError::new("noSetHierarchy", "this repository does not support sets"))
    }
}

struct GetRecord;

impl OaiVerb for GetRecord {
    fn name(&self) -> &'static str {
        "GetRecord"
    }

    fn arguments(&self) -> Arguments {
        Arguments { required: &["identifier", "metadataPrefix"], optional: &[], exclusive: None }
    }

    fn respond(&self, req: &OaiRequest, cx: &OaiContext<'_>, out: &mut String) -> Result<(), OaiError> {
        let id = req.get("identifier").expect("checked");
        let h = cx.store.header(id).ok_or_else(|| OaiError::new("idDoesNotExist", format!("{id} is not in this repository")))?;
        check_prefix(req)?;
        out.push_str("<oai:GetRecord>");
        write_record(out, cx, &h)?;
        out.push_str("</oai:GetRecord>");
        Ok(())
    }
}

/// Position in a list request: the window plus the store cursor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResumptionToken {
    pub from: Option<Timestamp>,
    pub until: Option<Timestamp>,
    pub cursor: String,
}

impl ResumptionToken {
    pub fn encode(&self) -> String {
        let secs = |t: &Option<Timestamp>| t.map(|t| t.timestamp().to_string()).unwrap_or_default();
        format!("{METADATA_PREFIX}~{}~{}~{}", secs(&self.from), secs(&self.until), self.cursor)
    }

    pub fn decode(s: &str) -> Option<ResumptionToken> {
        let mut parts = s.split('~');
        if parts.next()? != METADATA_PREFIX {
            return None;
        }
        let time = |p: &str| -> Option<Option<Timestamp>> {
            if p.is_empty() {
                Some(None)
            } else {
                Some(Some(Timestamp::from_timestamp(p.parse().ok()?, 0)?))
            }
        };
        let from = time(parts.next()?)?;
        let until = time(parts.next()?)?;
        let cursor = parts.next()?.to_string();
        if parts.next().is_some() || cursor.is_empty() {
            return None;
        }
        Some(ResumptionToken { from, until, cursor })
    }
}

/// ListRecords, or ListIdentifiers when `with_metadata` is false.
struct ListRecords {
    with_metadata: bool,
}

impl OaiVerb for ListRecords {
    fn name(&self) -> &'static str {
        if self.with_metadata {
            "ListRecords"
        } else {
            "ListIdentifiers"
        }
    }

    fn arguments(&self) -> Arguments {
        Arguments { required: &["metadataPrefix"], optional: &["from", "until", "set"], exclusive: Some("resumptionToken") }
    }

    fn respond(&self, req: &OaiRequest, cx: &OaiContext<'_>, out: &mut String) -> Result<(), OaiError> {
        let (from, until, cursor, resumed) = match req.get("resumptionToken") {
            Some(t) => {
                let tok = ResumptionToken::decode(t).ok_or_else(|| OaiError::new("badResumptionToken", "resumptionToken is not valid"))?;
                (tok.from, tok.until, Some(tok.cursor), true)
            }
            None => {
                check_prefix(req)?;
                if req.get("set").is_some() {
                    return Err(OaiError::new("noSetHierarchy", "this repository does not support sets"));
                }
                let from = req.get("from").map(|s| parse_datestamp(s, false).ok_or_else(|| OaiError::bad_argument(format!("bad from {s:?}")))).transpose()?;
                let until = req.get("until").map(|s| parse_datestamp(s, true).ok_or_else(|| OaiError::bad_argument(format!("bad until {s:?}")))).transpose()?;
                if let (Some((_, a)), Some((_, b))) = (from, until) {
                    if a != b {
                        return Err(OaiError::bad_argument("from and until have different granularities"));
                    }
                }
                (from.map(|f| f.0), until.map(|u| u.0), None, false)
            }
        };
        let page = match cx.store.list_packages(from, until, cursor.as_deref(), cx.page_size) {
            Ok(p) => p,
            Err(RepoError::BadCursor(_)) => return Err(OaiError::new("badResumptionToken", "resumptionToken is not valid")),
            Err(RepoError::BadRange { .. }) => return Err(OaiError::bad_argument("from is after until")),
            Err(e) => return Err(internal(e)),
        };
        if page.headers.is_empty() {
            if resumed {
                return Err(OaiError::new("badResumptionToken", "resumptionToken does not continue a list"));
            }
            return Err(OaiError::new("noRecordsMatch", "no records in the requested window"));
        }
        let name = self.name();
        out.push_str(&format!("<oai:{name}>"));
        for h in &page.headers {
            if self.with_metadata {
                write_record(out, cx, h)?;
            } else {
                write_header(out, h);
            }
        }
        match page.next {
            Some(cursor) => element(out, "resumptionToken", &ResumptionToken { from, until, cursor }.encode()),
            None if resumed => out.push_str("<oai:resumptionToken/>"),
            None => {}
        }
        out.push_str(&format!("</oai:{name}>"));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datestamps() {
        let (t, day) = parse_datestamp("2004-11-22T18:07:18Z", false).unwrap();
        assert_eq!(format_timestamp(&t), "2004-11-22T18:07:18Z");
        assert!(!day);
        let (t, day) = parse_datestamp("2004-11-22", true).unwrap();
        assert_eq!(format_timestamp(&t), "2004-11-22T23:59:59Z");
        assert!(day);
        assert!(parse_datestamp("2004-11-22T18:07Z", false).is_none());
        assert!(parse_datestamp("2004-11-22T18:07:18.5Z", false).is_none());
    }

    #[test]
    fn tokens_round_trip() {
        let tok = ResumptionToken { from: Timestamp::from_timestamp(5, 0), until: None, cursor: "abcd".into() };
        assert_eq!(ResumptionToken::decode(&tok.encode()), Some(tok));
        assert_eq!(ResumptionToken::decode("oai_dc~~~abcd"), None);
        assert_eq!(ResumptionToken::decode("didl~~~"), None);
    }

    #[test]
    fn argument_shapes() {
        let a = ListRecords { with_metadata: true }.arguments();
        assert!(a.check(&OaiRequest::verb("ListRecords").arg("metadataPrefix", "didl")).is_ok());
        assert!(a.check(&OaiRequest::verb("ListRecords").arg("resumptionToken", "x")).is_ok());
        assert!(a.check(&OaiRequest::verb("ListRecords").arg("resumptionToken", "x").arg("from", "2000-01-01")).is_err());
        assert!(a.check(&OaiRequest::verb("ListRecords")).is_err());
        assert!(a.check(&OaiRequest::verb("ListRecords").arg("metadataPrefix", "didl").arg("bogus", "1")).is_err());
        assert!(OaiRequest::from_pairs(&[("verb", "Identify"), ("verb", "Identify")]).is_err());
    }

    #[test]
    fn declaration_is_stripped() {
        assert_eq!(embeddable(b"<?xml version=\"1.0\"?>\n<a/>\n"), "<a/>");
        assert_eq!(embeddable(b"<a/>"), "<a/>");
    }
}
