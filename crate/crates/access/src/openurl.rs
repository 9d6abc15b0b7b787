//! OpenURL (Z39.88-2004 KEV) resolution over the content-identifier axis.
//!
//! `rft_id` names the content. `svc_id` picks an [`OpenUrlService`] from a
//! [`ServiceRegistry`]; `locate` is the default.

use std::collections::BTreeMap;

use didlkit_core::syntax::{format_timestamp, is_absolute_uri};
use didlkit_repository::{RepoError, Store};
use url::form_urlencoded;

pub const KEV_VERSION: &str = "Z39.88-2004";
pub const DEFAULT_SERVICE: &str = "locate";

/// Transport-neutral HTTP reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub content_type: &'static str,
    pub headers: Vec<(&'static str, String)>,
    pub body: Vec<u8>,
}

impl HttpReply {
    pub fn text(status: u16, message: impl Into<String>) -> HttpReply {
        let mut body = message.into().into_bytes();
        body.push(b'\n');
        HttpReply { status, content_type: "text/plain; charset=utf-8", headers: vec![], body }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenUrlRequest {
    pub rft_id: String,
    pub svc_id: String,
    pub fragment: Option<String>,
}

impl OpenUrlRequest {
    /// Reads KEV pairs. Unknown keys are ignored, as KEV context objects
    /// carry many optional entities.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<OpenUrlRequest, String> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.as_ref();
            if ["url_ver", "rft_id", "svc_id", "fragment"].contains(&k) && seen.insert(k, v.as_ref()).is_some() {
                return Err(format!("{k} is repeated"));
            }
        }
        if let Some(v) = seen.get("url_ver") {
            if *v != KEV_VERSION {
                return Err(format!("url_ver must be {KEV_VERSION}"));
            }
        }
        let rft_id = seen.get("rft_id").ok_or("rft_id is required")?.to_string();
        if !is_absolute_uri(&rft_id) {
            return Err(format!("rft_id {rft_id:?} is not an absolute URI"));
        }
        let svc_id = match seen.get("svc_id") {
            None => DEFAULT_SERVICE.to_string(),
            // Service ids may be given as URIs whose last segment is the token.
            Some(s) => s.rsplit('/').next().unwrap_or_default().to_string(),
        };
        if svc_id.is_empty() {
            return Err("svc_id is empty".into());
        }
        let fragment = seen.get("fragment").map(|s| s.to_string());
        if fragment.as_deref() == Some("") {
            return Err("fragment is empty".into());
        }
        Ok(OpenUrlRequest { rft_id, svc_id, fragment })
    }

    pub fn to_query(&self) -> String {
        let mut q = form_urlencoded::Serializer::new(String::new());
        q.append_pair("url_ver", KEV_VERSION).append_pair("rft_id", &self.rft_id).append_pair("svc_id", &self.svc_id);
        if let Some(f) = &self.fragment {
            q.append_pair("fragment", f);
        }
        q.finish()
    }
}

pub struct ServiceContext<'a> {
    pub store: &'a Store,
    pub base_url: &'a str,
    /// Packages carrying the content id, newest first. Never empty.
    pub versions: Vec<(String, didlkit_core::Timestamp)>,
}

pub trait OpenUrlService: Send + Sync {
    fn name(&self) -> &'static str;
    fn respond(&self, req: &OpenUrlRequest, cx: &ServiceContext<'_>) -> HttpReply;
}

pub struct ServiceRegistry {
    services: BTreeMap<&'static str, Box<dyn OpenUrlService>>,
}

impl Default for ServiceRegistry {
    fn default() -> Self {
        let mut r = ServiceRegistry::empty();
        r.register(Box::new(Locate));
        r.register(Box::new(Versions));
        r.register(Box::new(Datastream));
        r
    }
}

impl ServiceRegistry {
    pub fn empty() -> Self {
        ServiceRegistry { services: BTreeMap::new() }
    }

    pub fn register(&mut self, service: Box<dyn OpenUrlService>) {
        self.services.insert(service.name(), service);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.services.keys().copied()
    }

    pub fn handle(&self, req: Result<OpenUrlRequest, String>, store: &Store, base_url: &str) -> HttpReply {
        let req = match req {
            Ok(r) => r,
            Err(m) => return HttpReply::text(400, m),
        };
        let Some(service) = self.services.get(req.svc_id.as_str()) else {
            return HttpReply::text(400, format!("unknown svc_id {:?}", req.svc_id));
        };
        let versions = store.resolve_content(&req.rft_id);
        if versions.is_empty() {
            return HttpReply::text(404, format!("no package carries {}", req.rft_id));
        }
        service.respond(&req, &ServiceContext { store, base_url, versions })
    }
}

/// OAI GetRecord URL for a package.
pub fn get_record_url(base_url: &str, package_id: &str) -> String {
    let q = form_urlencoded::Serializer::new(String::new())
        .append_pair("verb", "GetRecord")
        .append_pair("metadataPrefix", crate::oai::METADATA_PREFIX)
        .append_pair("identifier", package_id)
        .finish();
    format!("{}/oai?{q}", base_url.trim_end_matches('/'))
}

/// Redirects to the newest package carrying the content.
struct Locate;

impl OpenUrlService for Locate {
    fn name(&self) -> &'static str {
        "locate"
    }

    fn respond(&self, _: &OpenUrlRequest, cx: &ServiceContext<'_>) -> HttpReply {
        let newest = &cx.versions[0].0;
        let target = get_record_url(cx.base_url, newest);
        let mut r = HttpReply::text(302, format!("see {target}"));
        r.headers.push(("Location", target));
        r
    }
}

/// Every package carrying the content, as JSON, newest first.
struct Versions;

impl OpenUrlService for Versions {
    fn name(&self) -> &'static str {
        "versions"
    }

    fn respond(&self, _: &OpenUrlRequest, cx: &ServiceContext<'_>) -> HttpReply {
        let list: Vec<serde_json::Value> = cx
            .versions
            .iter()
            .map(|(p, t)| serde_json::json!({ "package_id": p, "created": format_timestamp(t) }))
            .collect();
        let mut body = serde_json::to_vec_pretty(&list).expect("json serializes");
        body.push(b'\n');
        HttpReply { status: 200, content_type: "application/json", headers: vec![], body }
    }
}

/// The subtree with the given XML id from the newest package that has it.
struct Datastream;

impl OpenUrlService for Datastream {
    fn name(&self) -> &'static str {
        "datastream"
    }

    fn respond(&self, req: &OpenUrlRequest, cx: &ServiceContext<'_>) -> HttpReply {
        let Some(fragment) = &req.fragment else {
            return HttpReply::text(400, "datastream needs a fragment");
        };
        for (package_id, _) in &cx.versions {
            match cx.store.get_fragment(package_id, fragment) {
                Ok(body) => {
                    return HttpReply { status: 200, content_type: "text/xml; charset=utf-8", headers: vec![("X-Package-Id", package_id.clone())], body }
                }
                Err(RepoError::NotFound(_)) => continue,
                Err(e) => return HttpReply::text(500, e.to_string()),
            }
        }
        HttpReply::text(404, format!("no version of {} has fragment {fragment}", req.rft_id))
    }
}
