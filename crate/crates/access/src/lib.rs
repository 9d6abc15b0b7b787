//! Access protocols over a package store: OAI-PMH keyed by package
//! identifier and OpenURL keyed by content identifier.

pub mod harvest;
pub mod oai;
pub mod openurl;
pub mod server;

use std::sync::Arc;

use didlkit_repository::{Clock, Store, SystemClock};

pub use harvest::{get_record, harvest, Harvest, HarvestError, HarvestedRecord, HttpTransport, OaiTransport};
pub use oai::{OaiError, OaiRequest, OaiVerb, VerbRegistry};
pub use openurl::{HttpReply, OpenUrlRequest, OpenUrlService, ServiceRegistry};
pub use server::{router, serve, spawn_server, ServerHandle};

pub const DEFAULT_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone)]
pub struct AccessConfig {
    pub repository_name: String,
    /// Public root URL with no trailing slash; `/oai` and `/openurl` hang off it.
    pub base_url: String,
    pub admin_email: String,
    pub page_size: usize,
}

impl AccessConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        AccessConfig {
            repository_name: "didlkit repository".into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            admin_email: "admin@localhost".into(),
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

/// Request handling shared by the HTTP server and in-process callers.
/// Holds no per-request state.
pub struct AccessService {
    pub store: Arc<Store>,
    pub config: AccessConfig,
    clock: Arc<dyn Clock>,
    verbs: VerbRegistry,
    services: ServiceRegistry,
}

impl AccessService {
    pub fn new(store: Arc<Store>, config: AccessConfig) -> Self {
        AccessService { store, config, clock: Arc::new(SystemClock), verbs: VerbRegistry::default(), services: ServiceRegistry::default() }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_verbs(mut self, verbs: VerbRegistry) -> Self {
        self.verbs = verbs;
        self
    }

    pub fn with_services(mut self, services: ServiceRegistry) -> Self {
        self.services = services;
        self
    }

    fn oai_context(&self) -> oai::OaiContext<'_> {
        oai::OaiContext {
            store: &self.store,
            repository_name: &self.config.repository_name,
            base_url: &self.config.base_url,
            admin_email: &self.config.admin_email,
            page_size: self.config.page_size,
        }
    }

    /// OAI-PMH response for raw parameter pairs.
    pub fn oai<K: AsRef<str>, V: AsRef<str>>(&self, pairs: &[(K, V)]) -> Vec<u8> {
        self.verbs.handle(OaiRequest::from_pairs(pairs), &self.oai_context(), self.clock.now())
    }

    pub fn oai_request(&self, req: &OaiRequest) -> Vec<u8> {
        self.verbs.handle(Ok(req.clone()), &self.oai_context(), self.clock.now())
    }

    /// OpenURL response for raw KEV pairs.
    pub fn openurl<K: AsRef<str>, V: AsRef<str>>(&self, pairs: &[(K, V)]) -> HttpReply {
        self.services.handle(OpenUrlRequest::from_pairs(pairs), &self.store, &self.config.base_url)
    }
}
