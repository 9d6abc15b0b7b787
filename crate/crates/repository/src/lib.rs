//! Package ingestion and storage.
//!
//! A manifest becomes one DIDL package document with a fresh `info:` package
//! id. Packages are reachable two ways: by package id, and by any content
//! identifier they carry.

pub mod builder;
pub mod clock;
pub mod failpoint;
pub mod manifest;
pub mod store;

pub use builder::{build_package, package_id, package_uuid, BuildContext, BuildError};
pub use clock::{Clock, FixedClock, IdSource, RandomIds, SeededIds, SequentialIds, SteppingClock, SystemClock};
pub use manifest::{synthetic, AssetManifest, DatastreamSpec, EmbedPolicy, ManifestError, MetadataBlock, Source};
pub use store::{Page, PackageHeader, PackageRecord, Recovery, RepoError, Store, StoreConfig, DEFAULT_AUTHORITY};
