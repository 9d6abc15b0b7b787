//! Core DIDL toolkit: document model, XML codec, validation, resource
//! materialization, identification and integrity sealing.

pub mod codec;
pub mod dii;
pub mod fixtures;
pub mod integrity;
pub mod model;
pub mod resourceio;
pub mod syntax;
pub mod validator;
pub mod xml;

pub use syntax::Timestamp;
