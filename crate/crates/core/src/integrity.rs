//! SHA-256 digests with optional Ed25519 signatures for components and whole
//! documents.
//!
//! A component seal is a descriptor whose single statement holds an
//! `integ:Integrity` element. A document seal is an `integ:Integrity`
//! element directly inside `DIDLInfo`. At most one block exists per scope;
//! sealing again replaces it.
//!
//! The document digest covers the canonical bytes of the document with its
//! own block removed (an emptied `DIDLInfo` is dropped as well). Signatures
//! cover [`signed_message`].

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use thiserror::Error;

use crate::codec::{canonical_bytes, CodecError, DSIG_NS, INTEGRITY_NS};
use crate::model::*;
use crate::resourceio::{sha256_hex, Fetcher, Materializer, ResourceError};
use crate::syntax::{format_timestamp, parse_timestamp};
use crate::xml::{QName, XmlElement, XmlNode};
use crate::Timestamp;

pub const DIGEST_ALGORITHM: &str = "sha-256";
pub const SIGNATURE_ALGORITHM: &str = "ed25519";
pub const STATEMENT_MIME: &str = "text/xml; charset=UTF-8";
const MESSAGE_PREFIX: &[u8] = b"didlkit-integrity-v1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Document,
    Component,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Document => "document",
            Scope::Component => "component",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityBlock {
    pub scope: Scope,
    pub algorithm: String,
    /// 64 lowercase hex digits.
    pub digest_hex: String,
    pub signature: Option<SignatureInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureInfo {
    pub key_id: String,
    pub signed_at: Timestamp,
    /// 128 lowercase hex digits.
    pub signature_hex: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Ok,
    DigestMismatch,
    SignatureInvalid,
    Unsealed,
    /// No own block, but an XML-DSig signature is present.
    ForeignSignature,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Ok => "ok",
            Verdict::DigestMismatch => "digest-mismatch",
            Verdict::SignatureInvalid => "signature-invalid",
            Verdict::Unsealed => "unsealed",
            Verdict::ForeignSignature => "foreign-signature",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntegrityError {
    #[error(transparent)]
    Materialize(#[from] ResourceError),
    #[error("component has no resource to seal")]
    NoResources,
    #[error("component resources are not bit-equivalent")]
    NotEquivalent,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("malformed integrity block: {0}")]
    Malformed(String),
    #[error("bad key material: {0}")]
    Key(String),
}

/// A named Ed25519 signing key.
#[derive(Clone)]
pub struct SigningKeyPair {
    pub key_id: String,
    key: SigningKey,
}

impl std::fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigningKeyPair").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

/// On-disk key file: `{"key_id": .., "secret": hex}` or `{"key_id": .., "public": hex}`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct KeyFile {
    pub key_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public: Option<String>,
}

fn hex32(s: &str) -> Result<[u8; 32], IntegrityError> {
    let v = hex::decode(s.trim()).map_err(|e| IntegrityError::Key(e.to_string()))?;
    v.try_into().map_err(|_| IntegrityError::Key("expected 32 bytes".into()))
}

impl SigningKeyPair {
    pub fn from_seed(key_id: impl Into<String>, seed: [u8; 32]) -> Self {
        SigningKeyPair { key_id: key_id.into(), key: SigningKey::from_bytes(&seed) }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn secret_file(&self) -> KeyFile {
        KeyFile { key_id: self.key_id.clone(), secret: Some(hex::encode(self.key.to_bytes())), public: None }
    }

    pub fn public_file(&self) -> KeyFile {
        KeyFile { key_id: self.key_id.clone(), secret: None, public: Some(hex::encode(self.verifying_key().to_bytes())) }
    }

    pub fn from_file(f: &KeyFile) -> Result<Self, IntegrityError> {
        let secret = f.secret.as_deref().ok_or_else(|| IntegrityError::Key("key file has no secret".into()))?;
        Ok(SigningKeyPair::from_seed(f.key_id.clone(), hex32(secret)?))
    }
}

/// Trusted verifying keys by key id.
#[derive(Debug, Clone, Default)]
pub struct Keyring {
    keys: BTreeMap<String, VerifyingKey>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key_id: impl Into<String>, key: VerifyingKey) {
        self.keys.insert(key_id.into(), key);
    }

    pub fn with_pair(mut self, pair: &SigningKeyPair) -> Self {
        self.insert(pair.key_id.clone(), pair.verifying_key());
        self
    }

    /// Accepts public or secret key files.
    pub fn add_file(&mut self, f: &KeyFile) -> Result<(), IntegrityError> {
        let key = match (&f.public, &f.secret) {
            (Some(p), _) => VerifyingKey::from_bytes(&hex32(p)?).map_err(|e| IntegrityError::Key(e.to_string()))?,
            (None, Some(_)) => SigningKeyPair::from_file(f)?.verifying_key(),
            (None, None) => return Err(IntegrityError::Key("key file has neither public nor secret key".into())),
        };
        self.insert(f.key_id.clone(), key);
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<&VerifyingKey> {
        self.keys.get(key_id)
    }
}

/// Bytes covered by a signature.
pub fn signed_message(scope: Scope, digest_hex: &str, signed_at: &str) -> Vec<u8> {
    let mut m = MESSAGE_PREFIX.to_vec();
    for (i, part) in [scope.as_str(), digest_hex, signed_at].iter().enumerate() {
        if i > 0 {
            m.push(0);
        }
        m.extend_from_slice(part.as_bytes());
    }
    m
}

fn integ(local: &str) -> QName {
    QName::new(INTEGRITY_NS, local)
}

impl IntegrityBlock {
    fn new(scope: Scope, digest_hex: String, key: Option<&SigningKeyPair>, now: Timestamp) -> Self {
        let signature = key.map(|k| {
            let signed_at = format_timestamp(&now);
            let sig: Signature = k.key.sign(&signed_message(scope, &digest_hex, &signed_at));
            SignatureInfo { key_id: k.key_id.clone(), signed_at: now, signature_hex: hex::encode(sig.to_bytes()) }
        });
        IntegrityBlock { scope, algorithm: DIGEST_ALGORITHM.into(), digest_hex, signature }
    }

    pub fn to_element(&self) -> XmlElement {
        let digest = XmlElement::new(integ("Digest"))
            .with_hint("integ")
            .with_attr(QName::local("algorithm"), self.algorithm.clone())
            .with_text(self.digest_hex.clone());
        let mut e = XmlElement::new(integ("Integrity"))
            .with_hint("integ")
            .with_attr(QName::local("scope"), self.scope.as_str())
            .with_child(digest);
        if let Some(s) = &self.signature {
            e = e.with_child(
                XmlElement::new(integ("Signature"))
                    .with_hint("integ")
                    .with_attr(QName::local("algorithm"), SIGNATURE_ALGORITHM)
                    .with_attr(QName::local("keyId"), s.key_id.clone())
                    .with_attr(QName::local("signedAt"), format_timestamp(&s.signed_at))
                    .with_text(s.signature_hex.clone()),
            );
        }
        e
    }

    pub fn from_element(e: &XmlElement) -> Result<Self, IntegrityError> {
        let bad = |m: &str| IntegrityError::Malformed(m.to_string());
        if !e.name.is(INTEGRITY_NS, "Integrity") {
            return Err(bad("not an Integrity element"));
        }
        let scope = match e.attr(None, "scope") {
            Some("document") => Scope::Document,
            Some("component") => Scope::Component,
            _ => return Err(bad("scope must be document or component")),
        };
        let digest = e.elements().find(|c| c.name.is(INTEGRITY_NS, "Digest")).ok_or_else(|| bad("no Digest"))?;
        let algorithm = digest.attr(None, "algorithm").unwrap_or_default().to_string();
        let digest_hex = digest.text().trim().to_string();
        let signature = match e.elements().find(|c| c.name.is(INTEGRITY_NS, "Signature")) {
            None => None,
            Some(s) => Some(SignatureInfo {
                key_id: s.attr(None, "keyId").ok_or_else(|| bad("Signature has no keyId"))?.to_string(),
                signed_at: s.attr(None, "signedAt").and_then(parse_timestamp).ok_or_else(|| bad("Signature has no valid signedAt"))?,
                signature_hex: s.text().trim().to_string(),
            }),
        };
        Ok(IntegrityBlock { scope, algorithm, digest_hex, signature })
    }

    fn verify(&self, actual_digest: &str, keyring: &Keyring) -> Verdict {
        if self.algorithm != DIGEST_ALGORITHM || self.digest_hex != actual_digest {
            return Verdict::DigestMismatch;
        }
        let Some(s) = &self.signature else { return Verdict::Ok };
        let Some(key) = keyring.get(&s.key_id) else { return Verdict::SignatureInvalid };
        let Some(sig) = hex::decode(&s.signature_hex).ok().and_then(|b| <[u8; 64]>::try_from(b).ok()) else {
            return Verdict::SignatureInvalid;
        };
        let msg = signed_message(self.scope, &self.digest_hex, &format_timestamp(&s.signed_at));
        match key.verify_strict(&msg, &Signature::from_bytes(&sig)) {
            Ok(()) => Verdict::Ok,
            Err(_) => Verdict::SignatureInvalid,
        }
    }
}

fn is_block(e: &XmlElement) -> bool {
    e.name.is(INTEGRITY_NS, "Integrity")
}

fn is_seal_descriptor(d: &Descriptor) -> bool {
    d.statements.iter().any(|s| s.payload.xml_elements().any(is_block))
}

/// The component's integrity block, if any.
pub fn component_block(comp: &Component) -> Option<Result<IntegrityBlock, IntegrityError>> {
    comp.descriptors.iter().flat_map(|d| &d.statements).flat_map(|s| s.payload.xml_elements()).find(|e| is_block(e)).map(IntegrityBlock::from_element)
}

/// Digest of the bytes every resource of the component materializes to.
fn component_digest(comp: &Component, path: &NodePath, m: &Materializer<'_>) -> Result<String, IntegrityError> {
    if comp.resources.is_empty() {
        return Err(IntegrityError::NoResources);
    }
    let report = m.check_component_equivalence(comp, path)?;
    if !report.equivalent {
        return Err(IntegrityError::NotEquivalent);
    }
    Ok(report.digests[0].1.clone())
}

/// Copy of `comp` with a (re)placed integrity descriptor appended.
pub fn seal_component(comp: &Component, fetcher: &dyn Fetcher, key: Option<&SigningKeyPair>) -> Result<Component, IntegrityError> {
    seal_component_at(comp, &NodePath::root(), &Materializer::new(fetcher), key, chrono::Utc::now())
}

/// As [`seal_component`], with the component's path (for error reporting),
/// a configured materializer and an explicit signing time.
pub fn seal_component_at(
    comp: &Component,
    path: &NodePath,
    m: &Materializer<'_>,
    key: Option<&SigningKeyPair>,
    now: Timestamp,
) -> Result<Component, IntegrityError> {
    let digest = component_digest(comp, path, m)?;
    let block = IntegrityBlock::new(Scope::Component, digest, key, crate::syntax::truncate_seconds(now));
    let mut out = comp.clone();
    out.descriptors.retain(|d| !is_seal_descriptor(d));
    out.descriptors.push(Descriptor::with_statement(Statement::new(Payload::xml(
        STATEMENT_MIME,
        vec![XmlNode::Element(block.to_element())],
    ))));
    Ok(out)
}

pub fn verify_component(comp: &Component, fetcher: &dyn Fetcher, keyring: &Keyring) -> Result<Verdict, IntegrityError> {
    verify_component_with(comp, &NodePath::root(), &Materializer::new(fetcher), keyring)
}

pub fn verify_component_with(comp: &Component, path: &NodePath, m: &Materializer<'_>, keyring: &Keyring) -> Result<Verdict, IntegrityError> {
    let block = match component_block(comp) {
        None => return Ok(Verdict::Unsealed),
        Some(Err(_)) => return Ok(Verdict::DigestMismatch),
        Some(Ok(b)) => b,
    };
    if comp.resources.is_empty() {
        return Ok(Verdict::DigestMismatch);
    }
    let report = m.check_component_equivalence(comp, path)?;
    // Every resource must match the sealed digest.
    for (_, d) in &report.digests {
        let v = block.verify(d, keyring);
        if v != Verdict::Ok {
            return Ok(v);
        }
    }
    Ok(Verdict::Ok)
}

/// `doc` without its document integrity block.
pub fn strip_document_block(doc: &DidlDocument) -> DidlDocument {
    let mut out = doc.clone();
    if let Some(info) = &mut out.didl_info {
        info.retain(|n| !n.as_element().is_some_and(is_block));
        if info.is_empty() {
            out.didl_info = None;
        }
    }
    out
}

pub fn document_block(doc: &DidlDocument) -> Option<Result<IntegrityBlock, IntegrityError>> {
    doc.didl_info.as_ref()?.iter().filter_map(XmlNode::as_element).find(|e| is_block(e)).map(IntegrityBlock::from_element)
}

pub fn document_digest(doc: &DidlDocument) -> Result<String, IntegrityError> {
    Ok(sha256_hex(&canonical_bytes(&strip_document_block(doc))?))
}

pub fn seal_document(doc: &DidlDocument, key: Option<&SigningKeyPair>) -> Result<DidlDocument, IntegrityError> {
    seal_document_at(doc, key, chrono::Utc::now())
}

pub fn seal_document_at(doc: &DidlDocument, key: Option<&SigningKeyPair>, now: Timestamp) -> Result<DidlDocument, IntegrityError> {
    let mut out = strip_document_block(doc);
    let digest = sha256_hex(&canonical_bytes(&out)?);
    let block = IntegrityBlock::new(Scope::Document, digest, key, crate::syntax::truncate_seconds(now));
    out.didl_info.get_or_insert_with(Vec::new).push(XmlNode::Element(block.to_element()));
    Ok(out)
}

fn has_dsig(doc: &DidlDocument) -> bool {
    doc.didl_info
        .iter()
        .flatten()
        .filter_map(XmlNode::as_element)
        .any(|e| e.descendants().iter().any(|d| d.name.is(DSIG_NS, "Signature")))
}

pub fn verify_document(doc: &DidlDocument, keyring: &Keyring) -> Result<Verdict, IntegrityError> {
    let block = match document_block(doc) {
        None if has_dsig(doc) => return Ok(Verdict::ForeignSignature),
        None => return Ok(Verdict::Unsealed),
        Some(Err(_)) => return Ok(Verdict::DigestMismatch),
        Some(Ok(b)) => b,
    };
    if block.scope != Scope::Document {
        return Ok(Verdict::DigestMismatch);
    }
    Ok(block.verify(&document_digest(doc)?, keyring))
}
