use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use flate2::bufread::{GzDecoder, ZlibDecoder};
use flate2::write::{GzEncoder, ZlibEncoder};
use flate2::Compression;

/// A reversible content coding named by its `contentEncoding` token.
pub trait ContentCoding: Send + Sync {
    fn token(&self) -> &'static str;
    fn encode(&self, data: &[u8]) -> Vec<u8>;
    /// Fails on malformed input or output larger than `max_bytes`.
    fn decode(&self, data: &[u8], max_bytes: usize) -> Result<Vec<u8>, String>;
}

fn read_capped(mut r: impl Read, max_bytes: usize, token: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    r.by_ref().take(max_bytes as u64 + 1).read_to_end(&mut out).map_err(|e| format!("{token}: {e}"))?;
    if out.len() > max_bytes {
        return Err(format!("{token}: decoded size exceeds {max_bytes} bytes"));
    }
    Ok(out)
}

pub struct Gzip;

impl ContentCoding for Gzip {
    fn token(&self) -> &'static str {
        "gzip"
    }

    fn encode(&self, data: &[u8]) -> Vec<u8> {
        let mut e = GzEncoder::new(Vec::new(), Compression::default());
        e.write_all(data).and_then(|_| e.finish()).expect("writing to a Vec cannot fail")
    }

    fn decode(&self, data: &[u8], max_bytes: usize) -> Result<Vec<u8>, String> {
        let mut d = GzDecoder::new(data);
        let out = read_capped(&mut d, max_bytes, "gzip")?;
        // Trailing garbage after the member is an error, not silently ignored.
        if !d.into_inner().is_empty() {
            return Err("gzip: trailing data after stream".into());
        }
        Ok(out)
    }
}

/// The HTTP "deflate" coding: a zlib stream.
pub struct Deflate;

impl ContentCoding for Deflate {
    fn token(&self) -> &'static str {
        "deflate"
    }

    fn encode(&self, data: &[u8]) -> Vec<u8> {
        let mut e = ZlibEncoder::new(Vec::new(), Compression::default());
        e.write_all(data).and_then(|_| e.finish()).expect("writing to a Vec cannot fail")
    }

    fn decode(&self, data: &[u8], max_bytes: usize) -> Result<Vec<u8>, String> {
        let mut d = ZlibDecoder::new(data);
        let out = read_capped(&mut d, max_bytes, "deflate")?;
        if !d.into_inner().is_empty() {
            return Err("deflate: trailing data after stream".into());
        }
        Ok(out)
    }
}

/// Supported codings keyed by token.
#[derive(Clone)]
pub struct CodingRegistry {
    codings: BTreeMap<&'static str, Arc<dyn ContentCoding>>,
}

impl Default for CodingRegistry {
    fn default() -> Self {
        let mut r = CodingRegistry { codings: BTreeMap::new() };
        r.register(Arc::new(Gzip));
        r.register(Arc::new(Deflate));
        r
    }
}

impl CodingRegistry {
    pub fn register(&mut self, coding: Arc<dyn ContentCoding>) {
        self.codings.insert(coding.token(), coding);
    }

    pub fn get(&self, token: &str) -> Option<&dyn ContentCoding> {
        self.codings.get(token).map(|c| c.as_ref())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.codings.keys().copied()
    }
}

/// Built-in coding tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodingToken {
    Gzip,
    Deflate,
}

impl CodingToken {
    pub const ALL: [CodingToken; 2] = [CodingToken::Gzip, CodingToken::Deflate];

    pub fn as_str(self) -> &'static str {
        self.coding().token()
    }

    pub fn coding(self) -> &'static dyn ContentCoding {
        match self {
            CodingToken::Gzip => &Gzip,
            CodingToken::Deflate => &Deflate,
        }
    }

    pub fn parse(s: &str) -> Option<CodingToken> {
        CodingToken::ALL.into_iter().find(|t| t.as_str() == s)
    }
}
