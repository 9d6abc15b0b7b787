//! Lexical checks for URIs, MIME media types and timestamps.

use chrono::{DateTime, SecondsFormat, Utc};

pub type Timestamp = DateTime<Utc>;

/// True when `s` is an absolute URI: `scheme ":" rest`, with a non-empty
/// rest made only of URI characters (percent escapes must be complete).
pub fn is_absolute_uri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut sc = scheme.chars();
    if !sc.next().is_some_and(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    if !sc.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return false;
    }
    if rest.is_empty() {
        return false;
    }
    let bytes = rest.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            if !(bytes.get(i + 1).is_some_and(u8::is_ascii_hexdigit) && bytes.get(i + 2).is_some_and(u8::is_ascii_hexdigit)) {
                return false;
            }
            i += 3;
            continue;
        }
        let ok = b.is_ascii_alphanumeric()
            || matches!(
                b,
                b'-' | b'.' | b'_' | b'~' | b':' | b'/' | b'?' | b'#' | b'[' | b']' | b'@' | b'!' | b'$' | b'&'
                    | b'\'' | b'(' | b')' | b'*' | b'+' | b',' | b';' | b'='
            );
        if !ok {
            return false;
        }
        i += 1;
    }
    true
}

/// Lower-cased scheme of an absolute URI.
pub fn uri_scheme(s: &str) -> Option<String> {
    s.split_once(':').map(|(scheme, _)| scheme.to_ascii_lowercase())
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_graphic() && !matches!(c, '(' | ')' | '<' | '>' | '@' | ',' | ';' | ':' | '\\' | '"' | '/' | '[' | ']' | '?' | '=')
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_token_char)
}

/// Parsed media type; `essence` is the lower-cased `type/subtype`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaType {
    pub essence: String,
    pub params: Vec<(String, String)>,
}

/// Parses `type "/" subtype *( ";" parameter )` per RFC 2045.
pub fn parse_media_type(s: &str) -> Option<MediaType> {
    let mut parts = split_params(s)?.into_iter();
    let head = parts.next()?;
    let (ty, sub) = head.trim().split_once('/')?;
    if !is_token(ty) || !is_token(sub) {
        return None;
    }
    let mut params = Vec::new();
    for p in parts {
        let (k, v) = p.trim().split_once('=')?;
        let k = k.trim();
        let v = v.trim();
        if !is_token(k) {
            return None;
        }
        let value = if let Some(inner) = v.strip_prefix('"') {
            inner.strip_suffix('"')?.to_string()
        } else if is_token(v) {
            v.to_string()
        } else {
            return None;
        };
        params.push((k.to_ascii_lowercase(), value));
    }
    Some(MediaType { essence: format!("{}/{}", ty.to_ascii_lowercase(), sub.to_ascii_lowercase()), params })
}

// Splits on ';' outside quoted strings.
fn split_params(s: &str) -> Option<Vec<&str>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut quoted = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if quoted => escaped = true,
            '"' => quoted = !quoted,
            ';' if !quoted => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if quoted {
        return None;
    }
    out.push(&s[start..]);
    Some(out)
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC 3339 timestamp with whole-second precision into UTC.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let t = DateTime::parse_from_rfc3339(s.trim()).ok()?;
    let t = t.with_timezone(&Utc);
    if t.timestamp_subsec_nanos() != 0 {
        return None;
    }
    Some(t)
}

/// Drops sub-second precision.
pub fn truncate_seconds(t: Timestamp) -> Timestamp {
    DateTime::from_timestamp(t.timestamp(), 0).unwrap_or(t)
}
