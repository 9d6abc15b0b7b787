//! Shared proptest generators and reference oracles.
//!
//! The oracles are deliberately naive, written from the published
//! algorithm definitions, and share no code with the crates under test.

use didlkit_core::model::*;
use didlkit_core::xml::{QName, XmlElement, XmlNode};
use didlkit_core::Timestamp;
use proptest::collection::vec;
use proptest::prelude::*;

pub mod oracle {
    //! SHA-256 per FIPS 180-4 and RFC 4648 base64, bit by bit.

    const K: [u32; 64] = [
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98,
        0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
        0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8,
        0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
        0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
        0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
        0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2,
    ];

    pub fn sha256(msg: &[u8]) -> [u8; 32] {
        let mut h: [u32; 8] =
            [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19];
        let mut data = msg.to_vec();
        data.push(0x80);
        while data.len() % 64 != 56 {
            data.push(0);
        }
        data.extend_from_slice(&((msg.len() as u64) * 8).to_be_bytes());
        for block in data.chunks(64) {
            let mut w = [0u32; 64];
            for t in 0..16 {
                w[t] = u32::from_be_bytes([block[4 * t], block[4 * t + 1], block[4 * t + 2], block[4 * t + 3]]);
            }
            for t in 16..64 {
                let s0 = w[t - 15].rotate_right(7) ^ w[t - 15].rotate_right(18) ^ (w[t - 15] >> 3);
                let s1 = w[t - 2].rotate_right(17) ^ w[t - 2].rotate_right(19) ^ (w[t - 2] >> 10);
                w[t] = w[t - 16].wrapping_add(s0).wrapping_add(w[t - 7]).wrapping_add(s1);
            }
            let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
            for t in 0..64 {
                let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
                let ch = (e & f) ^ (!e & g);
                let t1 = hh.wrapping_add(s1).wrapping_add(ch).wrapping_add(K[t]).wrapping_add(w[t]);
                let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
                let maj = (a & b) ^ (a & c) ^ (b & c);
                let t2 = s0.wrapping_add(maj);
                hh = g;
                g = f;
                f = e;
                e = d.wrapping_add(t1);
                d = c;
                c = b;
                b = a;
                a = t1.wrapping_add(t2);
            }
            for (x, y) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
                *x = x.wrapping_add(y);
            }
        }
        let mut out = [0u8; 32];
        for (i, word) in h.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
        }
        out
    }

    pub fn sha256_hex(msg: &[u8]) -> String {
        sha256(msg).iter().map(|b| format!("{b:02x}")).collect()
    }

    const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

    pub fn base64(data: &[u8]) -> String {
        let mut out = String::new();
        for chunk in data.chunks(3) {
            let mut buf = [0u8; 3];
            buf[..chunk.len()].copy_from_slice(chunk);
            let n = (buf[0] as u32) << 16 | (buf[1] as u32) << 8 | buf[2] as u32;
            for i in 0..4 {
                if i <= chunk.len() {
                    out.push(ALPHABET[(n >> (18 - 6 * i) & 63) as usize] as char);
                } else {
                    out.push('=');
                }
            }
        }
        out
    }

    pub fn base64_decode(text: &str) -> Option<Vec<u8>> {
        let s: Vec<u8> = text.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
        if !s.len().is_multiple_of(4) {
            return None;
        }
        let mut out = Vec::new();
        for quad in s.chunks(4) {
            let pad = quad.iter().rev().take_while(|&&b| b == b'=').count();
            let mut n = 0u32;
            for &b in &quad[..4 - pad] {
                n = n << 6 | ALPHABET.iter().position(|&a| a == b)? as u32;
            }
            n <<= 6 * pad as u32;
            let bytes = [(n >> 16) as u8, (n >> 8) as u8, n as u8];
            out.extend_from_slice(&bytes[..3 - pad]);
        }
        Some(out)
    }
}

const MIMES: &[&str] = &["text/plain", "application/pdf", "image/png", "text/xml; charset=UTF-8"];
const FOREIGN_NS: &[&str] = &["http://example.org/ns/a", "http://purl.org/dc/elements/1.1/", "urn:x-test:b"];

pub fn arb_uri() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9]{1,8}(/[a-z0-9.]{1,6}){0,2}".prop_map(|s| format!("info:test/{s}")),
        "[a-z]{1,8}\\.[a-z]{2,3}/[a-z0-9]{1,8}".prop_map(|s| format!("http://{s}")),
        "[a-f0-9]{8}".prop_map(|s| format!("urn:uuid:{s}-0000-4000-8000-000000000000")),
    ]
}

/// Character data with markup-significant characters and no leading,
/// trailing or whitespace-only runs.
pub fn arb_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9<>&'\"é€][a-zA-Z0-9 <>&'\"é€]{0,24}[a-zA-Z0-9.;]"
}

pub fn arb_timestamp() -> impl Strategy<Value = Timestamp> {
    (0i64..4_102_444_800).prop_map(|s| Timestamp::from_timestamp(s, 0).expect("in range"))
}

fn arb_local() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9]{0,7}"
}

/// A foreign-namespace element tree of bounded depth.
pub fn arb_foreign_element() -> impl Strategy<Value = XmlElement> {
    let leaf = (prop::sample::select(FOREIGN_NS), arb_local(), prop::option::of(arb_text()), vec((arb_local(), arb_text()), 0..3))
        .prop_map(|(ns, local, text, attrs)| {
            let mut e = XmlElement::new(QName::new(ns, local));
            for (k, v) in attrs {
                e = e.with_attr(QName::local(k), v);
            }
            match text {
                Some(t) => e.with_text(t),
                None => e,
            }
        });
    leaf.prop_recursive(2, 8, 3, |inner| {
        (prop::sample::select(FOREIGN_NS), arb_local(), vec(inner, 1..3)).prop_map(|(ns, local, kids)| {
            let mut e = XmlElement::new(QName::new(ns, local));
            e.children = kids.into_iter().map(XmlNode::Element).collect();
            e
        })
    })
}

fn arb_statement() -> impl Strategy<Value = Statement> {
    prop_oneof![
        arb_text().prop_map(|t| Payload { mime_type: "text/plain".into(), content: Content::Text(t), ..Default::default() }),
        arb_foreign_element().prop_map(|e| Payload::xml("text/xml; charset=UTF-8", vec![XmlNode::Element(e)])),
        arb_uri().prop_map(|u| didlkit_core::dii::identifier_descriptor(&u).statements[0].payload.clone()),
        arb_uri().prop_map(|u| Payload::by_reference("text/plain", u)),
    ]
    .prop_map(Statement::new)
}

pub fn arb_descriptor() -> impl Strategy<Value = Descriptor> {
    (vec(arb_statement(), 1..3), prop::option::of(arb_statement())).prop_map(|(statements, nested)| Descriptor {
        statements,
        nested_descriptors: nested.map(|s| vec![Descriptor::with_statement(s)]).unwrap_or_default(),
        ..Default::default()
    })
}

fn payload_for(mime: &str, kind: u8, bytes: Vec<u8>, text: String, uri: String, el: XmlElement) -> Payload {
    match kind {
        0 => Payload::by_reference(mime, uri),
        1 => Payload { mime_type: mime.into(), encoding: Some("base64".into()), content: Content::Text(oracle::base64(&bytes)), ..Default::default() },
        2 => Payload { mime_type: mime.into(), content: Content::Text(text), ..Default::default() },
        _ => Payload::xml(mime, vec![XmlNode::Element(el)]),
    }
}

fn arb_resource(mime: &'static str) -> impl Strategy<Value = Resource> {
    (0u8..4, vec(any::<u8>(), 1..48), arb_text(), arb_uri(), arb_foreign_element())
        .prop_map(move |(k, b, t, u, e)| Resource::new(payload_for(mime, k, b, t, u, e)))
}

/// A component whose resources all share one media type.
pub fn arb_component() -> impl Strategy<Value = Component> {
    prop::sample::select(MIMES).prop_flat_map(|mime| {
        (vec(arb_descriptor(), 0..2), vec(arb_resource(mime), 1..3))
            .prop_map(|(descriptors, resources)| Component { descriptors, resources, ..Default::default() })
    })
}

fn arb_item() -> impl Strategy<Value = Item> {
    let leaf = (vec(arb_descriptor(), 0..3), vec(arb_component(), 1..3)).prop_map(|(descriptors, comps)| Item {
        descriptors,
        children: comps.into_iter().map(Entity::Component).collect(),
        ..Default::default()
    });
    leaf.prop_recursive(2, 6, 2, |inner| {
        (vec(arb_descriptor(), 0..2), vec(inner, 1..3), vec(arb_component(), 0..2)).prop_map(|(descriptors, items, comps)| Item {
            descriptors,
            children: comps.into_iter().map(Entity::Component).chain(items.into_iter().map(Entity::Item)).collect(),
            ..Default::default()
        })
    })
}

pub fn arb_entity() -> impl Strategy<Value = Entity> {
    prop_oneof![
        3 => arb_item().prop_map(Entity::Item),
        1 => (vec(arb_descriptor(), 0..2), vec(arb_item(), 1..3)).prop_map(|(descriptors, items)| Entity::Container(Container {
            descriptors,
            children: items.into_iter().map(Entity::Item).collect(),
            ..Default::default()
        })),
    ]
}

/// Gives every entity an XML ID `id-<n>` when bit `n % 64` of `mask` is set.
pub fn assign_ids(doc: &mut DidlDocument, mask: u64) {
    fn visit(e: &mut Entity, n: &mut u32, mask: u64) {
        let on = mask >> (*n % 64) & 1 == 1;
        let id = on.then(|| format!("id-{n}"));
        *n += 1;
        match e {
            Entity::Container(c) => {
                c.xml_id = id;
                c.children.iter_mut().for_each(|k| visit(k, n, mask));
            }
            Entity::Item(i) => {
                i.xml_id = id;
                i.children.iter_mut().for_each(|k| visit(k, n, mask));
            }
            Entity::Component(c) => c.xml_id = id,
        }
    }
    let mut n = 0;
    doc.root_entities.iter_mut().for_each(|e| visit(e, &mut n, mask));
}

/// Structurally valid documents: every one passes shallow validation.
pub fn arb_document() -> impl Strategy<Value = DidlDocument> {
    (vec(arb_entity(), 1..3), prop::option::of(arb_uri()), prop::option::of(arb_timestamp()), any::<u64>()).prop_map(
        |(roots, id, created, mask)| {
            let mut doc = DidlDocument::new(roots);
            doc.document_id = id;
            doc.document_created = created;
            assign_ids(&mut doc, mask);
            doc
        },
    )
}

/// A host path (container, item, component) chosen from `doc`.
pub fn host_paths(doc: &DidlDocument) -> Vec<NodePath> {
    doc.walk()
        .into_iter()
        .filter(|(_, n)| matches!(n.kind(), EntityKind::Container | EntityKind::Item | EntityKind::Component))
        .map(|(p, _)| p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::oracle::*;

    #[test]
    fn sha256_known_answers() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(
            sha256_hex(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
        );
    }

    #[test]
    fn base64_known_answers() {
        for (plain, enc) in [("", ""), ("f", "Zg=="), ("fo", "Zm8="), ("foo", "Zm9v"), ("foobar", "Zm9vYmFy")] {
            assert_eq!(base64(plain.as_bytes()), enc);
            assert_eq!(base64_decode(enc).unwrap(), plain.as_bytes());
        }
        assert_eq!(base64_decode("Zm9v!"), None);
    }
}
