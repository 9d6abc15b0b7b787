use didlkit_core::codec::{parse_didl, serialize_didl};
use didlkit_core::dii::*;
use didlkit_core::model::*;
use didlkit_testkit::{arb_document, arb_uri, host_paths};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn attach_then_extract_finds_the_host(doc in arb_document(), pick in any::<prop::sample::Index>(), uri in arb_uri()) {
        let hosts = host_paths(&doc);
        let host = pick.get(&hosts).clone();
        let kind = doc.node_at(&host).unwrap().kind();
        let out = attach_identifier(&doc, &host, &uri).unwrap();
        let ids = extract_identifiers(&out).unwrap();
        prop_assert!(ids.iter().any(|i| i.value == uri && i.host == host && i.host_kind == kind));
        prop_assert!(find_by_identifier(&out, &uri).contains(&host));
        let first = identifier_values(out.node_at(&host).unwrap().descriptors());
        prop_assert_eq!(first.first(), Some(&uri));
    }

    #[test]
    fn extraction_order_survives_round_trip(doc in arb_document()) {
        let back = parse_didl(&serialize_didl(&doc).unwrap()).into_clean().unwrap();
        prop_assert_eq!(extract_identifiers(&back).unwrap(), extract_identifiers(&doc).unwrap());
        prop_assert_eq!(extract_related(&back).unwrap(), extract_related(&doc).unwrap());
    }

    #[test]
    fn statements_and_resources_are_never_hosts(doc in arb_document(), uri in arb_uri()) {
        for (path, node) in doc.walk() {
            let kind = node.kind();
            if matches!(kind, EntityKind::Statement | EntityKind::Resource | EntityKind::Descriptor) {
                prop_assert_eq!(attach_identifier(&doc, &path, &uri), Err(DiiError::BadTarget(kind)));
            }
        }
    }
}

#[test]
fn anchor_hosts_are_supported() {
    let anchor = Anchor { fragment: Fragment { fragment_id: "#page(3)".into(), ..Default::default() }, ..Default::default() };
    let comp = Component {
        resources: vec![Resource::new(Payload::by_reference("application/pdf", "http://example.org/a.pdf"))],
        anchors: vec![anchor],
        ..Default::default()
    };
    let doc = DidlDocument::new(vec![Entity::Item(Item { children: vec![Entity::Component(comp)], ..Default::default() })]);
    let anchor_path = NodePath(vec![0, 0, 1]);
    assert_eq!(doc.node_at(&anchor_path).unwrap().kind(), EntityKind::Anchor);
    let out = attach_identifier(&doc, &anchor_path, "info:test/anchor").unwrap();
    let back = parse_didl(&serialize_didl(&out).unwrap()).into_clean().unwrap();
    let ids = extract_identifiers(&back).unwrap();
    assert_eq!(ids.len(), 1);
    assert_eq!((ids[0].host.clone(), ids[0].host_kind), (anchor_path, EntityKind::Anchor));
}

#[test]
fn related_identifier_type_is_verbatim() {
    let src = br#"<didl:DIDL xmlns:didl="urn:mpeg:mpeg21:2002:02-DIDL-NS" xmlns:dii="urn:mpeg:mpeg21:2002:01-DII-NS">
      <didl:Item><didl:Descriptor><didl:Statement mimeType="text/xml; charset=UTF-8">
        <dii:RelatedIdentifier relationshipType="info:rdd/IsAbstractionOf">info:doi/10.1045/july95-arms</dii:RelatedIdentifier>
      </didl:Statement></didl:Descriptor>
      <didl:Component><didl:Resource mimeType="text/plain" ref="http://example.org/x"/></didl:Component></didl:Item></didl:DIDL>"#;
    let doc = parse_didl(src).into_clean().unwrap();
    let rel = extract_related(&doc).unwrap();
    assert_eq!(rel[0].relationship_type.as_deref(), Some("info:rdd/IsAbstractionOf"));
    assert_eq!(rel[0].value, "info:doi/10.1045/july95-arms");
    let back = parse_didl(&serialize_didl(&doc).unwrap()).into_clean().unwrap();
    assert_eq!(extract_related(&back).unwrap(), rel);
}
