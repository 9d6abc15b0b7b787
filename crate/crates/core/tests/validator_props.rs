use didlkit_core::codec::{parse_didl, serialize_didl};
use didlkit_core::model::*;
use didlkit_core::validator::{rule_catalog, validate, Mode, RuleRegistry, Severity};
use didlkit_testkit::{arb_document, arb_entity};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_documents_pass_without_findings(doc in arb_document()) {
        let report = validate(&doc, None);
        prop_assert!(report.findings.is_empty(), "{}", report.to_text());
    }

    #[test]
    fn adding_a_clean_subtree_keeps_passing(doc in arb_document(), extra in arb_entity()) {
        prop_assert!(validate(&doc, None).passed);
        let mut bigger = doc.clone();
        bigger.root_entities.push(extra);
        prop_assert!(validate(&bigger, None).passed);
    }

    #[test]
    fn reports_are_reproducible(doc in arb_document()) {
        let mut doc = doc;
        // Seed a few findings so the ordering is exercised.
        if let Some(Entity::Item(i)) = doc.root_entities.first_mut() {
            i.children.push(Entity::Item(Item::default()));
            i.children.push(Entity::Component(Component::default()));
        }
        doc.document_id = Some("relative/id".into());
        let a = serde_json::to_vec(&validate(&doc, None).to_json()).unwrap();
        let again = parse_didl(&serialize_didl(&doc).unwrap()).into_clean().unwrap();
        let b = serde_json::to_vec(&validate(&again, None).to_json()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, serde_json::to_vec(&validate(&doc, None).to_json()).unwrap());
    }
}

#[test]
fn catalog_lists_every_rule_once_in_order() {
    let ids: Vec<&str> = rule_catalog().iter().map(|r| r.id).collect();
    assert_eq!(ids, ["R1", "R2", "R3", "R4", "R5", "R6", "R6b", "R7", "R8", "R9", "R10", "W1"]);
    let deep: Vec<&str> = rule_catalog().iter().filter(|r| r.mode == Mode::Deep).map(|r| r.id).collect();
    assert_eq!(deep, ["R9"]);
    assert!(rule_catalog().iter().all(|r| (r.severity == Severity::Warning) == r.id.starts_with('W')));
}

#[test]
fn empty_registry_reports_nothing() {
    let doc = DidlDocument::new(vec![Entity::Component(Component::default())]);
    assert!(RuleRegistry::empty().validate(&doc, None).findings.is_empty());
    assert!(!validate(&doc, None).passed);
}

#[test]
fn strict_promotes_warnings() {
    let doc = DidlDocument::new(vec![Entity::Item(Item::default())]);
    let report = validate(&doc, None);
    assert!(report.passed);
    assert_eq!(report.rule_ids(), ["W1"]);
    assert!(!report.strict().passed);
}
