use std::sync::Arc;
use std::time::Duration;

use chrono::Duration as Span;
use didlkit_access::harvest::{get_record, harvest, HarvestError};
use didlkit_access::oai::OAI_NS;
use didlkit_access::{AccessConfig, AccessService, HttpTransport, OaiRequest};
use didlkit_core::codec::parse_didl;
use didlkit_core::fixtures::{blob_fetcher, SAMPLE75_MANIFEST};
use didlkit_core::resourceio::NoFetch;
use didlkit_core::syntax::{format_timestamp, parse_timestamp};
use didlkit_core::Timestamp;
use didlkit_repository::*;
use proptest::prelude::*;

const BASE: &str = "http://repo.example.org";

fn ts(s: &str) -> Timestamp {
    parse_timestamp(s).unwrap()
}

fn store() -> (tempfile::TempDir, Arc<Store>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open_with(dir.path(), StoreConfig { authority: "lanl-repo".into(), ..Default::default() }).unwrap();
    (dir, Arc::new(store))
}

fn service(store: &Arc<Store>, page_size: usize) -> AccessService {
    let config = AccessConfig { page_size, ..AccessConfig::new(BASE) };
    AccessService::new(store.clone(), config).with_clock(Arc::new(FixedClock(ts("2026-01-01T00:00:00Z"))))
}

/// Ingests `n` synthetic manifests one second apart from `start`.
fn fill(store: &Store, n: u64, start: &str, seed: u64) -> Vec<String> {
    let clock = SteppingClock::new(ts(start), Span::seconds(1));
    let ids = SeededIds::new(seed);
    (0..n).map(|i| store.ingest(&synthetic(i), &NoFetch, &clock, &ids).unwrap()).collect()
}

fn body(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn error_code(bytes: &[u8]) -> Option<String> {
    let text = body(bytes);
    let doc = roxmltree::Document::parse(&text).unwrap();
    doc.root_element().children().find(|c| c.has_tag_name((OAI_NS, "error"))).and_then(|e| e.attribute("code")).map(String::from)
}

fn declaration_stripped(bytes: &[u8]) -> Vec<u8> {
    didlkit_access::oai::embeddable(bytes).as_bytes().to_vec()
}

#[test]
fn get_record_carries_sample_document_and_creation_datestamp() {
    let (_d, store) = store();
    let created = ts("2004-11-22T18:07:18Z");
    let manifest = AssetManifest::from_json(SAMPLE75_MANIFEST).unwrap();
    let pid = store.ingest(&manifest, &blob_fetcher(), &FixedClock(created), &SeededIds::new(7)).unwrap();
    let svc = service(&store, 10);
    let rec = get_record(&svc, &pid).unwrap();
    assert_eq!(rec.identifier, pid);
    assert_eq!(format_timestamp(&rec.datestamp), "2004-11-22T18:07:18Z");
    let stored = store.get_package(&pid).unwrap();
    assert_eq!(rec.document, declaration_stripped(&stored.document_bytes));
    let embedded = parse_didl(&rec.document).into_clean().unwrap();
    assert_eq!(embedded, parse_didl(&stored.document_bytes).into_clean().unwrap());
    assert_eq!(embedded.document_created, Some(created));
    assert_eq!(embedded.document_id.as_deref(), Some(pid.as_str()));
    let text = body(&svc.oai(&[("verb", "GetRecord"), ("metadataPrefix", "didl"), ("identifier", &pid)]));
    assert!(text.contains("<oai:about><oai_dc:dc"), "{text}");
    assert!(text.contains("<oai:responseDate>2026-01-01T00:00:00Z</oai:responseDate>"));
}

#[test]
fn protocol_errors_are_in_band() {
    let (_d, store) = store();
    fill(&store, 2, "2010-01-01T00:00:00Z", 1);
    let svc = service(&store, 10);
    let cases: &[(&[(&str, &str)], &str)] = &[
        (&[("verb", "GetRecord"), ("metadataPrefix", "didl"), ("identifier", "info:lanl-repo/i/nope")], "idDoesNotExist"),
        (&[("verb", "Frobnicate")], "badVerb"),
        (&[], "badVerb"),
        (&[("verb", "GetRecord"), ("metadataPrefix", "didl")], "badArgument"),
        (&[("verb", "ListRecords")], "badArgument"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "didl"), ("from", "yesterday")], "badArgument"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "didl"), ("from", "2010-01-02"), ("until", "2010-01-01")], "badArgument"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "didl"), ("from", "2010-01-01"), ("until", "2010-01-01T00:00:00Z")], "badArgument"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "oai_dc")], "cannotDisseminateFormat"),
        (&[("verb", "ListRecords"), ("resumptionToken", "garbage")], "badResumptionToken"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "didl"), ("from", "2020-01-01")], "noRecordsMatch"),
        (&[("verb", "ListRecords"), ("metadataPrefix", "didl"), ("set", "x")], "noSetHierarchy"),
        (&[("verb", "ListSets")], "noSetHierarchy"),
        (&[("verb", "ListMetadataFormats"), ("identifier", "info:x/none")], "idDoesNotExist"),
    ];
    for (pairs, code) in cases {
        assert_eq!(error_code(&svc.oai(pairs)).as_deref(), Some(*code), "{pairs:?}");
    }
    let bad_verb = body(&svc.oai(&[("verb", "Frobnicate"), ("x", "1")]));
    assert!(bad_verb.contains(&format!("<oai:request>{BASE}/oai</oai:request>")), "{bad_verb}");
}

#[test]
fn identify_and_formats() {
    let (_d, store) = store();
    let pids = fill(&store, 3, "2010-01-01T00:00:00Z", 2);
    let svc = service(&store, 10);
    let text = body(&svc.oai(&[("verb", "Identify")]));
    assert!(text.contains("<oai:earliestDatestamp>2010-01-01T00:00:00Z</oai:earliestDatestamp>"));
    assert!(text.contains("<oai:deletedRecord>no</oai:deletedRecord>"));
    assert!(text.contains("<oai:granularity>YYYY-MM-DDThh:mm:ssZ</oai:granularity>"));
    let formats = body(&svc.oai(&[("verb", "ListMetadataFormats"), ("identifier", &pids[0])]));
    assert!(formats.contains("<oai:metadataPrefix>didl</oai:metadataPrefix>"));
    assert!(error_code(formats.as_bytes()).is_none());
}

#[test]
fn single_instant_windows_select_one_record() {
    let (_d, store) = store();
    let pids = fill(&store, 6, "2010-01-01T00:00:00Z", 3);
    let svc = service(&store, 2);
    for pid in &pids {
        let t = store.header(pid).unwrap().created;
        let h = harvest(&svc, Some(t), Some(t), true).unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(&h.records[0].identifier, pid);
    }
    let day = harvest_window(&svc, "2010-01-01", "2010-01-01");
    assert_eq!(day, 6);
    assert_eq!(harvest_window(&svc, "2009-12-31", "2009-12-31"), 0);
}

fn harvest_window(svc: &AccessService, from: &str, until: &str) -> usize {
    let bytes = svc.oai(&[("verb", "ListIdentifiers"), ("metadataPrefix", "didl"), ("from", from), ("until", until)]);
    let text = body(&bytes);
    let n = text.matches("<oai:header>").count();
    let mut token = resumption(&text);
    let mut total = n;
    while let Some(t) = token {
        let text = body(&svc.oai(&[("verb", "ListIdentifiers"), ("resumptionToken", &t)]));
        total += text.matches("<oai:header>").count();
        token = resumption(&text);
    }
    total
}

fn resumption(text: &str) -> Option<String> {
    let start = text.find("<oai:resumptionToken>")? + "<oai:resumptionToken>".len();
    let end = text[start..].find('<')?;
    Some(text[start..start + end].to_string())
}

#[test]
fn full_harvest_reconstructs_store() {
    let (_d, store) = store();
    fill(&store, 10, "2010-01-01T00:00:00Z", 4);
    let svc = service(&store, 3);
    let h = harvest(&svc, None, None, true).unwrap();
    assert_eq!(h.tokens, 3);
    assert_eq!(h.token_elements, 4);
    assert_eq!(h.requests, 4);
    let headers = store.all_headers();
    assert_eq!(h.records.len(), headers.len());
    for (rec, hdr) in h.records.iter().zip(&headers) {
        assert_eq!(rec.identifier, hdr.package_id);
        assert_eq!(rec.datestamp, hdr.created);
        let stored = store.get_package(&hdr.package_id).unwrap();
        assert_eq!(parse_didl(&rec.document).into_clean().unwrap(), parse_didl(&stored.document_bytes).into_clean().unwrap());
        assert_eq!(parse_didl(&rec.document).document.unwrap().document_created, Some(rec.datestamp));
    }
}

#[test]
fn last_page_of_resumed_list_has_empty_token() {
    let (_d, store) = store();
    fill(&store, 3, "2010-01-01T00:00:00Z", 5);
    let svc = service(&store, 2);
    let first = body(&svc.oai(&[("verb", "ListIdentifiers"), ("metadataPrefix", "didl")]));
    let tok = resumption(&first).unwrap();
    let last = body(&svc.oai(&[("verb", "ListIdentifiers"), ("resumptionToken", &tok)]));
    assert!(last.contains("<oai:resumptionToken/>"));
    assert_eq!(last.matches("<oai:header>").count(), 1);
}

#[test]
fn identical_requests_give_identical_bodies() {
    let (_d, store) = store();
    let pids = fill(&store, 4, "2010-01-01T00:00:00Z", 6);
    let svc = service(&store, 3);
    let requests = [
        OaiRequest::verb("Identify"),
        OaiRequest::verb("GetRecord").arg("identifier", &pids[1]).arg("metadataPrefix", "didl"),
        OaiRequest::verb("ListRecords").arg("metadataPrefix", "didl"),
        OaiRequest::verb("ListIdentifiers").arg("metadataPrefix", "didl").arg("from", "2010-01-01T00:00:01Z"),
    ];
    for r in &requests {
        assert_eq!(svc.oai_request(r), svc.oai_request(r));
    }
}

fn kev(rft: &str, svc: &str, fragment: Option<&str>) -> Vec<(String, String)> {
    let mut v = vec![("url_ver".into(), "Z39.88-2004".into()), ("rft_id".into(), rft.into()), ("svc_id".into(), svc.into())];
    if let Some(f) = fragment {
        v.push(("fragment".into(), f.into()));
    }
    v
}

fn versions_of(store: &Store, content_id: &str, stamps: &[&str]) -> Vec<String> {
    let mut m = synthetic(0);
    m.content_id = content_id.into();
    let ids = SeededIds::new(99);
    stamps.iter().map(|t| store.ingest(&m, &NoFetch, &FixedClock(ts(t)), &ids).unwrap()).collect()
}

#[test]
fn openurl_services() {
    let (_d, store) = store();
    let cid = "info:doi/10.1045/july95-arms";
    let pids = versions_of(&store, cid, &["2010-01-01T00:00:00Z", "2010-01-02T00:00:00Z", "2010-01-03T00:00:00Z"]);
    let svc = service(&store, 10);

    let r = svc.openurl(&kev(cid, "versions", None));
    assert_eq!(r.status, 200);
    let list: Vec<serde_json::Value> = serde_json::from_slice(&r.body).unwrap();
    let got: Vec<&str> = list.iter().map(|v| v["package_id"].as_str().unwrap()).collect();
    assert_eq!(got, [pids[2].as_str(), pids[1].as_str(), pids[0].as_str()]);
    assert_eq!(list[0]["created"], "2010-01-03T00:00:00Z");

    let r = svc.openurl(&kev(cid, "locate", None));
    assert_eq!(r.status, 302);
    let loc = r.header("location").unwrap();
    assert_eq!(loc, didlkit_access::openurl::get_record_url(BASE, &pids[2]));
    let q: Vec<(String, String)> = url::Url::parse(loc).unwrap().query_pairs().into_owned().collect();
    assert!(q.contains(&("identifier".into(), pids[2].clone())));
    // locate is the default service.
    assert_eq!(svc.openurl(&[("rft_id", cid)]).header("location"), Some(loc));

    let item = store.get_package(&pids[0]).unwrap().item_xml_ids[0].clone();
    let r = svc.openurl(&kev(cid, "datastream", Some(&item)));
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type, "text/xml; charset=utf-8");
    assert_eq!(r.body, store.get_fragment(&pids[0], &item).unwrap());
    assert_eq!(r.header("x-package-id"), Some(pids[0].as_str()));

    assert_eq!(svc.openurl(&kev(cid, "datastream", Some("uuid-missing"))).status, 404);
    assert_eq!(svc.openurl(&kev(cid, "datastream", None)).status, 400);
    assert_eq!(svc.openurl(&kev("info:doi/10.0/unknown", "versions", None)).status, 404);
    assert_eq!(svc.openurl(&kev("not a uri", "versions", None)).status, 400);
    assert_eq!(svc.openurl(&kev(cid, "teleport", None)).status, 400);
    assert_eq!(svc.openurl(&[("url_ver", "Z39.88-1999"), ("rft_id", cid)]).status, 400);
}

#[test]
fn locate_breaks_ties_by_package_id() {
    let (_d, store) = store();
    let cid = "info:x/tied";
    let mut pids = versions_of(&store, cid, &["2011-05-05T05:05:05Z", "2011-05-05T05:05:05Z", "2011-05-05T05:05:05Z"]);
    pids.sort();
    let svc = service(&store, 10);
    let r = svc.openurl(&kev(cid, "locate", None));
    assert_eq!(r.header("location").unwrap(), didlkit_access::openurl::get_record_url(BASE, &pids[0]));
    let list: Vec<serde_json::Value> = serde_json::from_slice(&svc.openurl(&kev(cid, "versions", None)).body).unwrap();
    let got: Vec<String> = list.iter().map(|v| v["package_id"].as_str().unwrap().to_string()).collect();
    assert_eq!(got, pids);
}

#[test]
fn http_binding_matches_in_process_answers() {
    let (_d, store) = store();
    fill(&store, 7, "2012-03-04T05:06:07Z", 8);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let config = AccessConfig { page_size: 3, ..AccessConfig::new(&base) };
    let svc = Arc::new(AccessService::new(store.clone(), config).with_clock(Arc::new(FixedClock(ts("2026-01-01T00:00:00Z")))));
    let server = didlkit_access::spawn_server(listener, svc.clone()).unwrap();
    let http = HttpTransport::new(&server.base_url(), Duration::from_secs(10)).unwrap();
    let over_http = harvest(&http, None, None, true).unwrap();
    assert_eq!(over_http, harvest(svc.as_ref(), None, None, true).unwrap());
    assert_eq!(over_http.records.len(), 7);

    let client = reqwest::blocking::Client::builder().redirect(reqwest::redirect::Policy::none()).build().unwrap();
    let cid = "info:didlkit-synth/asset/3";
    let r = client.get(format!("{base}/openurl?url_ver=Z39.88-2004&rft_id={}&svc_id=locate", url::form_urlencoded::byte_serialize(cid.as_bytes()).collect::<String>())).send().unwrap();
    assert_eq!(r.status().as_u16(), 302);
    let r = client.get(format!("{base}/openurl?rft_id=info%3Anone&svc_id=versions")).send().unwrap();
    assert_eq!(r.status().as_u16(), 404);

    let posted = client.post(format!("{base}/oai")).header("content-type", "application/x-www-form-urlencoded").body("verb=Identify").send().unwrap();
    assert_eq!(posted.bytes().unwrap().to_vec(), svc.oai(&[("verb", "Identify")]));
    match get_record(&http, "info:lanl-repo/i/none") {
        Err(HarvestError::Oai { code, .. }) => assert_eq!(code, "idDoesNotExist"),
        other => panic!("{other:?}"),
    }
    server.stop().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn paged_harvest_equals_unpaged_listing(n in 0u64..12, page in 1usize..6, lo in 0i64..12, width in 0i64..6) {
        let (_d, store) = store();
        fill(&store, n, "2015-06-01T00:00:00Z", n);
        let svc = service(&store, page);
        let start = ts("2015-06-01T00:00:00Z");
        let (from, until) = (start + Span::seconds(lo), start + Span::seconds(lo + width));
        let h = harvest(&svc, Some(from), Some(until), false).unwrap();
        let expect: Vec<String> = store.list_packages(Some(from), Some(until), None, usize::MAX).unwrap().headers.into_iter().map(|h| h.package_id).collect();
        let got: Vec<String> = h.records.into_iter().map(|r| r.identifier).collect();
        prop_assert_eq!(got, expect);
    }
}
