use std::collections::BTreeMap;
use std::time::Duration;

use bytes::Bytes;
use http_body_util::Full;
use hyper::{Request, StatusCode};
use qspy_circuit::digest::sha256_hex;
use qspy_circuit::parse_circuit;
use qspy_collector::{Collector, CollectorConfig, IngestResponse, Label, RecordSummary, Report};
use qspy_net::http::{request_once, Exchange, Route, Target};
use qspy_net::{tls, CertificateAuthority};
use qspy_wire::{
    CapturedResults, CapturedSubmission, ConsolidatedRecord, PartialReason, RecordTimestamps, SubmissionMetadata,
    IDEMPOTENCY_HEADER,
};

const DAY: Duration = Duration::from_secs(86_400);

fn complete(job: &str, circuit: &str) -> ConsolidatedRecord {
    ConsolidatedRecord {
        job_id: Some(job.into()),
        complete: true,
        partial_reason: None,
        flow_id: Some(format!("flow-{job}")),
        circuit_payload: Some(CapturedSubmission {
            body: String::new(),
            body_sha256: sha256_hex(circuit),
            parse_failed: false,
            circuit_text: Some(circuit.into()),
            circuit: Some(parse_circuit(circuit).unwrap()),
            shots: Some(100),
            backend_name: Some("sim".into()),
            client_metadata: BTreeMap::new(),
        }),
        submission_metadata: Some(SubmissionMetadata {
            host: "localhost".into(),
            path: "/api/v1/jobs".into(),
            auth_subject: Some("alice".into()),
            headers: BTreeMap::new(),
            client_addr: "127.0.0.1:1".into(),
        }),
        results_payload: Some(CapturedResults {
            body: "{}".into(),
            body_sha256: sha256_hex("{}"),
            result: None,
        }),
        timestamps: RecordTimestamps {
            t_submitted: Some(1),
            t_bound: Some(2),
            t_completed: Some(3),
            ..Default::default()
        },
    }
}

struct Fixture {
    ca: CertificateAuthority,
    cfg: CollectorConfig,
    _dir: tempfile::TempDir,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let ca = CertificateAuthority::generate("QSPY-TEST-ROGUE Root", "test", DAY).unwrap();
    let leaf = ca.issue_leaf(&["localhost".into()], DAY).unwrap();
    let (cert, key) = leaf.write_to(dir.path(), "collector").unwrap();
    let cfg = CollectorConfig {
        port: 0,
        bind_address: "127.0.0.1".into(),
        tls_cert_path: cert,
        tls_key_path: key,
        store_path: dir.path().join("data/records.jsonl"),
    };
    Fixture { ca, cfg, _dir: dir }
}

async fn call(f: &Fixture, c: &Collector, method: &str, path: &str, key: Option<&str>, body: String) -> Exchange {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(k) = key {
        req = req.header(IDEMPOTENCY_HEADER, k);
    }
    request_once(
        &Target::new("localhost", c.local_addr().port()),
        &Route::Direct,
        tls::client_config(&[f.ca.cert_der().clone()]).unwrap(),
        req.body(Full::new(Bytes::from(body))).unwrap(),
        Duration::from_secs(10),
    )
    .await
    .unwrap()
}

async fn post(f: &Fixture, c: &Collector, rec: &ConsolidatedRecord) -> (StatusCode, IngestResponse) {
    let ex = call(f, c, "POST", "/api/v1/records", Some(&rec.idempotency_key()), serde_json::to_string(rec).unwrap()).await;
    (ex.status, serde_json::from_slice(&ex.body).unwrap())
}

const BELL: &str = "qubits 2\nh 0\ncx 0 1\nmeasure 0\nmeasure 1";

#[tokio::test]
async fn ingest_dedupes_and_categorizes() {
    let f = fixture();
    let c = Collector::start(&f.cfg).await.unwrap();
    let rec = complete("J1", BELL);
    assert_eq!(post(&f, &c, &rec).await, (StatusCode::CREATED, IngestResponse { store_id: 1, duplicate: false }));
    assert_eq!(post(&f, &c, &rec).await, (StatusCode::OK, IngestResponse { store_id: 1, duplicate: true }));
    assert_eq!(c.len(), 1);
    assert_eq!(c.records()[0].category.label, Label::BellLike);

    let ex = call(&f, &c, "GET", "/api/v1/records?category=BELL_LIKE", None, String::new()).await;
    let list: Vec<RecordSummary> = serde_json::from_slice(&ex.body).unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!((list[0].qubits, list[0].depth), (Some(2), Some(3)));
    c.shutdown().await;
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let f = fixture();
    let c = Collector::start(&f.cfg).await.unwrap();
    let body = serde_json::to_string(&complete("J", BELL)).unwrap();
    let ex = call(&f, &c, "POST", "/api/v1/records", None, body).await;
    assert_eq!(ex.status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&ex.body).contains("missing_idempotency_key"));

    let ex = call(&f, &c, "POST", "/api/v1/records", Some("k"), "{\"job_id\":".into()).await;
    assert_eq!(ex.status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&ex.body).contains("malformed_record"));

    let mut contradictory = complete("J", BELL);
    contradictory.results_payload = None;
    let ex = call(&f, &c, "POST", "/api/v1/records", Some("k"), serde_json::to_string(&contradictory).unwrap()).await;
    assert_eq!(ex.status, StatusCode::BAD_REQUEST);

    let ex = call(&f, &c, "GET", "/api/v1/records?flavour=up", None, String::new()).await;
    assert_eq!(ex.status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&ex.body).contains("unknown_filter"));

    assert_eq!(call(&f, &c, "DELETE", "/api/v1/records", None, String::new()).await.status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(call(&f, &c, "GET", "/nope", None, String::new()).await.status, StatusCode::NOT_FOUND);
    assert!(c.is_empty());
    c.shutdown().await;
}

#[tokio::test]
async fn partial_records_are_stored_and_filterable() {
    let f = fixture();
    let c = Collector::start(&f.cfg).await.unwrap();
    let mut p = complete("P", BELL);
    p.complete = false;
    p.partial_reason = Some(PartialReason::TtlExpired);
    p.results_payload = None;
    p.timestamps.t_completed = None;
    p.timestamps.t_evicted = Some(9);
    post(&f, &c, &p).await;
    post(&f, &c, &complete("Q", "qubits 1\nx 0\nmeasure 0")).await;

    let ex = call(&f, &c, "GET", "/api/v1/records?completeness=partial", None, String::new()).await;
    let list: Vec<RecordSummary> = serde_json::from_slice(&ex.body).unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0].job_id.as_deref(), Some("P"));
    // Category still comes from the circuit.
    assert_eq!(list[0].category, Label::BellLike);

    let ex = call(&f, &c, "GET", "/api/v1/records?min_qubits=3", None, String::new()).await;
    assert_eq!(serde_json::from_slice::<Vec<RecordSummary>>(&ex.body).unwrap(), vec![]);
    c.shutdown().await;
}

#[tokio::test]
async fn reports_agree_across_formats() {
    let f = fixture();
    let c = Collector::start(&f.cfg).await.unwrap();
    for i in 0..3 {
        post(&f, &c, &complete(&format!("B{i}"), BELL)).await;
    }
    post(&f, &c, &complete("D", "qubits 1\nx 0\nmeasure 0")).await;

    let json = call(&f, &c, "GET", "/api/v1/report?format=json", None, String::new()).await;
    let report: Report = serde_json::from_slice(&json.body).unwrap();
    assert_eq!(report.categories[&Label::BellLike], 3);
    assert_eq!(report.categories[&Label::Deterministic], 1);
    assert_eq!(report.categories[&Label::GhzLike], 0);
    assert_eq!(report.qubit_histogram, BTreeMap::from([(1, 1), (2, 3)]));

    let text = call(&f, &c, "GET", "/api/v1/report?format=text", None, String::new()).await;
    let text = String::from_utf8(text.body.to_vec()).unwrap();
    assert_eq!(text, report.to_text());
    assert!(text.contains("category BELL_LIKE 3\n"));
    assert!(text.contains("total_records 4\n"));
    c.shutdown().await;
}

#[tokio::test]
async fn acknowledged_records_survive_restart() {
    let mut f = fixture();
    let c = Collector::start(&f.cfg).await.unwrap();
    let a = complete("A", BELL);
    post(&f, &c, &a).await;
    post(&f, &c, &complete("B", BELL)).await;
    let port = c.local_addr().port();
    let before = c.records();
    c.shutdown().await;

    f.cfg.port = port;
    let c = Collector::start(&f.cfg).await.unwrap();
    assert_eq!(c.records(), before);
    // The key index is rebuilt too.
    assert_eq!(post(&f, &c, &a).await.1, IngestResponse { store_id: 1, duplicate: true });
    assert_eq!(post(&f, &c, &complete("C", BELL)).await.1.store_id, 3);
    c.shutdown().await;
}
