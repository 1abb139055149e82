use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use procsight_core::generator::{generate, GeneratorParams};
use procsight_core::llm::{MockProvider, ProviderRegistry};
use procsight_core::model::{CallOutput, GenerationConfig, MethodCallRecord, Timestamp};
use procsight_core::store::TraceStore;
use procsight_core::verbalizer::{template_leaf, VerbalizationInput};
use procsight_core::{build_forest, Explanation};
use procsight_server::{cors_layer, router, AppState, IngestResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    store: Arc<TraceStore>,
    mock: Arc<MockProvider>,
    app: Router,
}

fn harness_with(mock: MockProvider) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TraceStore::open(dir.path()).unwrap());
    let mock = Arc::new(mock);
    let app = router(AppState::new(store.clone(), ProviderRegistry::with_mock(mock.clone())));
    Harness { _dir: dir, store, mock, app }
}

fn harness() -> Harness {
    harness_with(MockProvider::new())
}

impl Harness {
    async fn send(&self, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
        let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_owned());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes, ctype)
    }

    async fn json(&self, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
        let (status, bytes, _) = self.send(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(&bytes))))
    }

    async fn ingest(&self, records: &[MethodCallRecord]) -> (StatusCode, IngestResponse) {
        let body: String = records.iter().map(|r| r.to_wire_line() + "\n").collect();
        let (status, v) = self.json(Method::POST, "/api/records", body).await;
        (status, serde_json::from_value(v).unwrap())
    }
}

fn rec(pid: &str, id: &str, caller: Option<&str>, t: i64) -> MethodCallRecord {
    MethodCallRecord {
        call_id: id.into(),
        process_id: pid.into(),
        component: "CompA".into(),
        method_name: format!("m_{id}"),
        caller_id: caller.map(Into::into),
        inputs: vec![],
        output: CallOutput::Void,
        docstring: Some(format!("doc of {id}")),
        started_at: Timestamp::from_micros(1_000_000 * t),
        ended_at: Timestamp::from_micros(1_000_000 * t + 10),
    }
}

fn assert_error_shape(v: &Value) {
    assert!(v["error"].is_string(), "{v}");
    assert!(v["detail"].is_string(), "{v}");
}

#[tokio::test]
async fn ingest_statuses() {
    let h = harness();
    let (status, v) = h.json(Method::POST, "/api/records", "").await;
    assert_eq!((status, v["accepted"].as_u64()), (StatusCode::OK, Some(0)));

    let three = vec![rec("p", "a", None, 0), rec("p", "b", Some("a"), 1), rec("p", "c", Some("a"), 2)];
    let (status, report) = h.ingest(&three).await;
    assert_eq!((status, report.accepted, report.rejected.len()), (StatusCode::OK, 3, 0));

    let (status, report) = h.ingest(&three).await;
    assert_eq!(status, StatusCode::MULTI_STATUS);
    assert_eq!(report.accepted, 0);
    assert_eq!(report.rejected.iter().map(|r| (r.index, r.reason.as_str())).collect::<Vec<_>>(),
        [(0, "duplicate"), (1, "duplicate"), (2, "duplicate")]);
    assert_eq!(h.store.record_count(), 3);
}

#[tokio::test]
async fn ingest_array_form_and_per_record_errors() {
    let h = harness();
    let mut bad = rec("p", "bad", None, 5);
    bad.ended_at = Timestamp::from_micros(0);
    let body = json!([
        serde_json::to_value(rec("p", "ok", None, 0)).unwrap(),
        {"call_id": "missing-fields"},
        serde_json::to_value(bad).unwrap(),
    ]);
    let (status, v) = h.json(Method::POST, "/api/records", body.to_string()).await;
    assert_eq!(status, StatusCode::MULTI_STATUS);
    assert_eq!(v["accepted"], 1);
    assert_eq!(v["rejected"][0]["index"], 1);
    assert_eq!(v["rejected"][0]["reason"], "malformed");
    assert_eq!(v["rejected"][1]["index"], 2);
    assert_eq!(v["rejected"][1]["reason"], "invalid");
}

#[tokio::test]
async fn ingest_unparseable_body_is_400() {
    let h = harness();
    for body in ["{not json", "[1, 2", "{\"a\":1}\n{oops"] {
        let (status, v) = h.json(Method::POST, "/api/records", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_error_shape(&v);
    }
    assert_eq!(h.store.record_count(), 0);
}

#[tokio::test]
async fn processes_match_store_ordering() {
    let h = harness();
    assert_eq!(h.json(Method::GET, "/api/processes", Body::empty()).await.1, json!([]));
    for i in 0..25 {
        h.ingest(&[rec(&format!("p{i:02}"), &format!("r{i}"), None, (i * 7 % 11) as i64)]).await;
    }
    let (status, v) = h.json(Method::GET, "/api/processes", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, serde_json::to_value(h.store.list_processes(20)).unwrap());
    assert_eq!(v.as_array().unwrap().len(), 20);

    let (_, v) = h.json(Method::GET, "/api/processes?limit=3", Body::empty()).await;
    assert_eq!(v, serde_json::to_value(h.store.list_processes(3)).unwrap());

    let (status, v) = h.json(Method::GET, "/api/processes?limit=-1", Body::empty()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);
}

fn count_nodes(v: &Value) -> usize {
    let mut n = 0;
    let mut stack = vec![v];
    while let Some(node) = stack.pop() {
        n += 1;
        stack.extend(node["children"].as_array().unwrap());
    }
    n
}

#[tokio::test]
async fn tree_endpoint() {
    let h = harness();
    h.ingest(&[rec("single", "only", None, 0)]).await;
    let (status, v) = h.json(Method::GET, "/api/processes/single/tree", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["roots"].as_array().unwrap().len(), 1);
    assert_eq!(v["roots"][0]["children"], json!([]));
    assert_eq!(v["roots"][0]["docstring"], "doc of only");

    let records = generate(&GeneratorParams { calls: 400, max_depth: 8, seed: 9, ..Default::default() }).unwrap();
    let pid = records[0].process_id.clone();
    h.ingest(&records).await;
    let (_, v) = h.json(Method::GET, &format!("/api/processes/{pid}/tree"), Body::empty()).await;
    let total: usize = v["roots"].as_array().unwrap().iter().map(count_nodes).sum();
    assert_eq!(total, h.store.records_for_process(&pid).unwrap().len());

    let forest = build_forest(records.clone()).unwrap();
    let leaf = forest.roots().flat_map(|r| r.preorder().map(|(n, _)| n).collect::<Vec<_>>()).find(|n| n.is_leaf()).unwrap();
    let inner = forest.roots().next().unwrap();
    let (_, v) = h.json(Method::GET, &format!("/api/processes/{pid}/tree?root={}", leaf.call_id()), Body::empty()).await;
    assert_eq!(v["call_id"], leaf.call_id());
    assert_eq!(v["children"], json!([]));
    let (_, v) = h.json(Method::GET, &format!("/api/processes/{pid}/tree?root={}", inner.call_id()), Body::empty()).await;
    assert_eq!(count_nodes(&v), inner.size());
    let expected_children: Vec<_> = inner.children().map(|c| c.call_id().to_owned()).collect();
    let got: Vec<_> = v["children"].as_array().unwrap().iter().map(|c| c["call_id"].as_str().unwrap().to_owned()).collect();
    assert_eq!(got, expected_children);

    for uri in ["/api/processes/nope/tree".to_owned(), format!("/api/processes/{pid}/tree?root=nope")] {
        let (status, v) = h.json(Method::GET, &uri, Body::empty()).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_error_shape(&v);
    }
}

fn explain_body(call_id: &str, config: &GenerationConfig) -> String {
    json!({"call_id": call_id, "config": config}).to_string()
}

#[tokio::test]
async fn explain_template_leaf_matches_verbalizer() {
    let h = harness();
    let leaf = rec("p", "leaf", None, 0);
    h.ingest(std::slice::from_ref(&leaf)).await;
    let config = GenerationConfig { include_docstring: true, ..GenerationConfig::template() };
    let (status, v) = h.json(Method::POST, "/api/explanations", explain_body("leaf", &config)).await;
    assert_eq!(status, StatusCode::OK);
    let e: Explanation = serde_json::from_value(v).unwrap();
    assert_eq!(e.text, template_leaf(&VerbalizationInput::new(&leaf, &config)));
    assert_eq!(e.prompt, None);
    assert!(!e.from_cache);

    // A bare call_id uses the default template config.
    let (status, v) = h.json(Method::POST, "/api/explanations", json!({"call_id": "leaf"}).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["text"], template_leaf(&VerbalizationInput::new(&leaf, &GenerationConfig::template())));
}

#[tokio::test]
async fn explain_mock_repeat_comes_from_cache() {
    let h = harness();
    h.ingest(&[rec("p", "r", None, 0), rec("p", "k", Some("r"), 1)]).await;
    let config = GenerationConfig::llm("mock", "mock-1");
    let (_, first) = h.json(Method::POST, "/api/explanations", explain_body("r", &config)).await;
    assert_eq!(first["from_cache"], false);
    assert_eq!(h.mock.calls(), 2);
    let (status, second) = h.json(Method::POST, "/api/explanations", explain_body("r", &config)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(second["from_cache"], true);
    assert_eq!(second["text"], first["text"]);
    assert_eq!(second["prompt"], first["prompt"]);
    assert_eq!(h.mock.calls(), 2);

    let (status, v) = h.json(Method::DELETE, "/api/explanations/k", Body::empty()).await;
    assert_eq!((status, v["removed"].as_u64()), (StatusCode::OK, Some(2)));
    let (_, third) = h.json(Method::POST, "/api/explanations", explain_body("r", &config)).await;
    assert_eq!(third["from_cache"], false);
    assert_eq!(h.mock.calls(), 4);
}

#[tokio::test]
async fn explain_error_statuses() {
    let h = harness_with(MockProvider::new().failing_on("m_bad"));
    h.ingest(&[rec("p", "r", None, 0), rec("p", "bad", Some("r"), 1)]).await;

    let hot = GenerationConfig { temperature: 3.0, ..GenerationConfig::llm("mock", "mock-1") };
    let cases = [
        (explain_body("r", &hot), StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
        (explain_body("r", &GenerationConfig::llm("mock", "nope")), StatusCode::UNPROCESSABLE_ENTITY, "unavailable_model"),
        (explain_body("ghost", &GenerationConfig::template()), StatusCode::NOT_FOUND, "unknown_call_id"),
        ("{\"call_id\":".to_owned(), StatusCode::BAD_REQUEST, "bad_request"),
        (json!({"call_id": 5}).to_string(), StatusCode::UNPROCESSABLE_ENTITY, "invalid_request"),
    ];
    for (body, status, error) in cases {
        let (got, v) = h.json(Method::POST, "/api/explanations", body.clone()).await;
        assert_eq!((got, v["error"].as_str()), (status, Some(error)), "{body}");
        assert_error_shape(&v);
    }

    let (status, v) = h.json(Method::POST, "/api/explanations", explain_body("r", &GenerationConfig::llm("mock", "mock-1"))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["failing_call_id"], "bad");
    assert!(v["provider_error"].is_string());
    assert_error_shape(&v);
}

#[tokio::test]
async fn providers_match_registry() {
    let h = harness();
    let (status, v) = h.json(Method::GET, "/api/providers", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let registry = ProviderRegistry::with_mock(Arc::new(MockProvider::new()));
    assert_eq!(v, serde_json::to_value(registry.list_providers()).unwrap());
    assert_eq!(v[0]["provider_id"], "mock");
}

#[tokio::test]
async fn ntriples_endpoint_matches_store() {
    let h = harness();
    h.ingest(&[rec("p x", "a", None, 0), rec("p x", "b", Some("a"), 1)]).await;
    let (status, body, ctype) = h.send(Method::GET, "/api/processes/p%20x/ntriples", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("application/n-triples"));
    assert_eq!(String::from_utf8(body).unwrap(), h.store.export_ntriples("p x").unwrap());

    let (status, v) = h.json(Method::GET, "/api/processes/none/ntriples", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_process");
}

#[tokio::test]
async fn unknown_routes_and_methods_are_structured() {
    let h = harness();
    let (status, v) = h.json(Method::GET, "/api/nowhere", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
    let (status, v) = h.json(Method::PUT, "/api/records", Body::empty()).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_error_shape(&v);
}

#[tokio::test]
async fn cors_headers_follow_configured_origin() {
    let h = harness();
    for (origin, request_origin, expected) in [
        ("*", "http://ui.local", Some("*")),
        ("http://ui.local", "http://ui.local", Some("http://ui.local")),
        ("http://ui.local", "http://evil.local", None),
    ] {
        let app = h.app.clone().layer(cors_layer(origin));
        let req = Request::builder()
            .uri("/api/providers")
            .header(header::ORIGIN, request_origin)
            .body(Body::empty())
            .unwrap();
        let resp = app.oneshot(req).await.unwrap();
        let got = resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).map(|v| v.to_str().unwrap().to_owned());
        assert_eq!(got.as_deref(), expected, "{origin} / {request_origin}");
    }
}
