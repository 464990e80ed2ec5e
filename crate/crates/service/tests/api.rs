use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nmx_core::format::{load_network, save_network};
use nmx_core::generate::{gen_random, GeneratorParams};
use nmx_core::inference::{compare_marginals, enumerate_joint};
use nmx_core::model::{Evidence, Network, Node, NodeId, NoisyMaxFamily, OrderedDomain};
use nmx_core::versioning::version_id;
use nmx_service::{posterior, router, Workbench, VERSION_HEADER};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    version: Option<String>,
    text: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<String>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.into()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let version = resp
        .headers()
        .get(VERSION_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        version,
        text: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

fn or_node(id: &str, parents: &[(&str, f64)], leak: f64) -> Node {
    Node::child(OrderedDomain::binary(), NoisyMaxFamily::noisy_or(id, parents, leak).unwrap())
}

fn chain() -> Network {
    Network::new(
        "chain",
        vec![
            Node::root("A", OrderedDomain::binary(), vec![0.7, 0.3]),
            or_node("B", &[("A", 0.8)], 0.1),
            or_node("C", &[("B", 0.6)], 0.05),
        ],
    )
    .unwrap()
}

fn app() -> Router {
    router(Arc::new(Workbench::new()))
}

async fn upload(app: &Router, net: &Network) -> (String, String) {
    let r = call(app, Method::POST, "/networks", save_network(net)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    let body = r.json();
    (body["id"].as_str().unwrap().to_string(), body["version"].as_str().unwrap().to_string())
}

#[tokio::test]
async fn upload_list_and_graph() {
    let app = app();
    let net = chain();
    let (id, version) = upload(&app, &net).await;
    assert_eq!(version, version_id(&net));

    let list = call(&app, Method::GET, "/networks", "").await.json();
    assert_eq!(list["networks"][0]["id"], json!(id));
    assert_eq!(list["networks"][0]["arcs"], json!(2));

    let g = call(&app, Method::GET, &format!("/networks/{id}/graph"), "").await;
    assert_eq!(g.status, StatusCode::OK);
    assert_eq!(g.version.as_deref(), Some(version.as_str()));
    let body = g.json();
    assert_eq!(body["nodes"][2]["level"], json!(2));
    assert_eq!(body["arcs"][0], json!({"parent": "A", "child": "B"}));
}

#[tokio::test]
async fn markov_blanket_view_with_layout() {
    let app = app();
    let (id, _) = upload(&app, &chain()).await;
    let r = call(
        &app,
        Method::POST,
        &format!("/networks/{id}/view"),
        json!({"seeds": ["B"], "relation": "markov_blanket"}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let body = r.json();
    assert_eq!(body["nodes"], json!(["A", "B", "C"]));
    for (node, layer) in [("A", 0), ("B", 1), ("C", 2)] {
        assert_eq!(body["layout"]["nodes"][node]["layer"], json!(layer));
    }
}

#[tokio::test]
async fn non_monotone_leak_is_422() {
    let app = app();
    let (id, version) = upload(&app, &chain()).await;
    let r = call(
        &app,
        Method::PATCH,
        &format!("/networks/{id}/nodes/B/leak"),
        json!({"base_version": version, "leak": [0.9, 0.8]}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = r.json();
    let messages: Vec<&str> = body["report"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["message"].as_str().unwrap())
        .collect();
    assert!(messages.iter().any(|m| m.contains("cumulative vector not nondecreasing")), "{messages:?}");
    // nothing was committed
    let h = call(&app, Method::GET, &format!("/networks/{id}/versions"), "").await.json();
    assert_eq!(h["history"], json!([version]));
}

#[tokio::test]
async fn leak_edit_bumps_version_and_annotates() {
    let app = app();
    let (id, v0) = upload(&app, &chain()).await;
    let r = call(
        &app,
        Method::PATCH,
        &format!("/networks/{id}/nodes/C/leak"),
        json!({"base_version": v0, "leak": [0.8, 1.0]}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let v1 = r.json()["version"].as_str().unwrap().to_string();
    assert_ne!(v0, v1);
    assert_eq!(r.version.as_deref(), Some(v1.as_str()));

    // the returned version replays to the same content hash
    let exported = call(&app, Method::GET, &format!("/networks/{id}/export?version={v1}"), "").await;
    let net = load_network(&exported.text).unwrap();
    assert_eq!(version_id(&net), v1);
    assert_eq!(net.node("C").unwrap().family().unwrap().leak.values(), &[0.8, 1.0]);

    // stale base
    let stale = call(
        &app,
        Method::PATCH,
        &format!("/networks/{id}/nodes/C/leak"),
        json!({"base_version": v0, "leak": [0.7, 1.0]}).to_string(),
    )
    .await;
    assert_eq!(stale.status, StatusCode::CONFLICT);

    let d = call(&app, Method::GET, &format!("/networks/{id}/diff/{v0}/{v1}"), "").await;
    assert_eq!(d.status, StatusCode::OK);
    let ann = &d.json()["annotation"];
    assert_eq!(ann["nodes"]["C"], json!("changed"));
    assert_eq!(ann["nodes"]["A"], json!("unchanged"));
}

#[tokio::test]
async fn concurrent_edits_serialize() {
    let app = app();
    let (id, v0) = upload(&app, &chain()).await;
    let uri = format!("/networks/{id}/nodes/B/leak");
    let a = call(&app, Method::PATCH, &uri, json!({"base_version": v0, "leak": [0.5, 1.0]}).to_string());
    let b = call(&app, Method::PATCH, &uri, json!({"base_version": v0, "leak": [0.6, 1.0]}).to_string());
    let (a, b) = tokio::join!(a, b);
    let mut codes = [a.status, b.status];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
    let h = call(&app, Method::GET, &format!("/networks/{id}/versions"), "").await.json();
    assert_eq!(h["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    assert_eq!(call(&app, Method::GET, "/networks/nope/graph", "").await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::POST, "/networks", "{ not json").await.status, StatusCode::BAD_REQUEST);
    let missing = call(&app, Method::POST, "/networks", r#"{"format": "nmx-net", "version": 1}"#).await;
    assert_eq!(missing.status, StatusCode::BAD_REQUEST);

    let (id, v) = upload(&app, &chain()).await;
    let bad_view = call(
        &app,
        Method::POST,
        &format!("/networks/{id}/view"),
        json!({"seeds": ["B"], "relation": "cousins"}).to_string(),
    )
    .await;
    assert_eq!(bad_view.status, StatusCode::BAD_REQUEST);
    let unknown_node = call(
        &app,
        Method::PATCH,
        &format!("/networks/{id}/nodes/Q/leak"),
        json!({"base_version": v, "leak": [0.5, 1.0]}).to_string(),
    )
    .await;
    assert_eq!(unknown_node.status, StatusCode::NOT_FOUND);
    let root_leak = call(
        &app,
        Method::PATCH,
        &format!("/networks/{id}/nodes/A/leak"),
        json!({"base_version": v, "leak": [0.5, 1.0]}).to_string(),
    )
    .await;
    assert_eq!(root_leak.status, StatusCode::UNPROCESSABLE_ENTITY);
    let strict = Network::new(
        "strict",
        vec![
            Node::root("A", OrderedDomain::binary(), vec![0.7, 0.3]),
            or_node("B", &[("A", 0.8)], 0.0),
        ],
    )
    .unwrap();
    let (sid, _) = upload(&app, &strict).await;
    // B cannot be present without A when its leak is null
    let impossible = call(
        &app,
        Method::POST,
        &format!("/networks/{sid}/infer"),
        json!({"evidence": {"A": "absent", "B": "present"}}).to_string(),
    )
    .await;
    assert_eq!(impossible.status, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown_version = call(&app, Method::GET, &format!("/networks/{id}/graph?version=abc"), "").await;
    assert_eq!(unknown_version.status, StatusCode::NOT_FOUND);
    let bad_format = call(&app, Method::GET, &format!("/networks/{id}/export?format=xml"), "").await;
    assert_eq!(bad_format.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_tables_are_507() {
    let mut nodes: Vec<Node> = (0..12)
        .map(|i| Node::root(format!("R{i:02}"), OrderedDomain::indexed(4), vec![0.25; 4]))
        .collect();
    let parents: Vec<(String, f64)> = (0..12).map(|i| (format!("R{i:02}"), 0.5)).collect();
    let refs: Vec<(&str, f64)> = parents.iter().map(|(s, p)| (s.as_str(), *p)).collect();
    let mut fam = NoisyMaxFamily::noisy_or("X", &refs, 0.1).unwrap();
    // widen every parent to four states
    for a in &mut fam.activation {
        let c = a[0].clone();
        a.push(c.clone());
        a.push(c);
    }
    nodes.push(Node::child(OrderedDomain::binary(), fam));
    let net = Network::new("wide", nodes).unwrap();
    let app = app();
    let (id, _) = upload(&app, &net).await;
    let r = call(&app, Method::GET, &format!("/networks/{id}/export?format=expanded"), "").await;
    assert_eq!(r.status, StatusCode::INSUFFICIENT_STORAGE, "{}", r.text);
    let r = call(&app, Method::POST, &format!("/networks/{id}/infer"), "{}").await;
    assert_eq!(r.status, StatusCode::INSUFFICIENT_STORAGE, "{}", r.text);
}

#[tokio::test]
async fn infer_matches_library_on_export() {
    let app = app();
    let net = gen_random(&GeneratorParams::tiny(5)).unwrap();
    let (id, version) = upload(&app, &net).await;
    let finding = net.ids().find(|i| i.as_str().starts_with('F')).unwrap().clone();
    let r = call(
        &app,
        Method::POST,
        &format!("/networks/{id}/infer"),
        json!({"evidence": {finding.as_str(): 1}}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.version.as_deref(), Some(version.as_str()));
    let exported = call(&app, Method::GET, &format!("/networks/{id}/export"), "").await;
    let snapshot = load_network(&exported.text).unwrap();
    let ev = Evidence::new().with(finding, 1);
    let direct = posterior(&snapshot, &ev, None).unwrap();
    assert_eq!(r.json()["marginals"], serde_json::to_value(&direct).unwrap());
}

#[tokio::test]
async fn extracted_subnetwork_is_sound() {
    let app = app();
    let net = gen_random(&GeneratorParams::two_level(4, 6, 12, 9)).unwrap();
    let (id, _) = upload(&app, &net).await;
    let r = call(
        &app,
        Method::POST,
        &format!("/networks/{id}/extract"),
        json!({"seeds": ["D000"], "relation": "markov_blanket"}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    let body = r.json();
    let sub_id = body["id"].as_str().unwrap();
    assert_ne!(sub_id, id);
    assert_eq!(body["source"]["lineage"], json!(id));

    let exported = call(&app, Method::GET, &format!("/networks/{sub_id}/export"), "").await;
    let sub = load_network(&exported.text).unwrap();
    assert_eq!(sub.provenance().unwrap().source_version, version_id(&net));
    let kept: BTreeSet<NodeId> = sub.ids().cloned().collect();
    let full = enumerate_joint(&net, &Evidence::new()).unwrap().restrict(&kept);
    let reduced = enumerate_joint(&sub, &Evidence::new()).unwrap();
    assert!(compare_marginals(&full, &reduced).unwrap() <= 1e-9);
}

#[tokio::test]
async fn serves_on_loopback() {
    let addr = nmx_service::bind_address(0, false);
    assert!(addr.ip().is_loopback());
    let listener = tokio::net::TcpListener::bind(addr).await.unwrap();
    let local = listener.local_addr().unwrap();
    let server = tokio::spawn(nmx_service::serve(listener, Arc::new(Workbench::new())));
    let mut stream = tokio::net::TcpStream::connect(local).await.unwrap();
    stream
        .write_all(b"GET /networks HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.ends_with(r#"{"networks":[]}"#), "{buf}");
    server.abort();
}
