//! Local HTTP workbench over `nmx-core`.
//!
//! Every response computed from a network carries the version id it was
//! computed against, in the body and in the `x-nmx-version` header. Leak edits
//! go through `NetworkDiff` and are rejected with 409 when their base version
//! is no longer the head of the lineage.

pub mod error;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use nmx_core::format::{export_expanded, load_network, save_network};
use nmx_core::inference::{eliminate_with, Limits, MarginalTable};
use nmx_core::layout::{compute_layout, LayoutResult};
use nmx_core::model::{CumulativeVector, Distribution, Evidence, Network, Node, NodeId};
use nmx_core::subnet::{extract_view, select_view, FoldRecord, MarginalPolicy, ViewSpec};
use nmx_core::versioning::{annotate, diff, Annotation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

pub use error::ApiError;
pub use store::Workbench;

pub const VERSION_HEADER: &str = "x-nmx-version";

type Shared = Arc<Workbench>;
type ApiResult = Result<Response, ApiError>;

pub fn router(bench: Shared) -> Router {
    Router::new()
        .route("/networks", get(list_networks).post(upload_network))
        .route("/networks/{id}/graph", get(graph))
        .route("/networks/{id}/versions", get(versions))
        .route("/networks/{id}/view", post(view))
        .route("/networks/{id}/extract", post(extract))
        .route("/networks/{id}/infer", post(infer))
        .route("/networks/{id}/nodes/{node}/leak", patch(edit_leak))
        .route("/networks/{id}/diff/{v1}/{v2}", get(diff_versions))
        .route("/networks/{id}/export", get(export))
        .with_state(bench)
}

/// Loopback unless `open`, in which case every interface.
pub fn bind_address(port: u16, open: bool) -> SocketAddr {
    let ip = if open { Ipv4Addr::UNSPECIFIED } else { Ipv4Addr::LOCALHOST };
    SocketAddr::from((ip, port))
}

/// Serves on an already bound listener until the task is cancelled.
pub async fn serve(listener: TcpListener, bench: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(bench)).await
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn versioned(status: StatusCode, version: &str, body: Value) -> Response {
    let mut resp = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(version) {
        resp.headers_mut().insert(VERSION_HEADER, v);
    }
    resp
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::unprocessable(format!("worker failed: {e}")))?
}

#[derive(Debug, Default, Deserialize)]
struct VersionQuery {
    version: Option<String>,
}

async fn list_networks(State(bench): State<Shared>) -> Json<Value> {
    Json(json!({ "networks": bench.list() }))
}

async fn upload_network(State(bench): State<Shared>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let net = load_network(text)?;
    let lineage = bench.insert(net, None);
    let summary = lineage.summary();
    Ok(versioned(StatusCode::CREATED, &summary.version.clone(), json!(summary)))
}

#[derive(Serialize)]
struct GraphNode<'a> {
    id: &'a NodeId,
    name: &'a str,
    states: &'a [String],
    labels: &'a BTreeSet<String>,
    parents: &'a [NodeId],
    level: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leak: Option<&'a [f64]>,
}

fn graph_json(net: &Network) -> Result<Value, ApiError> {
    let levels = nmx_core::model::level_assignment(net)?;
    let nodes: Vec<GraphNode> = net
        .nodes()
        .map(|n| GraphNode {
            id: &n.id,
            name: &n.name,
            states: n.domain.states(),
            labels: &n.labels,
            parents: n.parents(),
            level: levels[&n.id],
            prior: n.prior().map(|p| p.probabilities.as_slice()),
            leak: n.family().map(|f| f.leak.values()),
        })
        .collect();
    let arcs: Vec<Value> = net.arcs().iter().map(|(p, c)| json!({ "parent": p, "child": c })).collect();
    Ok(json!({ "title": net.title(), "nodes": nodes, "arcs": arcs }))
}

async fn graph(State(bench): State<Shared>, Path(id): Path<String>, Query(q): Query<VersionQuery>) -> ApiResult {
    let (version, net) = bench.get(&id)?.snapshot(q.version.as_deref())?;
    let mut body = graph_json(&net)?;
    body["id"] = json!(id);
    body["version"] = json!(version);
    Ok(versioned(StatusCode::OK, &version, body))
}

async fn versions(State(bench): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let lineage = bench.get(&id)?;
    let history = lineage.history();
    let head = history.last().unwrap().clone();
    Ok(versioned(StatusCode::OK, &head, json!({ "id": id, "version": head, "history": history })))
}

#[derive(Serialize)]
struct ViewResponse {
    id: String,
    version: String,
    nodes: BTreeSet<NodeId>,
    layout: LayoutResult,
}

async fn view(
    State(bench): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
    body: Bytes,
) -> ApiResult {
    let spec: ViewSpec = parse_body(&body)?;
    let (version, net) = bench.get(&id)?.snapshot(q.version.as_deref())?;
    let resp = blocking(move || {
        let nodes = select_view(&net, &spec)?;
        let layout = compute_layout(&net, &nodes)?;
        Ok(ViewResponse { id, version, nodes, layout })
    })
    .await?;
    Ok(versioned(StatusCode::OK, &resp.version.clone(), json!(resp)))
}

#[derive(Debug, Default, Deserialize)]
struct ExtractQuery {
    version: Option<String>,
    #[serde(default)]
    policy: Option<MarginalPolicy>,
}

#[derive(Serialize)]
struct ExtractResponse {
    id: String,
    version: String,
    source: store::Origin,
    nodes: usize,
    folds: Vec<FoldRecord>,
}

async fn extract(
    State(bench): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ExtractQuery>,
    body: Bytes,
) -> ApiResult {
    let spec: ViewSpec = parse_body(&body)?;
    let (version, net) = bench.get(&id)?.snapshot(q.version.as_deref())?;
    let policy = q.policy.unwrap_or_default();
    let sub = blocking(move || Ok(extract_view(&net, &spec, policy)?)).await?;
    let folds = sub.folds().to_vec();
    let nodes = sub.network.len();
    let origin = store::Origin { lineage: id, version };
    let lineage = bench.insert(sub.network, Some(origin.clone()));
    let (new_version, _) = lineage.head();
    let resp = ExtractResponse {
        id: lineage.id.clone(),
        version: new_version.clone(),
        source: origin,
        nodes,
        folds,
    };
    Ok(versioned(StatusCode::CREATED, &new_version, json!(resp)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InferRequest {
    /// Node id to state name or index.
    #[serde(default)]
    evidence: BTreeMap<String, Value>,
    /// Nodes to report; all nodes when absent.
    #[serde(default)]
    query: Option<BTreeSet<NodeId>>,
}

fn evidence_from(net: &Network, raw: &BTreeMap<String, Value>) -> Result<Evidence, ApiError> {
    let mut pairs = Vec::with_capacity(raw.len());
    for (k, v) in raw {
        let state = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) if n.is_u64() => n.to_string(),
            other => return Err(ApiError::bad_request(format!("evidence for `{k}` must be a state name or index, got {other}"))),
        };
        pairs.push(format!("{k}={state}"));
    }
    Ok(Evidence::parse_pairs(net, &pairs)?)
}

/// Posterior marginals by variable elimination over `query`, or every node.
/// The CLI `infer` command calls this too.
pub fn posterior(net: &Network, evidence: &Evidence, query: Option<&BTreeSet<NodeId>>) -> nmx_core::Result<MarginalTable> {
    match query {
        Some(q) => eliminate_with(net, evidence, q, Limits::default()),
        None => eliminate_with(net, evidence, &net.ids().cloned().collect(), Limits::default()),
    }
}

async fn infer(
    State(bench): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
    body: Bytes,
) -> ApiResult {
    let req: InferRequest = if body.is_empty() { InferRequest::default() } else { parse_body(&body)? };
    let (version, net) = bench.get(&id)?.snapshot(q.version.as_deref())?;
    let evidence = evidence_from(&net, &req.evidence)?;
    let marginals = blocking(move || Ok(posterior(&net, &evidence, req.query.as_ref())?)).await?;
    Ok(versioned(
        StatusCode::OK,
        &version,
        json!({ "id": id, "version": version, "marginals": marginals }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakEdit {
    base_version: String,
    leak: Vec<f64>,
}

async fn edit_leak(
    State(bench): State<Shared>,
    Path((id, node_id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let edit: LeakEdit = parse_body(&body)?;
    let lineage = bench.get(&id)?;
    let (_, head) = lineage.head();
    match head.node(&node_id) {
        None => return Err(ApiError::not_found(format!("node `{node_id}`"))),
        Some(n) if n.is_root() => {
            return Err(ApiError::unprocessable(format!("`{node_id}` is a root node and has no leak")))
        }
        Some(_) => {}
    }
    let (d, next) = lineage.commit(&edit.base_version, |current| {
        let nodes: Vec<Node> = current
            .nodes()
            .map(|n| {
                let mut n = n.clone();
                if n.id.as_str() == node_id {
                    if let Distribution::Family(f) = &mut n.distribution {
                        f.leak = CumulativeVector::from_raw(edit.leak.clone());
                    }
                }
                n
            })
            .collect();
        Network::new_unchecked(current.title(), nodes)?
            .with_provenance(current.provenance().cloned())
            .validated()
    })?;
    let annotation = annotate(&next, &d);
    Ok(versioned(
        StatusCode::OK,
        &d.target,
        json!({
            "id": id,
            "version": d.target,
            "base_version": d.base,
            "changed": !d.is_empty(),
            "annotation": annotation,
        }),
    ))
}

async fn diff_versions(State(bench): State<Shared>, Path((id, v1, v2)): Path<(String, String, String)>) -> ApiResult {
    let lineage = bench.get(&id)?;
    let (_, a) = lineage.snapshot(Some(&v1))?;
    let (_, b) = lineage.snapshot(Some(&v2))?;
    let d = diff(&a, &b);
    let annotation: Annotation = annotate(&b, &d);
    Ok(versioned(
        StatusCode::OK,
        &v2,
        json!({
            "id": id,
            "base": v1,
            "target": v2,
            "version": v2,
            "annotation": annotation,
            "diff": serde_json::from_str::<Value>(&nmx_core::format::save_diff(&d)).unwrap(),
        }),
    ))
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    version: Option<String>,
    format: Option<String>,
}

async fn export(State(bench): State<Shared>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> ApiResult {
    let (version, net) = bench.get(&id)?.snapshot(q.version.as_deref())?;
    let text = match q.format.as_deref().unwrap_or("nmx-net") {
        "nmx-net" | "net" => save_network(&net),
        "nmx-expanded" | "expanded" => blocking(move || Ok(export_expanded(&net)?)).await?,
        other => return Err(ApiError::bad_request(format!("unknown export format `{other}`"))),
    };
    let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], text).into_response();
    if let Ok(v) = HeaderValue::from_str(&version) {
        resp.headers_mut().insert(VERSION_HEADER, v);
    }
    Ok(resp)
}
