use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use nmx_core::format::{load_expanded, load_network, save_network};
use nmx_core::generate::{gen_random, GeneratorParams};
use nmx_core::versioning::version_id;
use serde_json::{json, Value};
use tempfile::TempDir;

fn nmx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmx")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nmx(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &TempDir, preset: &str, seed: u64) -> PathBuf {
    let path = dir.path().join(format!("{preset}-{seed}.json"));
    ok(&["gen", "--preset", preset, "--seed", &seed.to_string(), "-o", s(&path)]);
    path
}

#[test]
fn gen_is_deterministic_and_valid() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "tiny", 7);
    let again = ok(&["gen", "--preset", "tiny", "--seed", "7"]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.trim_end(), again.trim_end());
    assert_eq!(text, save_network(&gen_random(&GeneratorParams::tiny(7)).unwrap()));

    let report: Value = serde_json::from_str(&ok(&["validate", s(&a)])).unwrap();
    assert_eq!(report["valid"], json!(true));
    assert_eq!(report["nodes"], json!(10));
    assert_eq!(report["hierarchy"]["is_hierarchical"], json!(true));
    assert_eq!(report["version"], json!(version_id(&load_network(&text).unwrap())));
}

#[test]
fn cpcs_scale_preset_counts() {
    let report: Value = {
        let dir = TempDir::new().unwrap();
        let net = gen(&dir, "cpcs-scale", 1);
        serde_json::from_str(&ok(&["validate", s(&net)])).unwrap()
    };
    assert_eq!((report["nodes"].clone(), report["arcs"].clone(), report["roots"].clone()), (json!(448), json!(908), json!(74)));
}

#[test]
fn expand_writes_loadable_tables() {
    let dir = TempDir::new().unwrap();
    let net = gen(&dir, "tiny", 2);
    let text = ok(&["expand", s(&net)]);
    let expanded = load_expanded(&text).unwrap();
    assert_eq!(expanded.nodes.len(), 10);
}

#[test]
fn extract_then_audit_is_sound() {
    let dir = TempDir::new().unwrap();
    let net = gen(&dir, "two-level", 3);
    let sub = dir.path().join("sub.json");
    let out = nmx(&[
        "extract", s(&net), "--seed", "D000", "--relation", "predecessors_and_successors", "-o", s(&sub),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("folded"));

    let audit: Value =
        serde_json::from_str(&ok(&["audit", s(&net), "--sub", s(&sub), "--tolerance", "1e-9"])).unwrap();
    assert!(audit["deviation"].as_f64().unwrap() <= 1e-9, "{audit}");

    let by_view: Value = serde_json::from_str(&ok(&[
        "audit", s(&net), "--seed", "D000", "--relation", "predecessors_and_successors",
    ]))
    .unwrap();
    assert_eq!(by_view["deviation"], audit["deviation"]);

    // a subnetwork audited against the wrong source
    let other = gen(&dir, "two-level", 4);
    let out = nmx(&["audit", s(&other), "--sub", s(&sub)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("version mismatch"), "{}", stderr(&out));
}

#[test]
fn diff_then_apply_round_trips() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "tiny", 1);
    let b = gen(&dir, "tiny", 2);
    let d = dir.path().join("a-b.json");
    ok(&["diff", s(&a), s(&b), "-o", s(&d)]);
    let applied = ok(&["apply", s(&a), s(&d)]);
    assert_eq!(applied, std::fs::read_to_string(&b).unwrap());

    // the diff does not apply to a network other than its base
    let out = nmx(&["apply", s(&b), s(&d)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn import_with_frequency_map() {
    let dir = TempDir::new().unwrap();
    let structure = dir.path().join("structure.json");
    std::fs::write(
        &structure,
        r#"{
            "format": "nmx-structure", "version": 1, "title": "toy",
            "nodes": [
                {"id": "D1", "domain": ["absent", "present"], "prior": [0.9, 0.1]},
                {"id": "F", "domain": ["absent", "present"], "leak": [0.99, 1.0]}
            ],
            "arcs": [{"parent": "D1", "child": "F", "weight": 4}]
        }"#,
    )
    .unwrap();
    let fmap = dir.path().join("fmap.json");
    std::fs::write(&fmap, r#"{"0": 0.0, "1": 0.1, "2": 0.2, "3": 0.3, "4": 0.5, "5": 0.9}"#).unwrap();

    let net = load_network(&ok(&["import", s(&structure), "--fmap", s(&fmap)])).unwrap();
    let fam = net.node("F").unwrap().family().unwrap();
    assert_eq!(fam.curve(0, 1).unwrap().values(), &[0.5, 1.0]);

    let out = nmx(&["import", s(&structure)]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("placeholder"));
}

#[test]
fn infer_reports_posteriors() {
    let dir = TempDir::new().unwrap();
    let net = gen(&dir, "tiny", 5);
    let body: Value = serde_json::from_str(&ok(&["infer", s(&net), "--evidence", "F000=1", "--query", "P000"])).unwrap();
    let p = body["marginals"]["P000"].as_array().unwrap();
    let total: f64 = p.iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(body["marginals"].as_object().unwrap().len(), 1);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"format": "nmx-net", "version": 1, "title": "bad", "nodes": [
            {"id": "A", "name": "A", "domain": ["a", "b"], "prior": [0.5, 0.5]},
            {"id": "C", "name": "C", "domain": ["x", "y", "z"],
             "family": {"parents": ["A"], "activation": {"A": {"1": [0.5, 0.9, 1.0]}}, "leak": [0.9, 0.8, 1.0]}}
        ]}"#,
    )
    .unwrap();
    let out = nmx(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cumulative vector not nondecreasing"), "{}", stderr(&out));

    assert_eq!(nmx(&["validate", "/nonexistent/net.json"]).status.code(), Some(1));
    assert_eq!(nmx(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(nmx(&["gen", "--seed", "many"]).status.code(), Some(2));
    assert_eq!(nmx(&["gen", "--preset", "huge"]).status.code(), Some(1));

    let net = gen(&dir, "tiny", 1);
    assert_eq!(nmx(&["extract", s(&net), "--seed", "P000", "--relation", "cousins"]).status.code(), Some(2));
    assert_eq!(nmx(&["audit", s(&net)]).status.code(), Some(2));
    assert_eq!(nmx(&["infer", s(&net), "--evidence", "P000"]).status.code(), Some(1));
    assert_eq!(nmx(&["infer", s(&net), "--evidence", "NOPE=0"]).status.code(), Some(1));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, Value) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status: u16 = raw[9..12].parse().unwrap();
    let (_, payload) = raw.split_once("\r\n\r\n").unwrap();
    (status, serde_json::from_str(payload).unwrap())
}

#[test]
fn served_infer_equals_cli_infer() {
    let dir = TempDir::new().unwrap();
    let net = gen(&dir, "tiny", 11);
    let mut child = Command::new(env!("CARGO_BIN_EXE_nmx"))
        .args(["serve", "--port", "0", s(&net)])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let server = Server(child);
    let addr = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some(a) = line.strip_prefix("listening on http://") {
            break a.to_string();
        }
    };

    let (status, list) = http(&addr, "GET", "/networks", "");
    assert_eq!(status, 200);
    assert_eq!(list["networks"][0]["id"], json!("n1"));

    let (status, served) = http(&addr, "POST", "/networks/n1/infer", r#"{"evidence": {"F001": 1, "P002": 0}}"#);
    assert_eq!(status, 200, "{served}");

    let (status, _) = http(&addr, "POST", "/networks/n1/infer", r#"{"evidence": {"F001": 7}}"#);
    assert_eq!(status, 400);
    drop(server);

    let local: Value =
        serde_json::from_str(&ok(&["infer", s(&net), "--evidence", "F001=1", "P002=0"])).unwrap();
    assert_eq!(served["marginals"], local["marginals"]);
    assert_eq!(served["version"], local["version"]);
}
