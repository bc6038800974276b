mod common;

use adaptest::formats::parse_transcript;
use adaptest_core::engine::{replay, ReplayMode};
use common::server::{write_config, Server};
use common::{assert_no_forbidden, calvi, TOKEN};
use serde_json::{json, Value};

#[test]
fn killing_the_server_loses_no_answers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let server = Server::start(&cfg);
    let (s, v) = server.json("POST", "/api/v1/sessions", Some(&json!({ "bank_id": "synthetic-calvi" })), None);
    assert_eq!(s, 201);
    let id = v["session_id"].as_str().unwrap().to_string();
    assert_eq!(id.len(), 32);
    let mut item = v["item"].clone();
    let mut answered: Vec<(String, u64)> = Vec::new();

    // Kill after every few answers and carry on against a fresh process.
    let mut server = Some(server);
    let mut k = 0u64;
    loop {
        let srv = server.take().unwrap();
        let pick = k % 2;
        let (s, v) = srv.json(
            "POST",
            &format!("/api/v1/sessions/{id}/answers"),
            Some(&json!({ "item_id": item["item_id"], "selected_index": pick })),
            None,
        );
        assert_eq!(s, 200, "{v}");
        answered.push((item["item_id"].as_str().unwrap().to_string(), pick));
        k += 1;
        let done = v.get("next_item").is_none();
        if k % 4 == 0 || done {
            srv.kill();
            let fresh = Server::start(&cfg);
            let (_, view) = fresh.json("GET", &format!("/api/v1/sessions/{id}"), None, None);
            assert_eq!(view["progress"]["answered"], k, "{view}");
            if !done {
                assert_eq!(view["item"], v["next_item"]);
            }
            server = Some(fresh);
        } else {
            server = Some(srv);
        }
        if done {
            break;
        }
        item = v["next_item"].clone();
    }
    let srv = server.unwrap();
    assert_eq!(k, 15);

    let (s, text) = srv.request("GET", &format!("/api/v1/admin/sessions/{id}/transcript"), None, Some(TOKEN));
    assert_eq!(s, 200);
    let events = parse_transcript(&text, "t".as_ref()).unwrap();
    let state = replay(&calvi(), &events, ReplayMode::Verify).unwrap();
    let logged: Vec<(String, u64)> = state
        .administered()
        .iter()
        .map(|a| (a.item_id.clone(), a.selected_index as u64))
        .collect();
    assert_eq!(logged, answered);

    let (s, result) = srv.json("GET", &format!("/api/v1/sessions/{id}/result"), None, None);
    assert_eq!(s, 200);
    assert_eq!(result["theta_mean"].as_f64().unwrap(), state.final_score().unwrap().theta_mean);
}

#[test]
fn binary_contract_over_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let srv = Server::start(&write_config(dir.path()));
    let mut bodies = Vec::new();
    let (s, t) = srv.request("POST", "/api/v1/sessions", Some(&json!({ "bank_id": "synthetic-vlat" })), None);
    assert_eq!(s, 201);
    bodies.push(t.clone());
    let v: Value = serde_json::from_str(&t).unwrap();
    let id = v["session_id"].as_str().unwrap();
    let first = v["item"].clone();
    let url = format!("/api/v1/sessions/{id}/answers");
    let (s, t) = srv.request("POST", &url, Some(&json!({ "item_id": first["item_id"], "selected_index": 0 })), None);
    assert_eq!(s, 200);
    bodies.push(t);
    let (s, t) = srv.request("POST", &url, Some(&json!({ "item_id": first["item_id"], "selected_index": 2 })), None);
    assert_eq!(s, 409);
    bodies.push(t);
    let (s, _) = srv.request("GET", "/api/v1/banks", None, None);
    assert_eq!(s, 401);
    let (s, t) = srv.request("GET", "/api/v1/banks", None, Some(TOKEN));
    assert_eq!(s, 200);
    bodies.push(t);
    bodies.push(srv.request("GET", &format!("/api/v1/sessions/{id}"), None, None).1);
    for b in &bodies {
        assert_no_forbidden(b);
    }
}
