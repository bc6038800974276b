#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use adaptest::service::{router, BankEntry, Service};
use adaptest_core::bank::{synth_bank, ItemBank, SynthSpec};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "s3cret-admin";
/// Keys that must never reach a test-taker.
pub const FORBIDDEN: [&str; 4] = ["\"correct_index\"", "\"params\"", "\"kind\"", "\"features\""];

pub fn vlat() -> ItemBank {
    synth_bank(3, &SynthSpec::vlat_like()).unwrap()
}

pub fn calvi() -> ItemBank {
    synth_bank(3, &SynthSpec::calvi_like()).unwrap()
}

pub fn hidden() -> ItemBank {
    let mut b = calvi();
    b.bank_id = "hidden-results".into();
    b
}

pub fn entries() -> Vec<BankEntry> {
    vec![
        BankEntry { bank: vlat(), show_results: true, deployment_seed: 5 },
        BankEntry { bank: calvi(), show_results: true, deployment_seed: 5 },
        BankEntry { bank: hidden(), show_results: false, deployment_seed: 5 },
    ]
}

pub fn open(dir: &Path) -> Arc<Service> {
    Arc::new(Service::with_banks(entries(), dir, Some(TOKEN.into())).unwrap())
}

/// Sends one request through the router and records the raw body.
pub struct Client {
    pub app: Router,
    pub bodies: Vec<String>,
}

impl Client {
    pub fn new(service: Arc<Service>) -> Self {
        Self { app: router(service), bodies: Vec::new() }
    }

    pub async fn send(&mut self, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, String) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("x-admin-token", t);
        }
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(v.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        self.bodies.push(text.clone());
        (status, text)
    }

    pub async fn json(&mut self, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
        let (s, t) = self.send(method, uri, body, token).await;
        (s, serde_json::from_str(&t).unwrap_or(Value::Null))
    }
}

pub fn assert_no_forbidden(body: &str) {
    for key in FORBIDDEN {
        assert!(!body.contains(key), "{key} leaked in {body}");
    }
}

pub mod server;
