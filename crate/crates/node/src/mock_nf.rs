//! Stand-in network function: answers configured (method, path) pairs with
//! canned responses and counts who called it.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Header carrying the calling NF's name; used only for request accounting.
pub const CALLER_HEADER: &str = "x-caller-nf";
pub const DISCOVERY_PATH: &str = "/nnrf-disc/v1/nf-instances";
pub const DISCOVERY_QUERY: &str = "target-nf-type";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Behavior {
    pub method: String,
    pub path: String,
    pub status: u16,
    #[serde(default)]
    pub body: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MockNfConfig {
    pub name: String,
    #[serde(default)]
    pub behaviors: Vec<Behavior>,
    /// NRF role: static NF profiles by NF type, served on the discovery path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub discovery: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug)]
pub struct MockNf {
    config: MockNfConfig,
    total: AtomicU64,
    by_caller: Mutex<HashMap<String, u64>>,
}

impl MockNf {
    pub fn new(config: MockNfConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            total: AtomicU64::new(0),
            by_caller: Mutex::new(HashMap::new()),
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn total_requests(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn requests_from(&self, caller: &str) -> u64 {
        self.by_caller
            .lock()
            .expect("counter lock poisoned")
            .get(caller)
            .copied()
            .unwrap_or(0)
    }

    pub fn reset_counts(&self) {
        self.total.store(0, Ordering::Relaxed);
        self.by_caller.lock().expect("counter lock poisoned").clear();
    }

    /// The response for a request, independent of transport.
    pub fn respond(&self, method: &str, path: &str, query: Option<&str>) -> (u16, Value) {
        if method.eq_ignore_ascii_case("GET") && path == DISCOVERY_PATH && !self.config.discovery.is_empty() {
            let wanted = query.and_then(|q| {
                q.split('&')
                    .filter_map(|kv| kv.split_once('='))
                    .find(|(k, _)| *k == DISCOVERY_QUERY)
                    .map(|(_, v)| v.to_string())
            });
            let Some(wanted) = wanted else {
                return (400, json!({ "title": "Bad Request", "detail": "target-nf-type is required" }));
            };
            let profiles = self.config.discovery.get(&wanted).cloned().unwrap_or_default();
            return (200, json!({ "validityPeriod": 3600, "nfInstances": profiles }));
        }
        match self
            .config
            .behaviors
            .iter()
            .find(|b| b.method.eq_ignore_ascii_case(method) && b.path == path)
        {
            Some(b) => (b.status, b.body.clone()),
            None => (404, json!({ "title": "Not Found", "status": 404, "detail": format!("{method} {path}") })),
        }
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new().fallback(handle).with_state(self)
    }
}

async fn handle(State(nf): State<Arc<MockNf>>, request: Request) -> Response {
    let caller = request
        .headers()
        .get(CALLER_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("unknown")
        .to_string();
    nf.total.fetch_add(1, Ordering::Relaxed);
    *nf.by_caller.lock().expect("counter lock poisoned").entry(caller).or_default() += 1;
    let uri = request.uri();
    let (status, body) = nf.respond(request.method().as_str(), uri.path(), uri.query());
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if body.is_null() {
        return status.into_response();
    }
    (status, Json(body)).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nrf() -> Arc<MockNf> {
        let mut discovery = BTreeMap::new();
        discovery.insert("AUSF".to_string(), vec![json!({ "nfType": "AUSF", "nfInstanceId": "ausf-1" })]);
        MockNf::new(MockNfConfig {
            name: "NRF".into(),
            behaviors: vec![Behavior {
                method: "PUT".into(),
                path: "/nnrf-nfm/v1/nf-instances/amf-1".into(),
                status: 201,
                body: json!({ "nfStatus": "REGISTERED" }),
            }],
            discovery,
        })
    }

    #[test]
    fn configured_paths_answer() {
        let nf = nrf();
        assert_eq!(nf.respond("put", "/nnrf-nfm/v1/nf-instances/amf-1", None).0, 201);
        assert_eq!(nf.respond("GET", "/nnrf-nfm/v1/nf-instances/amf-1", None).0, 404);
        assert_eq!(nf.respond("GET", "/unknown", None).0, 404);
    }

    #[test]
    fn discovery_returns_profiles() {
        let nf = nrf();
        let (status, body) = nf.respond("GET", DISCOVERY_PATH, Some("target-nf-type=AUSF&requester-nf-type=AMF"));
        assert_eq!(status, 200);
        assert_eq!(body["nfInstances"][0]["nfInstanceId"], "ausf-1");
        let (status, body) = nf.respond("GET", DISCOVERY_PATH, Some("target-nf-type=PCF"));
        assert_eq!(status, 200);
        assert_eq!(body["nfInstances"], json!([]));
        assert_eq!(nf.respond("GET", DISCOVERY_PATH, None).0, 400);
    }
}
