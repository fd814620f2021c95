//! HTTP requests and responses as carried inside tunnel messages.

use serde::{Deserialize, Serialize};

/// Headers that describe one HTTP hop rather than the message; never tunneled.
pub const HOP_HEADERS: [&str; 9] = [
    "connection",
    "keep-alive",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "host",
    "content-length",
];

pub fn is_hop_header(name: &str) -> bool {
    HOP_HEADERS.iter().any(|h| h.eq_ignore_ascii_case(name))
}

/// Drops hop headers, keeping everything else verbatim and in order.
pub fn end_to_end(headers: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    headers.into_iter().filter(|(k, _)| !is_hop_header(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TunnelRequest {
    pub correlation_id: String,
    pub method: String,
    /// Path and query.
    pub path: String,
    pub headers: Vec<(String, String)>,
    #[serde(with = "nfid_core::canonical::b64")]
    pub body: Vec<u8>,
}

impl TunnelRequest {
    /// First path segment, which names the SBI service (e.g. `nudm-sdm`).
    pub fn service(&self) -> &str {
        let path = self.path.split('?').next().unwrap_or_default();
        path.trim_start_matches('/').split('/').next().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TunnelResponse {
    pub correlation_id: String,
    pub status: u16,
    pub headers: Vec<(String, String)>,
    #[serde(with = "nfid_core::canonical::b64")]
    pub body: Vec<u8>,
}

impl TunnelResponse {
    /// A locally generated JSON error response.
    pub fn error(correlation_id: &str, status: u16, code: &str, detail: &str) -> Self {
        let body = serde_json::json!({ "code": code, "detail": detail });
        Self {
            correlation_id: correlation_id.to_string(),
            status,
            headers: vec![("content-type".into(), "application/json".into())],
            body: serde_json::to_vec(&body).expect("json serializes"),
        }
    }
}

/// Sent instead of a tunnel response when the receiver has no association with the sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RehandshakeBody {
    pub correlation_id: String,
}
