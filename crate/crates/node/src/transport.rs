//! Envelope transport over HTTP: frames are POSTed as `application/octet-stream`
//! and the reply frames come back in the response body.

use std::sync::Arc;

use async_trait::async_trait;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use nfid_core::envelope::MAX_FRAME_LEN;
use nfid_core::protocols::{Agent, EnvelopeTransport, TransportError};
use serde::{Deserialize, Serialize};

pub const ENVELOPE_PATH: &str = "/envelope";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectBody {
    pub code: String,
}

#[derive(Debug, Clone, Default)]
pub struct HttpTransport {
    http: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

#[async_trait]
impl EnvelopeTransport for HttpTransport {
    async fn deliver(&self, endpoint: &str, frames: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let resp = self
            .http
            .post(endpoint)
            .header(header::CONTENT_TYPE, "application/octet-stream")
            .body(frames)
            .send()
            .await
            .map_err(|e| TransportError::Unreachable(format!("{endpoint}: {e}")))?;
        let status = resp.status();
        if status.is_success() {
            let body = resp
                .bytes()
                .await
                .map_err(|e| TransportError::Unreachable(format!("{endpoint}: {e}")))?;
            return Ok(body.to_vec());
        }
        let code = resp
            .json::<RejectBody>()
            .await
            .map(|b| b.code)
            .unwrap_or_else(|_| "unknown".to_string());
        Err(TransportError::Rejected {
            status: status.as_u16(),
            code,
        })
    }
}

async fn receive(State(agent): State<Arc<Agent>>, body: Bytes) -> Response {
    match agent.handle_frames(&body).await {
        Ok(frames) => ([(header::CONTENT_TYPE, "application/octet-stream")], frames).into_response(),
        Err(e) => {
            let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::BAD_REQUEST);
            (status, Json(RejectBody { code: e.code().to_string() })).into_response()
        }
    }
}

/// Router accepting envelopes for `agent` at [`ENVELOPE_PATH`].
pub fn envelope_router(agent: Arc<Agent>) -> Router {
    Router::new()
        .route(ENVELOPE_PATH, post(receive))
        .layer(DefaultBodyLimit::max(MAX_FRAME_LEN + 64))
        .with_state(agent)
}
