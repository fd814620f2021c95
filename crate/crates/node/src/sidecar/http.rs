//! The sidecar's two listeners: the intercept side the local NF calls and the
//! envelope side peer sidecars deliver to.

use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use nfid_core::envelope::MAX_FRAME_LEN;
use serde_json::json;
use tokio::net::TcpListener;

use super::config::SidecarConfig;
use super::engine::{OutboundRequest, Sidecar, SidecarDeps, SidecarError};
use super::tunnel::TunnelResponse;
use crate::server::{spawn_on, ServerHandle};
use crate::transport::{envelope_router, ENVELOPE_PATH};

pub const STATS_PATH: &str = "/_sidecar/stats";

fn to_response(t: TunnelResponse) -> Response {
    let mut response = Response::new(Body::from(t.body));
    *response.status_mut() = StatusCode::from_u16(t.status).unwrap_or(StatusCode::BAD_GATEWAY);
    let headers = response.headers_mut();
    for (k, v) in t.headers {
        if let (Ok(k), Ok(v)) = (HeaderName::try_from(k), HeaderValue::try_from(v)) {
            headers.append(k, v);
        }
    }
    response
}

fn error_response(e: &SidecarError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::BAD_GATEWAY);
    (status, Json(json!({ "code": e.code(), "detail": e.to_string() }))).into_response()
}

async fn intercept(State(sidecar): State<Arc<Sidecar>>, request: Request) -> Response {
    let (parts, body) = request.into_parts();
    let body = match axum::body::to_bytes(body, MAX_FRAME_LEN / 2).await {
        Ok(b) => b,
        Err(e) => return (StatusCode::PAYLOAD_TOO_LARGE, e.to_string()).into_response(),
    };
    let host = parts
        .headers
        .get(axum::http::header::HOST)
        .and_then(|h| h.to_str().ok())
        .map(str::to_string);
    let headers = parts
        .headers
        .iter()
        .map(|(k, v)| (k.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
        .collect();
    let outbound = OutboundRequest {
        method: parts.method.as_str().to_string(),
        path: parts.uri.path_and_query().map(|p| p.as_str()).unwrap_or("/").to_string(),
        host,
        headers,
        body: body.to_vec(),
    };
    match sidecar.intercept(outbound).await {
        Ok(t) => to_response(t),
        Err(e) => {
            tracing::warn!(error = %e, "outbound call failed");
            error_response(&e)
        }
    }
}

async fn stats(State(sidecar): State<Arc<Sidecar>>) -> Response {
    Json(sidecar.stats()).into_response()
}

pub fn intercept_router(sidecar: Arc<Sidecar>) -> Router {
    Router::new()
        .route(STATS_PATH, get(stats))
        .fallback(intercept)
        .with_state(sidecar)
}

/// A sidecar with both listeners serving.
pub struct RunningSidecar {
    pub sidecar: Arc<Sidecar>,
    intercept: ServerHandle,
    peer: ServerHandle,
}

impl RunningSidecar {
    /// Base URL the local NF sends its outbound calls to.
    pub fn intercept_url(&self) -> String {
        self.intercept.url()
    }

    pub fn peer_addr(&self) -> std::net::SocketAddr {
        self.peer.addr()
    }

    pub async fn shutdown(self) {
        self.intercept.shutdown().await;
        self.peer.shutdown().await;
    }
}

/// Binds the configured listeners and starts the sidecar.
pub async fn launch(config: SidecarConfig, deps: SidecarDeps) -> Result<RunningSidecar, SidecarError> {
    let peer = TcpListener::bind(&config.peer_listen)
        .await
        .map_err(|e| SidecarError::Unreachable(format!("bind {}: {e}", config.peer_listen)))?;
    let intercept = TcpListener::bind(&config.intercept_listen)
        .await
        .map_err(|e| SidecarError::Unreachable(format!("bind {}: {e}", config.intercept_listen)))?;
    launch_on(config, deps, peer, intercept).await
}

/// Starts the sidecar on already-bound listeners.
pub async fn launch_on(
    config: SidecarConfig,
    deps: SidecarDeps,
    peer: TcpListener,
    intercept: TcpListener,
) -> Result<RunningSidecar, SidecarError> {
    let peer_addr = peer.local_addr().map_err(|e| SidecarError::Unreachable(e.to_string()))?;
    let endpoint = config
        .advertised_endpoint
        .clone()
        .unwrap_or_else(|| format!("http://{peer_addr}{ENVELOPE_PATH}"));
    let sidecar = Sidecar::start(config, deps, &endpoint).await?;
    let bind_err = |e: std::io::Error| SidecarError::Unreachable(e.to_string());
    let peer = spawn_on(peer, envelope_router(sidecar.agent())).map_err(bind_err)?;
    let intercept = spawn_on(intercept, intercept_router(sidecar.clone())).map_err(bind_err)?;
    Ok(RunningSidecar {
        sidecar,
        intercept,
        peer,
    })
}
