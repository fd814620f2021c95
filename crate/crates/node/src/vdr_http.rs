//! HTTP/JSON face of the registry and a [`VdrClient`] that talks to it.

use std::sync::Arc;

use async_trait::async_trait;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nfid_core::identity::{Did, DidDocument, SignedDocumentUpdate};
use nfid_core::vdr::{CreateRevocationRegistry, Registry, RevocationStatus, RevokeRequest, VdrClient, VdrError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegisterBody {
    pub document: DidDocument,
    #[serde(with = "nfid_core::canonical::b64")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolveBody {
    pub document: DidDocument,
    pub version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateRegistryBody {
    pub request: CreateRevocationRegistry,
    #[serde(with = "nfid_core::canonical::b64")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistryCreated {
    pub registry_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokeBody {
    pub request: RevokeRequest,
    #[serde(with = "nfid_core::canonical::b64")]
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusBody {
    pub status: RevocationStatus,
}

/// Error body used by every registry endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

fn status_of(e: &VdrError) -> StatusCode {
    match e {
        VdrError::UnknownDid(_) | VdrError::UnknownRegistry(_) => StatusCode::NOT_FOUND,
        VdrError::BadSignature | VdrError::NotIssuer => StatusCode::FORBIDDEN,
        VdrError::AlreadyRegistered(_)
        | VdrError::VersionGap { .. }
        | VdrError::HashMismatch
        | VdrError::RegistryExists(_) => StatusCode::CONFLICT,
        VdrError::InvalidVersion(_) | VdrError::InvalidDocument(_) => StatusCode::BAD_REQUEST,
        VdrError::Unreachable(_) | VdrError::Persistence(_) => StatusCode::SERVICE_UNAVAILABLE,
    }
}

struct ApiError(VdrError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status_of(&self.0), Json(body)).into_response()
    }
}

impl From<VdrError> for ApiError {
    fn from(e: VdrError) -> Self {
        ApiError(e)
    }
}

fn parse_did(raw: &str) -> Result<Did, ApiError> {
    raw.parse()
        .map_err(|_| ApiError(VdrError::InvalidDocument(format!("malformed DID {raw}"))))
}

async fn register(State(reg): State<Arc<Registry>>, Json(body): Json<RegisterBody>) -> Result<StatusCode, ApiError> {
    reg.register(body.document, body.signature)?;
    Ok(StatusCode::CREATED)
}

async fn update(
    State(reg): State<Arc<Registry>>,
    Path(did): Path<String>,
    Json(body): Json<SignedDocumentUpdate>,
) -> Result<StatusCode, ApiError> {
    if parse_did(&did)? != body.document.id {
        return Err(ApiError(VdrError::InvalidDocument("path and document id differ".into())));
    }
    reg.update(body)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn resolve(State(reg): State<Arc<Registry>>, Path(did): Path<String>) -> Result<Json<ResolveBody>, ApiError> {
    let (document, version) = reg.resolve_did(&parse_did(&did)?)?;
    Ok(Json(ResolveBody { document, version }))
}

async fn versions(
    State(reg): State<Arc<Registry>>,
    Path(did): Path<String>,
) -> Result<Json<Vec<SignedDocumentUpdate>>, ApiError> {
    Ok(Json(reg.history(&parse_did(&did)?)?))
}

async fn create_registry(
    State(reg): State<Arc<Registry>>,
    Json(body): Json<CreateRegistryBody>,
) -> Result<(StatusCode, Json<RegistryCreated>), ApiError> {
    let registry_id = reg.create_revocation_registry(body.request, body.signature)?;
    Ok((StatusCode::CREATED, Json(RegistryCreated { registry_id })))
}

async fn revoke(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    Json(body): Json<RevokeBody>,
) -> Result<StatusCode, ApiError> {
    if body.request.registry_id != id {
        return Err(ApiError(VdrError::UnknownRegistry(id)));
    }
    reg.revoke(body.request, body.signature)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn status(
    State(reg): State<Arc<Registry>>,
    Path((id, cred)): Path<(String, String)>,
) -> Result<Json<StatusBody>, ApiError> {
    Ok(Json(StatusBody {
        status: reg.check_status(&id, &cred)?,
    }))
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/dids", post(register))
        .route("/dids/{did}", get(resolve).put(update))
        .route("/dids/{did}/versions", get(versions))
        .route("/revocation-registries", post(create_registry))
        .route("/revocation-registries/{id}/revocations", post(revoke))
        .route("/revocation-registries/{id}/status/{cred}", get(status))
        .with_state(registry)
}

/// Maps an error body back onto the registry error it was produced from.
fn error_from(code: &str, message: String) -> VdrError {
    match code {
        "already_registered" => VdrError::AlreadyRegistered(message),
        "bad_signature" => VdrError::BadSignature,
        "invalid_version" => VdrError::InvalidVersion(0),
        "invalid_document" => VdrError::InvalidDocument(message),
        "unknown_did" => VdrError::UnknownDid(message),
        "version_gap" => VdrError::VersionGap { expected: 0, got: 0 },
        "hash_mismatch" => VdrError::HashMismatch,
        "unknown_registry" => VdrError::UnknownRegistry(message),
        "registry_exists" => VdrError::RegistryExists(message),
        "not_issuer" => VdrError::NotIssuer,
        "persistence" => VdrError::Persistence(message),
        _ => VdrError::Unreachable(message),
    }
}

/// Registry client over HTTP.
#[derive(Debug, Clone)]
pub struct HttpVdrClient {
    base: reqwest::Url,
    http: reqwest::Client,
}

impl HttpVdrClient {
    pub fn new(base: &str) -> Result<Self, VdrError> {
        let base = reqwest::Url::parse(base).map_err(|e| VdrError::Unreachable(format!("bad registry URL: {e}")))?;
        Ok(Self {
            base,
            http: reqwest::Client::new(),
        })
    }

    fn url(&self, segments: &[&str]) -> reqwest::Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("http URLs have paths")
            .pop_if_empty()
            .extend(segments);
        url
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<reqwest::Response, VdrError> {
        let resp = req.send().await.map_err(|e| VdrError::Unreachable(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        match resp.json::<ErrorBody>().await {
            Ok(body) => Err(error_from(&body.code, body.message)),
            Err(_) => Err(VdrError::Unreachable(format!("registry answered {status}"))),
        }
    }

    async fn json<T: serde::de::DeserializeOwned>(&self, req: reqwest::RequestBuilder) -> Result<T, VdrError> {
        self.send(req)
            .await?
            .json()
            .await
            .map_err(|e| VdrError::Unreachable(format!("bad registry response: {e}")))
    }
}

#[async_trait]
impl VdrClient for HttpVdrClient {
    async fn register(&self, document: DidDocument, signature: Vec<u8>) -> Result<(), VdrError> {
        let body = RegisterBody { document, signature };
        self.send(self.http.post(self.url(&["dids"])).json(&body)).await?;
        Ok(())
    }

    async fn update(&self, update: SignedDocumentUpdate) -> Result<(), VdrError> {
        let did = update.document.id.to_string();
        self.send(self.http.put(self.url(&["dids", &did])).json(&update)).await?;
        Ok(())
    }

    async fn resolve_did(&self, did: &Did) -> Result<(DidDocument, u64), VdrError> {
        let body: ResolveBody = self.json(self.http.get(self.url(&["dids", &did.to_string()]))).await?;
        Ok((body.document, body.version))
    }

    async fn history(&self, did: &Did) -> Result<Vec<SignedDocumentUpdate>, VdrError> {
        self.json(self.http.get(self.url(&["dids", &did.to_string(), "versions"]))).await
    }

    async fn create_revocation_registry(
        &self,
        request: CreateRevocationRegistry,
        signature: Vec<u8>,
    ) -> Result<String, VdrError> {
        let body = CreateRegistryBody { request, signature };
        let created: RegistryCreated = self
            .json(self.http.post(self.url(&["revocation-registries"])).json(&body))
            .await?;
        Ok(created.registry_id)
    }

    async fn revoke(&self, request: RevokeRequest, signature: Vec<u8>) -> Result<(), VdrError> {
        let url = self.url(&["revocation-registries", &request.registry_id, "revocations"]);
        self.send(self.http.post(url).json(&RevokeBody { request, signature })).await?;
        Ok(())
    }

    async fn check_status(&self, registry_id: &str, credential_id: &str) -> Result<RevocationStatus, VdrError> {
        let url = self.url(&["revocation-registries", registry_id, "status", credential_id]);
        let body: StatusBody = self.json(self.http.get(url)).await?;
        Ok(body.status)
    }
}
