use std::sync::Arc;

use async_trait::async_trait;

use super::{CreateRevocationRegistry, Registry, RevocationStatus, RevokeRequest, VdrError};
use crate::identity::{Did, DidDocument, DocumentSource, ResolveError, SignedDocumentUpdate};

/// Client surface of the registry, implemented in-process and over HTTP.
#[async_trait]
pub trait VdrClient: Send + Sync {
    async fn register(&self, document: DidDocument, signature: Vec<u8>) -> Result<(), VdrError>;
    async fn update(&self, update: SignedDocumentUpdate) -> Result<(), VdrError>;
    async fn resolve_did(&self, did: &Did) -> Result<(DidDocument, u64), VdrError>;
    async fn history(&self, did: &Did) -> Result<Vec<SignedDocumentUpdate>, VdrError>;
    async fn create_revocation_registry(
        &self,
        request: CreateRevocationRegistry,
        signature: Vec<u8>,
    ) -> Result<String, VdrError>;
    async fn revoke(&self, request: RevokeRequest, signature: Vec<u8>) -> Result<(), VdrError>;
    async fn check_status(
        &self,
        registry_id: &str,
        credential_id: &str,
    ) -> Result<RevocationStatus, VdrError>;
}

#[async_trait]
impl VdrClient for Registry {
    async fn register(&self, document: DidDocument, signature: Vec<u8>) -> Result<(), VdrError> {
        Registry::register(self, document, signature)
    }

    async fn update(&self, update: SignedDocumentUpdate) -> Result<(), VdrError> {
        Registry::update(self, update)
    }

    async fn resolve_did(&self, did: &Did) -> Result<(DidDocument, u64), VdrError> {
        Registry::resolve_did(self, did)
    }

    async fn history(&self, did: &Did) -> Result<Vec<SignedDocumentUpdate>, VdrError> {
        Registry::history(self, did)
    }

    async fn create_revocation_registry(
        &self,
        request: CreateRevocationRegistry,
        signature: Vec<u8>,
    ) -> Result<String, VdrError> {
        Registry::create_revocation_registry(self, request, signature)
    }

    async fn revoke(&self, request: RevokeRequest, signature: Vec<u8>) -> Result<(), VdrError> {
        Registry::revoke(self, request, signature)
    }

    async fn check_status(
        &self,
        registry_id: &str,
        credential_id: &str,
    ) -> Result<RevocationStatus, VdrError> {
        Registry::check_status(self, registry_id, credential_id)
    }
}

/// Revocation lookups as needed by presentation verification.
#[async_trait]
pub trait RevocationStatusSource: Send + Sync {
    async fn status(&self, registry_id: &str, credential_id: &str)
        -> Result<RevocationStatus, VdrError>;
}

/// Adapts any [`VdrClient`] into a document source and a revocation source.
#[derive(Clone)]
pub struct VdrSource(pub Arc<dyn VdrClient>);

impl std::fmt::Debug for VdrSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("VdrSource")
    }
}

#[async_trait]
impl DocumentSource for VdrSource {
    async fn fetch_document(&self, did: &Did) -> Result<DidDocument, ResolveError> {
        match self.0.resolve_did(did).await {
            Ok((doc, _)) => Ok(doc),
            Err(VdrError::UnknownDid(d)) => Err(ResolveError::UnknownDid(d)),
            Err(other) => Err(ResolveError::Unreachable(other.to_string())),
        }
    }
}

#[async_trait]
impl RevocationStatusSource for VdrSource {
    async fn status(
        &self,
        registry_id: &str,
        credential_id: &str,
    ) -> Result<RevocationStatus, VdrError> {
        self.0.check_status(registry_id, credential_id).await
    }
}
