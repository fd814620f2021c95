//! Verifiable data registry.
//!
//! A single trusted service holding append-only DID-document histories and
//! issuer-controlled revocation registries. Every accepted write is appended
//! to a JSON-lines log and flushed before the call returns; reopening the
//! registry replays (and re-verifies) that log.

mod client;
mod registry;

pub use client::{RevocationStatusSource, VdrClient, VdrSource};
pub use registry::{Registry, RegistryRecord, RevocationRegistry};

use serde::{Deserialize, Serialize};

use crate::canonical::{sha256, to_canonical_bytes};
use crate::identity::Did;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationStatus {
    Active,
    Revoked,
}

/// Body signed by an issuer to open a revocation registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateRevocationRegistry {
    pub issuer: Did,
    pub nonce: String,
}

impl CreateRevocationRegistry {
    pub fn new(issuer: Did) -> Self {
        let nonce: [u8; 16] = rand::random();
        Self {
            issuer,
            nonce: crate::canonical::b64_encode(&nonce),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("request serializes")
    }

    /// `base58(SHA-256(canonical request)[..16])`.
    pub fn registry_id(&self) -> String {
        bs58::encode(&sha256(&self.signing_bytes())[..16]).into_string()
    }
}

/// Body signed by an issuer to revoke one credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokeRequest {
    pub registry_id: String,
    pub credential_id: String,
}

impl RevokeRequest {
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VdrError {
    #[error("DID {0} is already registered")]
    AlreadyRegistered(String),
    #[error("signature does not verify")]
    BadSignature,
    #[error("initial registration must carry version 1, got {0}")]
    InvalidVersion(u64),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("unknown DID {0}")]
    UnknownDid(String),
    #[error("version gap: expected {expected}, got {got}")]
    VersionGap { expected: u64, got: u64 },
    #[error("previous-version hash mismatch")]
    HashMismatch,
    #[error("unknown revocation registry {0}")]
    UnknownRegistry(String),
    #[error("revocation registry {0} already exists")]
    RegistryExists(String),
    #[error("signer is not the registry's issuer")]
    NotIssuer,
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("persistence failure: {0}")]
    Persistence(String),
}

impl VdrError {
    /// Stable machine-readable code used on the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            VdrError::AlreadyRegistered(_) => "already_registered",
            VdrError::BadSignature => "bad_signature",
            VdrError::InvalidVersion(_) => "invalid_version",
            VdrError::InvalidDocument(_) => "invalid_document",
            VdrError::UnknownDid(_) => "unknown_did",
            VdrError::VersionGap { .. } => "version_gap",
            VdrError::HashMismatch => "hash_mismatch",
            VdrError::UnknownRegistry(_) => "unknown_registry",
            VdrError::RegistryExists(_) => "registry_exists",
            VdrError::NotIssuer => "not_issuer",
            VdrError::Unreachable(_) => "unreachable",
            VdrError::Persistence(_) => "persistence",
        }
    }
}
