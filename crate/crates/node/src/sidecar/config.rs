use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nfid_core::credentials::{Claims, CredentialKind};
use nfid_core::identity::{Did, DEFAULT_CACHE_MAX_AGE};
use serde::{Deserialize, Serialize};

use super::routes::RouteRule;

fn default_max_age() -> u64 {
    DEFAULT_CACHE_MAX_AGE.as_secs()
}

fn default_true() -> bool {
    true
}

fn default_timeout() -> u64 {
    10
}

/// How long peer documents are trusted and whether the sidecar refreshes them itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheConfig {
    #[serde(default = "default_max_age")]
    pub max_age_secs: u64,
    /// Refresh a peer document once it is older than `max_age_secs` or the peer
    /// reports a stale key. Off means the cached document is used regardless of age.
    #[serde(default = "default_true")]
    pub auto_refresh: bool,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            max_age_secs: default_max_age(),
            auto_refresh: true,
        }
    }
}

impl CacheConfig {
    pub fn max_age(&self) -> Duration {
        Duration::from_secs(self.max_age_secs)
    }
}

/// A credential the sidecar obtains from its issuer at startup if the wallet lacks it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CredentialWant {
    pub kind: CredentialKind,
    #[serde(default)]
    pub claims: Claims,
    /// Issuer to ask; defaults to the sidecar's `issuer`. Lets an NF hold grants
    /// from a foreign domain's IPMF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<Did>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SidecarConfig {
    pub name: String,
    pub nf_type: String,
    /// Base URL of the NF this sidecar fronts.
    pub local_nf_url: String,
    /// Where the local NF sends its outbound calls.
    pub intercept_listen: String,
    /// Where peer sidecars deliver envelopes.
    pub peer_listen: String,
    /// Envelope endpoint published in the DID document; defaults to the peer listener.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advertised_endpoint: Option<String>,
    pub registry_url: String,
    pub key_store: PathBuf,
    pub credential_store: PathBuf,
    pub association_store: PathBuf,
    pub trusted_roots: BTreeSet<Did>,
    #[serde(default)]
    pub routes: Vec<RouteRule>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_timeout")]
    pub handshake_timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<Did>,
    #[serde(default)]
    pub credentials: Vec<CredentialWant>,
}

#[derive(Debug, thiserror::Error)]
pub enum SidecarConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error("invalid sidecar config: {0}")]
    Invalid(String),
}

impl SidecarConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SidecarConfigError> {
        let config: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SidecarConfigError> {
        let invalid = |m: &str| Err(SidecarConfigError::Invalid(m.to_string()));
        if self.nf_type.is_empty() {
            return invalid("nfType must not be empty");
        }
        if self.trusted_roots.is_empty() {
            return invalid("at least one trusted root is required");
        }
        if self.issuer.is_none() && self.credentials.iter().any(|w| w.issuer.is_none()) {
            return invalid("a credential lists no issuer and no default issuer is configured");
        }
        if self.routes.iter().any(|r| !r.path_prefix.starts_with('/')) {
            return invalid("route path prefixes must start with '/'");
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn handshake_timeout(&self) -> Duration {
        Duration::from_secs(self.handshake_timeout_secs)
    }
}
