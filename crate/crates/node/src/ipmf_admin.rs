//! One-shot administrative operations on an IPMF described by a config file,
//! shared by the `ipmf` CLI and the harness.

use std::path::Path;
use std::sync::Arc;

use nfid_core::clock::system_clock;
use nfid_core::credentials::{child_chain, RightSet, VerifiableCredential};
use nfid_core::identity::{CachingResolver, Did, ResolutionCache, DEFAULT_CACHE_MAX_AGE};
use nfid_core::ipmf::{load_config, ConfigError, IpmfConfig, IpmfError, IpmfService};
use nfid_core::vdr::{VdrClient, VdrError, VdrSource};

use crate::ipmf_node::{open_log, IpmfNode};
use crate::vdr_http::HttpVdrClient;

#[derive(Debug, thiserror::Error)]
pub enum AdminError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("config has no registryUrl")]
    NoRegistry,
    #[error("config lacks endpoint or revocationRegistryId; start it with `ipmf run` first")]
    NotProvisioned,
    #[error(transparent)]
    Registry(#[from] VdrError),
    #[error(transparent)]
    Ipmf(#[from] IpmfError),
    #[error("cannot write {0}: {1}")]
    Write(String, String),
}

pub fn registry_client(config: &IpmfConfig) -> Result<Arc<dyn VdrClient>, AdminError> {
    let url = config.registry_url.as_deref().ok_or(AdminError::NoRegistry)?;
    Ok(Arc::new(HttpVdrClient::new(url)?))
}

pub fn save_config(config: &IpmfConfig, path: &Path) -> Result<(), AdminError> {
    let bytes = serde_json::to_vec_pretty(config).map_err(|e| AdminError::Write(path.display().to_string(), e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| AdminError::Write(path.display().to_string(), e.to_string()))
}

/// Writes the endpoint and revocation registry a running node provisioned back
/// into its config, so later admin verbs reuse them. Returns whether anything changed.
pub fn persist_provisioned(config: &IpmfConfig, node: &IpmfNode, path: &Path) -> Result<bool, AdminError> {
    let mut persisted = config.clone();
    let changed = persisted.endpoint.is_none() || persisted.revocation_registry_id.is_none();
    persisted.endpoint.get_or_insert_with(|| node.endpoint());
    persisted
        .revocation_registry_id
        .get_or_insert_with(|| node.service.registry_id().to_string());
    if changed {
        save_config(&persisted, path)?;
    }
    Ok(changed)
}

/// Starts the service without listening.
pub async fn offline(config: IpmfConfig) -> Result<IpmfService, AdminError> {
    if config.revocation_registry_id.is_none() || config.endpoint.is_none() {
        return Err(AdminError::NotProvisioned);
    }
    let vdr = registry_client(&config)?;
    let clock = system_clock();
    let resolver = Arc::new(CachingResolver::new(
        Arc::new(VdrSource(vdr.clone())),
        Arc::new(ResolutionCache::new(DEFAULT_CACHE_MAX_AGE, clock.clone())),
    ));
    let log = open_log(&config)?;
    Ok(IpmfService::start(config, vdr, resolver, clock, log).await?)
}

/// `ipmf revoke`: revokes a credential the configured IPMF issued.
pub async fn revoke(config_path: &Path, credential_id: &str) -> Result<(), AdminError> {
    let service = offline(load_config(config_path)?).await?;
    service.revoke_credential(credential_id).await?;
    Ok(())
}

/// `ipmf delegate`: issues a Del credential to `child`; returns it with the
/// parent chain the child should be configured with.
pub async fn delegate(
    config_path: &Path,
    child: &Did,
    rights: RightSet,
) -> Result<(VerifiableCredential, Vec<VerifiableCredential>), AdminError> {
    let service = offline(load_config(config_path)?).await?;
    let del = service.delegate_to_child(child, rights)?;
    let chain = child_chain(&del);
    Ok((del, chain))
}
