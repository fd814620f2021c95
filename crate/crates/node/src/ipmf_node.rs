//! Runs an IPMF behind an HTTP envelope endpoint.

use std::sync::Arc;

use nfid_core::clock::SharedClock;
use nfid_core::identity::{CachingResolver, ResolutionCache, DEFAULT_CACHE_MAX_AGE};
use nfid_core::ipmf::{IpmfConfig, IpmfError, IpmfService, IssuanceLog};
use nfid_core::protocols::Agent;
use nfid_core::vdr::{VdrClient, VdrSource};
use tokio::net::TcpListener;

use crate::server::{spawn_on, ServerHandle};
use crate::transport::{envelope_router, ENVELOPE_PATH};

#[derive(Debug, thiserror::Error)]
pub enum IpmfNodeError {
    #[error("cannot listen: {0}")]
    Bind(#[from] std::io::Error),
    #[error(transparent)]
    Ipmf(#[from] IpmfError),
}

pub struct IpmfNode {
    pub service: Arc<IpmfService>,
    server: ServerHandle,
}

impl IpmfNode {
    pub fn endpoint(&self) -> String {
        format!("{}{ENVELOPE_PATH}", self.server.url())
    }

    pub async fn shutdown(self) {
        self.server.shutdown().await;
    }
}

/// Opens the issuance log named in `config` (in memory if none).
pub fn open_log(config: &IpmfConfig) -> Result<IssuanceLog, IpmfError> {
    Ok(match &config.log_path {
        Some(path) => IssuanceLog::open(path)?,
        None => IssuanceLog::in_memory(),
    })
}

/// Starts the IPMF on `listener`; its DID document advertises `config.endpoint`
/// or, if unset, the listener's envelope URL.
pub async fn launch_ipmf(
    mut config: IpmfConfig,
    vdr: Arc<dyn VdrClient>,
    clock: SharedClock,
    listener: TcpListener,
) -> Result<IpmfNode, IpmfNodeError> {
    let addr = listener.local_addr()?;
    if config.endpoint.is_none() {
        config.endpoint = Some(format!("http://{addr}{ENVELOPE_PATH}"));
    }
    let resolver = Arc::new(CachingResolver::new(
        Arc::new(VdrSource(vdr.clone())),
        Arc::new(ResolutionCache::new(DEFAULT_CACHE_MAX_AGE, clock.clone())),
    ));
    let log = open_log(&config)?;
    let service = Arc::new(IpmfService::start(config, vdr, resolver.clone(), clock, log).await?);
    let agent = Arc::new(Agent::new(service.identity().clone(), resolver, service.clone()));
    let server = spawn_on(listener, envelope_router(agent))?;
    tracing::info!(did = %service.did(), endpoint = %format!("http://{addr}{ENVELOPE_PATH}"), "IPMF serving");
    Ok(IpmfNode { service, server })
}
