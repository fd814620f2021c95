//! Per-NF proxy: intercepts the NF's outbound HTTP calls, establishes an
//! authorized association with the producer's sidecar on first contact and
//! tunnels requests inside encrypted envelopes. Inbound tunnel traffic is
//! checked against the consumer's verified AuthZ claims before it reaches the
//! local NF.

mod config;
mod engine;
mod http;
mod routes;
mod store;
mod tunnel;

pub use config::{CacheConfig, CredentialWant, SidecarConfig, SidecarConfigError};
pub use engine::{
    OutboundRequest, Sidecar, SidecarDeps, SidecarError, SidecarStats, CODE_AUTHORIZATION_DENIED, CODE_FORBIDDEN,
    CODE_HANDSHAKE_REJECTED, CODE_LOCAL_NF, CODE_NO_ROUTE, CODE_PEER_UNREACHABLE, CODE_PROTOCOL, CODE_RESOLUTION,
    CODE_STALE_KEY, CODE_TIMEOUT,
};
pub use http::{intercept_router, launch, launch_on, RunningSidecar, STATS_PATH};
pub use routes::{RouteRule, RouteTable};
pub use store::{Association, AssociationRole, AssociationStore, PeerDocument, StoreError};
pub use tunnel::{end_to_end, is_hop_header, RehandshakeBody, TunnelRequest, TunnelResponse, HOP_HEADERS};
