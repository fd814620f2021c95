use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use nfid_core::canonical::{b64_encode, sha256};
use nfid_core::clock::SharedClock;
use nfid_core::credentials::{claims_grant, AccessRequest, CredentialKind, TrustPolicy};
use nfid_core::envelope::ProtocolMessage;
use nfid_core::identity::{rotate_document, CachePolicy, CachingResolver, Did, DidResolver, KeyPair, ResolutionCache, ResolveError};
use nfid_core::protocols::{
    deny, message, parse, run_handshake, run_issuance, Agent, ChannelError, Denial, DenyReason, EnvelopeTransport,
    HandshakeContext, HandshakeError, HandshakeResponder, IssuanceError, LocalIdentity, MessageHandler,
    SecureChannel, SharedIdentity, SharedWallet, Transcript, Verifier, Wallet, WalletError, Wanted, DENY, REHANDSHAKE,
    TUNNEL_REQUEST, TUNNEL_RESPONSE,
};
use nfid_core::vdr::{VdrClient, VdrError, VdrSource};
use serde::{Deserialize, Serialize};

use super::config::SidecarConfig;
use super::routes::RouteTable;
use super::store::{Association, AssociationRole, AssociationStore, PeerDocument, StoreError};
use super::tunnel::{end_to_end, RehandshakeBody, TunnelRequest, TunnelResponse};
use crate::keystore::{ensure_registered, KeyStoreError, RegistrationError, StoredKeys};

/// Error codes reported to the local caller.
pub const CODE_NO_ROUTE: &str = "no_route";
pub const CODE_AUTHORIZATION_DENIED: &str = "authorization_denied";
pub const CODE_HANDSHAKE_REJECTED: &str = "handshake_rejected";
pub const CODE_STALE_KEY: &str = "stale_recipient_key";
pub const CODE_TIMEOUT: &str = "timeout";
pub const CODE_PEER_UNREACHABLE: &str = "peer_unreachable";
pub const CODE_RESOLUTION: &str = "resolution_failed";
pub const CODE_PROTOCOL: &str = "protocol_error";
pub const CODE_FORBIDDEN: &str = "forbidden";
pub const CODE_LOCAL_NF: &str = "local_nf_unreachable";

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("no route for {0}")]
    NoRoute(String),
    #[error("handshake rejected: {0}")]
    Rejected(Denial),
    #[error("peer still holds a newer key than the cached document")]
    StaleKey,
    #[error("peer did not answer in time")]
    Timeout,
    #[error("peer unreachable: {0}")]
    Unreachable(String),
    #[error("cannot resolve peer: {0}")]
    Resolve(#[from] ResolveError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no association with {0}")]
    NoAssociation(Did),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    KeyStore(#[from] KeyStoreError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error("registry: {0}")]
    Registry(#[from] VdrError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("credential issuance failed: {0}")]
    Issuance(#[from] IssuanceError),
    #[error("key rotation failed: {0}")]
    Rotation(String),
}

impl SidecarError {
    /// HTTP status returned to the local caller.
    pub fn status(&self) -> u16 {
        match self {
            SidecarError::Rejected(d) if d.reason == DenyReason::Authorization => 403,
            SidecarError::Timeout => 504,
            SidecarError::NoRoute(_)
            | SidecarError::Rejected(_)
            | SidecarError::StaleKey
            | SidecarError::Unreachable(_)
            | SidecarError::Resolve(_)
            | SidecarError::Protocol(_) => 502,
            _ => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            SidecarError::NoRoute(_) => CODE_NO_ROUTE,
            SidecarError::Rejected(d) if d.reason == DenyReason::Authorization => CODE_AUTHORIZATION_DENIED,
            SidecarError::Rejected(_) => CODE_HANDSHAKE_REJECTED,
            SidecarError::StaleKey => CODE_STALE_KEY,
            SidecarError::Timeout => CODE_TIMEOUT,
            SidecarError::Unreachable(_) => CODE_PEER_UNREACHABLE,
            SidecarError::Resolve(_) => CODE_RESOLUTION,
            SidecarError::Protocol(_) => CODE_PROTOCOL,
            _ => "internal",
        }
    }
}

fn channel_error(e: ChannelError) -> SidecarError {
    if e.is_stale_key() {
        return SidecarError::StaleKey;
    }
    match e {
        ChannelError::Timeout(_) => SidecarError::Timeout,
        ChannelError::Transport(t) => SidecarError::Unreachable(t.to_string()),
        other => SidecarError::Protocol(other.to_string()),
    }
}

fn handshake_error(e: HandshakeError) -> SidecarError {
    match e {
        HandshakeError::Channel(c) => channel_error(c),
        other => SidecarError::Protocol(other.to_string()),
    }
}

/// A request the local NF sent to its sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboundRequest {
    pub method: String,
    pub path: String,
    pub host: Option<String>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Default)]
struct Counters {
    handshakes_initiated: AtomicU64,
    handshakes_established: AtomicU64,
    handshakes_rejected: AtomicU64,
    handshakes_accepted: AtomicU64,
    handshakes_refused: AtomicU64,
    rehandshakes: AtomicU64,
    rehandshake_requests: AtomicU64,
    refreshes: AtomicU64,
    refresh_failures: AtomicU64,
    tunnel_sent: AtomicU64,
    tunnel_received: AtomicU64,
    tunnel_forwarded: AtomicU64,
    tunnel_denied: AtomicU64,
}

/// Counter snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SidecarStats {
    /// Handshakes this sidecar started as consumer.
    pub handshakes_initiated: u64,
    pub handshakes_established: u64,
    pub handshakes_rejected: u64,
    /// Handshakes peers completed with this sidecar as producer.
    pub handshakes_accepted: u64,
    pub handshakes_refused: u64,
    pub rehandshakes: u64,
    pub rehandshake_requests: u64,
    pub refreshes: u64,
    pub refresh_failures: u64,
    pub tunnel_sent: u64,
    pub tunnel_received: u64,
    pub tunnel_forwarded: u64,
    pub tunnel_denied: u64,
}

impl Counters {
    fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> SidecarStats {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        SidecarStats {
            handshakes_initiated: g(&self.handshakes_initiated),
            handshakes_established: g(&self.handshakes_established),
            handshakes_rejected: g(&self.handshakes_rejected),
            handshakes_accepted: g(&self.handshakes_accepted),
            handshakes_refused: g(&self.handshakes_refused),
            rehandshakes: g(&self.rehandshakes),
            rehandshake_requests: g(&self.rehandshake_requests),
            refreshes: g(&self.refreshes),
            refresh_failures: g(&self.refresh_failures),
            tunnel_sent: g(&self.tunnel_sent),
            tunnel_received: g(&self.tunnel_received),
            tunnel_forwarded: g(&self.tunnel_forwarded),
            tunnel_denied: g(&self.tunnel_denied),
        }
    }
}

/// Components a sidecar talks to; injected so tests can run everything in one process.
#[derive(Clone)]
pub struct SidecarDeps {
    pub vdr: Arc<dyn VdrClient>,
    pub transport: Arc<dyn EnvelopeTransport>,
    pub clock: SharedClock,
}

/// Controller, agent and association database of one NF's sidecar.
pub struct Sidecar {
    config: SidecarConfig,
    identity: SharedIdentity,
    wallet: SharedWallet,
    vdr: Arc<dyn VdrClient>,
    resolver: Arc<CachingResolver>,
    channel: Arc<SecureChannel>,
    verifier: Arc<Verifier>,
    responder: HandshakeResponder,
    store: AssociationStore,
    routes: RouteTable,
    http: reqwest::Client,
    peer_locks: Mutex<HashMap<Did, Arc<tokio::sync::Mutex<()>>>>,
    counters: Counters,
    transcript: Arc<Transcript>,
    clock: SharedClock,
}

impl Sidecar {
    /// Loads keys, wallet and associations and registers the DID with `endpoint`.
    pub async fn start(config: SidecarConfig, deps: SidecarDeps, endpoint: &str) -> Result<Arc<Self>, SidecarError> {
        let stored = StoredKeys::load_or_generate(&config.key_store)?;
        let document = ensure_registered(deps.vdr.as_ref(), &stored, Some(endpoint)).await?;
        let identity = SharedIdentity::new(LocalIdentity::new(stored.keys, document));
        let wallet = nfid_core::protocols::shared_wallet(Wallet::open(&config.credential_store)?);
        let resolver = Arc::new(CachingResolver::new(
            Arc::new(VdrSource(deps.vdr.clone())),
            Arc::new(ResolutionCache::new(config.cache.max_age(), deps.clock.clone())),
        ));
        let verifier = Arc::new(Verifier {
            policy: TrustPolicy::trusting(config.trusted_roots.iter().cloned()),
            resolver: resolver.clone(),
            revocation: Arc::new(VdrSource(deps.vdr.clone())),
            clock: deps.clock.clone(),
        });
        let transcript = Transcript::new();
        let channel = Arc::new(
            SecureChannel::new(identity.clone(), resolver.clone(), deps.transport.clone())
                .with_timeout(config.request_timeout())
                .with_transcript(transcript.clone()),
        );
        let responder = HandshakeResponder::new(
            identity.clone(),
            wallet.clone(),
            verifier.clone(),
            config.nf_type.clone(),
            config.handshake_timeout(),
        );
        let store = AssociationStore::open(&config.association_store)?;
        let http = reqwest::Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| SidecarError::Unreachable(e.to_string()))?;
        tracing::info!(name = %config.name, did = %identity.did(), %endpoint, associations = store.len(), "sidecar started");
        Ok(Arc::new(Self {
            routes: RouteTable::new(config.routes.clone()),
            config,
            identity,
            wallet,
            vdr: deps.vdr,
            resolver,
            channel,
            verifier,
            responder,
            store,
            http,
            peer_locks: Mutex::new(HashMap::new()),
            counters: Counters::default(),
            transcript,
            clock: deps.clock,
        }))
    }

    pub fn did(&self) -> Did {
        self.identity.did()
    }

    pub fn config(&self) -> &SidecarConfig {
        &self.config
    }

    pub fn identity(&self) -> &SharedIdentity {
        &self.identity
    }

    pub fn wallet(&self) -> &SharedWallet {
        &self.wallet
    }

    pub fn associations(&self) -> &AssociationStore {
        &self.store
    }

    pub fn resolver(&self) -> &Arc<CachingResolver> {
        &self.resolver
    }

    /// Every protocol message this sidecar sent or accepted.
    pub fn transcript(&self) -> &Arc<Transcript> {
        &self.transcript
    }

    pub fn stats(&self) -> SidecarStats {
        self.counters.snapshot()
    }

    /// The receiving agent that dispatches inbound envelopes to this sidecar.
    pub fn agent(self: &Arc<Self>) -> Arc<Agent> {
        Arc::new(
            Agent::new(self.identity.clone(), self.resolver.clone(), self.clone())
                .with_transcript(self.transcript.clone()),
        )
    }

    /// Runs issuance against the configured issuer for every wanted credential the wallet lacks.
    pub async fn obtain_credentials(&self) -> Result<usize, SidecarError> {
        let mut obtained = 0;
        for want in &self.config.credentials {
            let Some(issuer) = want.issuer.clone().or_else(|| self.config.issuer.clone()) else {
                continue;
            };
            let now = self.clock.now();
            let held = self.wallet.read().expect("wallet lock poisoned").all().iter().any(|c| {
                c.kind == want.kind
                    && c.issuer == issuer
                    && c.expires_at.is_none_or(|e| e > now)
                    && want.claims.iter().all(|(k, v)| c.claims.get(k) == Some(v))
            });
            if held {
                continue;
            }
            self.obtain(&issuer, Wanted::new(want.kind, want.claims.clone())).await?;
            obtained += 1;
        }
        Ok(obtained)
    }

    /// Requests one credential from `issuer` and stores it in the wallet.
    pub async fn obtain(&self, issuer: &Did, wanted: Wanted) -> Result<(), SidecarError> {
        let doc = self.resolver.resolve(issuer, CachePolicy::CacheOk).await?;
        run_issuance(&self.channel, &doc, &self.wallet, &self.clock, wanted).await?;
        Ok(())
    }

    fn wallet_digest(&self) -> String {
        let wallet = self.wallet.read().expect("wallet lock poisoned");
        let mut ids: Vec<&str> = wallet.all().iter().map(|c| c.credential_id.as_str()).collect();
        ids.sort_unstable();
        b64_encode(&sha256(ids.join("\n").as_bytes()))
    }

    fn peer_lock(&self, peer: &Did) -> Arc<tokio::sync::Mutex<()>> {
        self.peer_locks
            .lock()
            .expect("peer lock table poisoned")
            .entry(peer.clone())
            .or_default()
            .clone()
    }

    /// Returns an established outbound association, running the handshake if needed.
    pub async fn ensure_association(&self, peer: &Did) -> Result<Association, SidecarError> {
        let lock = self.peer_lock(peer);
        let _guard = lock.lock().await;
        let digest = self.wallet_digest();
        if let Some(existing) = self.store.get(AssociationRole::Outbound, peer) {
            if existing.is_established() && existing.wallet_digest.as_deref() == Some(digest.as_str()) {
                let expired = existing
                    .peer_document
                    .as_ref()
                    .is_none_or(|d| self.clock.now().since(d.fetched_at) > self.config.cache.max_age());
                if expired && self.config.cache.auto_refresh {
                    return self.refresh_locked(existing).await;
                }
                return Ok(existing);
            }
        }
        self.handshake(peer, digest).await
    }

    async fn handshake(&self, peer: &Did, digest: String) -> Result<Association, SidecarError> {
        let ctx = HandshakeContext {
            channel: self.channel.clone(),
            wallet: self.wallet.clone(),
            verifier: self.verifier.clone(),
        };
        let mut doc = self.resolver.resolve(peer, CachePolicy::CacheOk).await?;
        Counters::bump(&self.counters.handshakes_initiated);
        let mut result = run_handshake(&ctx, &doc).await.map_err(handshake_error);
        if matches!(result, Err(SidecarError::StaleKey)) && self.config.cache.auto_refresh {
            doc = self.resolver.resolve(peer, CachePolicy::ForceFresh).await?;
            result = run_handshake(&ctx, &doc).await.map_err(handshake_error);
        }
        let session = result?;
        if !session.is_established() {
            Counters::bump(&self.counters.handshakes_rejected);
            self.store.remove(AssociationRole::Outbound, peer)?;
            let denial = session
                .rejection
                .unwrap_or_else(|| Denial::new(DenyReason::Protocol, "handshake did not complete"));
            tracing::warn!(%peer, %denial, "handshake rejected");
            return Err(SidecarError::Rejected(denial));
        }
        Counters::bump(&self.counters.handshakes_established);
        let now = self.clock.now();
        let association = Association {
            peer: peer.clone(),
            role: AssociationRole::Outbound,
            session,
            peer_document: Some(PeerDocument {
                document: doc,
                fetched_at: now,
            }),
            degraded: false,
            wallet_digest: Some(digest),
            created_at: now,
        };
        self.store.upsert(association.clone())?;
        tracing::info!(%peer, "association established");
        Ok(association)
    }

    /// Re-fetches the peer's document from the registry. If the registry cannot be
    /// reached the cached document is kept and the association marked degraded.
    pub async fn refresh_peer_document(&self, peer: &Did) -> Result<Association, SidecarError> {
        let lock = self.peer_lock(peer);
        let _guard = lock.lock().await;
        let existing = self
            .store
            .get(AssociationRole::Outbound, peer)
            .ok_or_else(|| SidecarError::NoAssociation(peer.clone()))?;
        self.refresh_locked(existing).await
    }

    async fn refresh_locked(&self, mut association: Association) -> Result<Association, SidecarError> {
        match self.resolver.resolve(&association.peer, CachePolicy::ForceFresh).await {
            Ok(document) => {
                Counters::bump(&self.counters.refreshes);
                association.peer_document = Some(PeerDocument {
                    document,
                    fetched_at: self.clock.now(),
                });
                association.degraded = false;
            }
            Err(e) => {
                Counters::bump(&self.counters.refresh_failures);
                tracing::warn!(peer = %association.peer, error = %e, "peer document refresh failed; keeping stale entry");
                association.degraded = true;
            }
        }
        self.store.upsert(association.clone())?;
        Ok(association)
    }

    /// Tunnels one request of the local NF to the producer its route names.
    pub async fn intercept(&self, request: OutboundRequest) -> Result<TunnelResponse, SidecarError> {
        let target = self
            .routes
            .resolve(request.host.as_deref(), &request.path)
            .cloned()
            .ok_or_else(|| SidecarError::NoRoute(request.path.clone()))?;
        let tunneled = TunnelRequest {
            correlation_id: uuid::Uuid::new_v4().to_string(),
            method: request.method,
            path: request.path,
            headers: end_to_end(request.headers),
            body: request.body,
        };
        let mut rehandshaken = false;
        let mut refreshed = false;
        loop {
            let association = self.ensure_association(&target).await?;
            let doc = &association.peer_document.as_ref().expect("outbound associations cache the peer").document;
            let msg = message(TUNNEL_REQUEST, &tunneled.correlation_id, &tunneled);
            Counters::bump(&self.counters.tunnel_sent);
            let replies = match self.channel.request(doc, msg).await {
                Ok(replies) => replies,
                Err(e) if e.is_stale_key() && self.config.cache.auto_refresh && !refreshed => {
                    refreshed = true;
                    self.refresh_peer_document(&target).await?;
                    continue;
                }
                Err(e) => return Err(channel_error(e)),
            };
            let reply = replies
                .into_iter()
                .next()
                .ok_or_else(|| SidecarError::Protocol("peer sent no reply".into()))?;
            match reply.msg_type.as_str() {
                TUNNEL_RESPONSE => {
                    let response: TunnelResponse =
                        parse(&reply, TUNNEL_RESPONSE).map_err(|e| SidecarError::Protocol(e.to_string()))?;
                    if response.correlation_id != tunneled.correlation_id {
                        return Err(SidecarError::Protocol("tunnel response for another request".into()));
                    }
                    return Ok(response);
                }
                REHANDSHAKE if !rehandshaken => {
                    rehandshaken = true;
                    Counters::bump(&self.counters.rehandshakes);
                    tracing::info!(peer = %target, "peer lost the association; handshaking again");
                    self.store.remove(AssociationRole::Outbound, &target)?;
                }
                other => return Err(SidecarError::Protocol(format!("unexpected reply {other}"))),
            }
        }
    }

    async fn on_tunnel_request(&self, sender: &Did, msg: &ProtocolMessage) -> ProtocolMessage {
        Counters::bump(&self.counters.tunnel_received);
        let request: TunnelRequest = match parse(msg, TUNNEL_REQUEST) {
            Ok(r) => r,
            Err(e) => return deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, e.to_string())),
        };
        let reply = |response: TunnelResponse| message(TUNNEL_RESPONSE, &msg.thread_id, &response);
        let Some(association) = self.store.get(AssociationRole::Inbound, sender).filter(Association::is_established)
        else {
            Counters::bump(&self.counters.rehandshake_requests);
            tracing::warn!(%sender, "tunnel request without association");
            let body = RehandshakeBody {
                correlation_id: request.correlation_id,
            };
            return message(REHANDSHAKE, &msg.thread_id, &body);
        };
        let access = AccessRequest::new(&self.config.nf_type, request.service(), &request.method);
        if !association.session.authorizations.iter().any(|c| claims_grant(c, &access)) {
            Counters::bump(&self.counters.tunnel_denied);
            tracing::warn!(%sender, service = %access.service, op = %access.operation, "operation outside the consumer's authorization");
            return reply(TunnelResponse::error(
                &request.correlation_id,
                403,
                CODE_FORBIDDEN,
                &format!("{} {} is not authorized", access.operation, access.service),
            ));
        }
        Counters::bump(&self.counters.tunnel_forwarded);
        reply(self.forward(request).await)
    }

    /// Replays a tunneled request against the local NF.
    async fn forward(&self, request: TunnelRequest) -> TunnelResponse {
        let correlation_id = request.correlation_id.clone();
        let method = match reqwest::Method::from_bytes(request.method.as_bytes()) {
            Ok(m) => m,
            Err(_) => return TunnelResponse::error(&correlation_id, 400, CODE_PROTOCOL, "invalid method"),
        };
        let url = format!("{}{}", self.config.local_nf_url.trim_end_matches('/'), request.path);
        let mut builder = self.http.request(method, url).body(request.body);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let response = match builder.send().await {
            Ok(r) => r,
            Err(e) => return TunnelResponse::error(&correlation_id, 502, CODE_LOCAL_NF, &e.to_string()),
        };
        let status = response.status().as_u16();
        let headers = end_to_end(
            response
                .headers()
                .iter()
                .map(|(k, v)| (k.as_str().to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned())),
        );
        match response.bytes().await {
            Ok(body) => TunnelResponse {
                correlation_id,
                status,
                headers,
                body: body.to_vec(),
            },
            Err(e) => TunnelResponse::error(&correlation_id, 502, CODE_LOCAL_NF, &e.to_string()),
        }
    }

    fn on_handshake_step(&self, sender: &Did, step: Option<nfid_core::protocols::HandshakeSession>) {
        let Some(session) = step else {
            return;
        };
        let result = if session.is_established() {
            Counters::bump(&self.counters.handshakes_accepted);
            tracing::info!(consumer = %sender, "consumer authorized");
            self.store.upsert(Association {
                peer: sender.clone(),
                role: AssociationRole::Inbound,
                session,
                peer_document: None,
                degraded: false,
                wallet_digest: None,
                created_at: self.clock.now(),
            })
        } else {
            Counters::bump(&self.counters.handshakes_refused);
            if let Some(denial) = &session.rejection {
                tracing::warn!(consumer = %sender, %denial, "handshake refused");
            }
            self.store.remove(AssociationRole::Inbound, sender).map(|_| ())
        };
        if let Err(e) = result {
            tracing::error!(error = %e, "cannot persist association");
        }
    }

    /// Rotates to `new_keys`: publishes the next document version and switches the
    /// agent over. Peers holding the old document get a stale-key rejection.
    pub async fn rotate_keys(&self, new_keys: KeyPair) -> Result<(), SidecarError> {
        let current = self.identity.snapshot();
        let update = rotate_document(&current.document, &new_keys, &current.keys)
            .map_err(|e| SidecarError::Rotation(e.to_string()))?;
        self.vdr.update(update.clone()).await?;
        StoredKeys {
            did: current.did.clone(),
            keys: new_keys.clone(),
        }
        .save(&self.config.key_store)?;
        self.identity.replace(LocalIdentity::new(new_keys, update.document));
        tracing::info!(did = %current.did, "keys rotated");
        Ok(())
    }

    /// Number of handshakes currently mid-flight on the producer side.
    pub fn pending_handshakes(&self) -> usize {
        self.responder.pending()
    }

    /// Whether the wallet holds an AuthN credential.
    pub fn has_authn(&self) -> bool {
        let now = self.clock.now();
        self.wallet
            .read()
            .expect("wallet lock poisoned")
            .all()
            .iter()
            .any(|c| c.kind == CredentialKind::AuthN && c.expires_at.is_none_or(|e| e > now))
    }
}

#[async_trait]
impl MessageHandler for Sidecar {
    async fn handle(&self, sender: &Did, msg: ProtocolMessage) -> Vec<ProtocolMessage> {
        if HandshakeResponder::handles(&msg.msg_type) {
            return match self.responder.handle(sender, &msg).await {
                Ok((replies, step)) => {
                    self.on_handshake_step(sender, step);
                    replies
                }
                Err(e) => {
                    tracing::warn!(%sender, error = %e, "handshake message rejected");
                    if msg.msg_type == DENY {
                        return Vec::new();
                    }
                    vec![deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, e.to_string()))]
                }
            };
        }
        if msg.msg_type == TUNNEL_REQUEST {
            return vec![self.on_tunnel_request(sender, &msg).await];
        }
        vec![deny(
            &msg.thread_id,
            &Denial::new(DenyReason::Protocol, format!("unsupported message {}", msg.msg_type)),
        )]
    }
}
