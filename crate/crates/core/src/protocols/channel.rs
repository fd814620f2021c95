use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::session::DEFAULT_SESSION_TIMEOUT;
use crate::credentials::Signer;
use crate::envelope::{
    decode_frames, encode_frames, encode_wire, pack, unpack, EnvelopeError, LocalKeys, ProtocolMessage,
};
use crate::identity::{CachePolicy, Did, DidDocument, DidResolver, KeyPair, ResolveError};

/// This party's DID, current keys and current document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LocalIdentity {
    pub did: Did,
    pub keys: KeyPair,
    pub document: DidDocument,
}

impl LocalIdentity {
    pub fn new(keys: KeyPair, document: DidDocument) -> Self {
        Self {
            did: document.id.clone(),
            keys,
            document,
        }
    }

    pub fn signer(&self) -> Signer {
        Signer::new(self.did.clone(), self.keys.clone())
    }

    pub fn local_keys(&self) -> LocalKeys<'_> {
        LocalKeys {
            did: &self.did,
            keys: &self.keys,
            key_version: self.document.version,
        }
    }
}

/// Identity shared by the components of one agent; replaced wholesale on key rotation.
#[derive(Debug, Clone)]
pub struct SharedIdentity(Arc<RwLock<LocalIdentity>>);

impl SharedIdentity {
    pub fn new(identity: LocalIdentity) -> Self {
        Self(Arc::new(RwLock::new(identity)))
    }

    pub fn snapshot(&self) -> LocalIdentity {
        self.0.read().expect("identity lock poisoned").clone()
    }

    pub fn did(&self) -> Did {
        self.0.read().expect("identity lock poisoned").did.clone()
    }

    pub fn replace(&self, identity: LocalIdentity) {
        *self.0.write().expect("identity lock poisoned") = identity;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("endpoint {0} unreachable")]
    Unreachable(String),
    #[error("peer rejected envelope with status {status}: {code}")]
    Rejected { status: u16, code: String },
}

/// Moves wire-encoded envelopes to an endpoint and returns the peer's reply frames.
#[async_trait]
pub trait EnvelopeTransport: Send + Sync {
    async fn deliver(&self, endpoint: &str, frames: Vec<u8>) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptEntry {
    pub thread_id: String,
    pub msg_type: String,
    pub from: Did,
    pub to: Did,
}

/// Record of every protocol message an agent sent or accepted.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl Transcript {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn record(&self, from: &Did, to: &Did, msg: &ProtocolMessage) {
        self.entries.lock().expect("transcript poisoned").push(TranscriptEntry {
            thread_id: msg.thread_id.clone(),
            msg_type: msg.msg_type.clone(),
            from: from.clone(),
            to: to.clone(),
        });
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript poisoned").clone()
    }

    pub fn clear(&self) {
        self.entries.lock().expect("transcript poisoned").clear();
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("{0} has no service endpoint")]
    NoEndpoint(Did),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("reply authenticated as {got}, expected {expected}")]
    UnexpectedSender { expected: Did, got: Did },
}

impl ChannelError {
    /// True when the peer refused our envelope because it targets an outdated key version.
    pub fn is_stale_key(&self) -> bool {
        matches!(self, ChannelError::Transport(TransportError::Rejected { code, .. }) if code == "stale_recipient_key")
            || matches!(self, ChannelError::Envelope(EnvelopeError::StaleRecipientKey { .. }))
    }
}

/// Request/response messaging with one peer at a time over encrypted envelopes.
pub struct SecureChannel {
    identity: SharedIdentity,
    resolver: Arc<dyn DidResolver>,
    transport: Arc<dyn EnvelopeTransport>,
    timeout: Duration,
    transcript: Option<Arc<Transcript>>,
}

impl SecureChannel {
    pub fn new(identity: SharedIdentity, resolver: Arc<dyn DidResolver>, transport: Arc<dyn EnvelopeTransport>) -> Self {
        Self {
            identity,
            resolver,
            transport,
            timeout: DEFAULT_SESSION_TIMEOUT,
            transcript: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn identity(&self) -> &SharedIdentity {
        &self.identity
    }

    pub fn resolver(&self) -> &Arc<dyn DidResolver> {
        &self.resolver
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Sends `msg` to the holder of `peer` and returns its authenticated replies.
    pub async fn request(&self, peer: &DidDocument, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ChannelError> {
        let endpoint = peer
            .service_endpoint
            .clone()
            .ok_or_else(|| ChannelError::NoEndpoint(peer.id.clone()))?;
        let me = self.identity.snapshot();
        let env = pack(&msg, &me.keys, &me.did, peer);
        if let Some(t) = &self.transcript {
            t.record(&me.did, &peer.id, &msg);
        }
        let reply = tokio::time::timeout(self.timeout, self.transport.deliver(&endpoint, encode_wire(&env)))
            .await
            .map_err(|_| ChannelError::Timeout(self.timeout))??;
        let mut out = Vec::new();
        for env in decode_frames(&reply)? {
            let (msg, sender) = unpack(&env, me.local_keys(), self.resolver.as_ref()).await?;
            if sender != peer.id {
                return Err(ChannelError::UnexpectedSender {
                    expected: peer.id.clone(),
                    got: sender,
                });
            }
            if let Some(t) = &self.transcript {
                t.record(&sender, &me.did, &msg);
            }
            out.push(msg);
        }
        Ok(out)
    }

    /// Resolves `peer` and sends to it.
    pub async fn request_did(&self, peer: &Did, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ChannelRequestError> {
        let doc = self.resolver.resolve(peer, CachePolicy::CacheOk).await?;
        Ok(self.request(&doc, msg).await?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelRequestError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Application logic behind an [`Agent`].
#[async_trait]
pub trait MessageHandler: Send + Sync {
    async fn handle(&self, sender: &Did, msg: ProtocolMessage) -> Vec<ProtocolMessage>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error("cannot resolve reply recipient: {0}")]
    Reply(ResolveError),
}

impl AgentError {
    /// HTTP status used when this error is reported to the sender.
    pub fn status(&self) -> u16 {
        match self {
            AgentError::Envelope(EnvelopeError::StaleRecipientKey { .. }) => 409,
            AgentError::Envelope(EnvelopeError::NotIntendedRecipient) => 421,
            AgentError::Envelope(EnvelopeError::OversizeFrame(_)) => 413,
            AgentError::Envelope(EnvelopeError::Resolver(_)) | AgentError::Reply(_) => 503,
            AgentError::Envelope(_) => 400,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            AgentError::Envelope(e) => match e {
                EnvelopeError::NotIntendedRecipient => "not_intended_recipient",
                EnvelopeError::SenderAuthentication => "sender_authentication",
                EnvelopeError::Integrity => "integrity",
                EnvelopeError::UnknownSender(_) => "unknown_sender",
                EnvelopeError::StaleRecipientKey { .. } => "stale_recipient_key",
                EnvelopeError::UnsupportedAlgorithm(_) => "unsupported_algorithm",
                EnvelopeError::Resolver(_) => "resolver",
                EnvelopeError::MalformedMessage(_) => "malformed_message",
                EnvelopeError::TruncatedFrame => "truncated_frame",
                EnvelopeError::OversizeFrame(_) => "oversize_frame",
                EnvelopeError::MalformedHeader(_) => "malformed_header",
            },
            AgentError::Reply(_) => "reply_resolution",
        }
    }
}

/// Receiving side: unpacks inbound frames, dispatches them and packs the replies.
pub struct Agent {
    identity: SharedIdentity,
    resolver: Arc<dyn DidResolver>,
    handler: Arc<dyn MessageHandler>,
    transcript: Option<Arc<Transcript>>,
}

impl Agent {
    pub fn new(identity: SharedIdentity, resolver: Arc<dyn DidResolver>, handler: Arc<dyn MessageHandler>) -> Self {
        Self {
            identity,
            resolver,
            handler,
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn identity(&self) -> &SharedIdentity {
        &self.identity
    }

    pub async fn handle_frames(&self, frames: &[u8]) -> Result<Vec<u8>, AgentError> {
        let me = self.identity.snapshot();
        let mut replies = Vec::new();
        for env in decode_frames(frames)? {
            let (msg, sender) = match unpack(&env, me.local_keys(), self.resolver.as_ref()).await {
                Ok(ok) => ok,
                Err(e) => {
                    tracing::warn!(error = %e, "dropping inbound envelope");
                    return Err(e.into());
                }
            };
            if let Some(t) = &self.transcript {
                t.record(&sender, &me.did, &msg);
            }
            let out = self.handler.handle(&sender, msg).await;
            if out.is_empty() {
                continue;
            }
            let doc = self
                .resolver
                .resolve(&sender, CachePolicy::CacheOk)
                .await
                .map_err(AgentError::Reply)?;
            for reply in out {
                if let Some(t) = &self.transcript {
                    t.record(&me.did, &sender, &reply);
                }
                replies.push(pack(&reply, &me.keys, &me.did, &doc));
            }
        }
        Ok(encode_frames(&replies))
    }
}

/// In-process transport: endpoints are names of registered agents.
#[derive(Default)]
pub struct LoopbackTransport {
    agents: RwLock<HashMap<String, Arc<Agent>>>,
}

impl LoopbackTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, endpoint: impl Into<String>, agent: Arc<Agent>) {
        self.agents.write().expect("loopback poisoned").insert(endpoint.into(), agent);
    }

    pub fn unregister(&self, endpoint: &str) {
        self.agents.write().expect("loopback poisoned").remove(endpoint);
    }
}

#[async_trait]
impl EnvelopeTransport for LoopbackTransport {
    async fn deliver(&self, endpoint: &str, frames: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let agent = self
            .agents
            .read()
            .expect("loopback poisoned")
            .get(endpoint)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(endpoint.to_string()))?;
        agent.handle_frames(&frames).await.map_err(|e| TransportError::Rejected {
            status: e.status(),
            code: e.code().to_string(),
        })
    }
}
