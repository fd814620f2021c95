//! Message-level protocols: credential issuance, presentation exchange and the
//! combined identification/authorization handshake between two NFs.
//!
//! Every exchange is initiated by one side posting a message and reading the
//! replies, so a protocol run is a sequence of request/response round trips
//! over a [`SecureChannel`].

mod channel;
mod handshake;
mod issuance;
mod messages;
mod presentation;
mod session;
mod wallet;

use std::sync::Arc;

pub use channel::{
    Agent, AgentError, ChannelError, ChannelRequestError, EnvelopeTransport, LocalIdentity, LoopbackTransport,
    MessageHandler, SecureChannel, SharedIdentity, Transcript, TranscriptEntry, TransportError,
};
pub use handshake::{run_handshake, HandshakeContext, HandshakeError, HandshakeResponder, ResponderStep, CLAIM_NF_TYPE};
pub use issuance::{run_issuance, IssuanceError, Wanted};
pub use messages::{
    ack, deny, expect_reply, is_registered, message, new_thread_id, parse, Denial, DenyReason, Empty, IssueBody,
    OfferBody, PresentRequestBody, PresentationBody, RequestBody, ACK, DENY, ISSUE, OFFER, PRESENTATION,
    PRESENT_REQUEST, REGISTERED_TYPES, REHANDSHAKE, REQUEST, TUNNEL_REQUEST, TUNNEL_RESPONSE,
};
pub use presentation::{answer_presentation_request, run_presentation, PresentationError, PresentationOutcome, Prover};
pub use session::{
    fresh_challenge, Direction, HandshakePhase, HandshakeSession, IssuanceRole, IssuanceSession, IssuanceState,
    PresentationRole, PresentationSession, PresentationState, SessionTable, StateMachine, DEFAULT_SESSION_TIMEOUT,
};
pub use wallet::{shared as shared_wallet, SharedWallet, Wallet, WalletError};

use crate::clock::SharedClock;
use crate::credentials::{verify_presentation, TrustPolicy, Verdict, VerifiablePresentation, VerifyError};
use crate::identity::DidResolver;
use crate::vdr::RevocationStatusSource;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("expected {expected}, got {got}")]
    UnexpectedMessage { expected: &'static str, got: String },
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("malformed message body: {0}")]
    MalformedBody(String),
    #[error("no session for thread {0}")]
    UnknownThread(String),
    #[error("peer sent no reply")]
    NoReply,
}

/// Everything needed to verify presentations under one trust policy.
pub struct Verifier {
    pub policy: TrustPolicy,
    pub resolver: Arc<dyn DidResolver>,
    pub revocation: Arc<dyn RevocationStatusSource>,
    pub clock: SharedClock,
}

impl Verifier {
    pub async fn verify(&self, vp: &VerifiablePresentation, challenge: &[u8; 32]) -> Result<Verdict, VerifyError> {
        verify_presentation(
            vp,
            challenge,
            &self.policy,
            self.resolver.as_ref(),
            self.revocation.as_ref(),
            self.clock.now(),
        )
        .await
    }
}
