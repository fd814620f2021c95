use std::sync::Arc;

use async_trait::async_trait;

use super::channel::{ChannelError, MessageHandler, SecureChannel, SharedIdentity};
use super::messages::{
    ack, deny, expect_reply, message, new_thread_id, parse, Denial, DenyReason, PresentRequestBody,
    PresentationBody, PRESENTATION, PRESENT_REQUEST,
};
use super::session::{PresentationSession, PresentationState};
use super::wallet::SharedWallet;
use super::{ProtocolError, Verifier};
use crate::clock::SharedClock;
use crate::credentials::{build_presentation, CredentialKind, FailureCode, Verdict, VerifiablePresentation, VerifyError};
use crate::envelope::ProtocolMessage;
use crate::identity::{Did, DidDocument};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PresentationError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("prover declined: {0}")]
    Declined(Denial),
    #[error("prover lacks requested kinds {0:?}")]
    MissingKinds(Vec<CredentialKind>),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Result of one verifier-side presentation exchange.
#[derive(Debug, Clone)]
pub struct PresentationOutcome {
    pub session: PresentationSession,
    pub verdict: Verdict,
    pub presentation: VerifiablePresentation,
}

/// Requests and verifies a presentation without closing the thread.
pub(crate) async fn request_presentation(
    channel: &SecureChannel,
    peer: &DidDocument,
    kinds: &[CredentialKind],
    verifier: &Verifier,
) -> Result<PresentationOutcome, PresentationError> {
    let mut session = PresentationSession::request(new_thread_id(), kinds.iter().copied());
    let body = PresentRequestBody {
        challenge: session.challenge,
        requested_kinds: kinds.to_vec(),
    };
    let replies = match channel
        .request(peer, message(PRESENT_REQUEST, &session.thread_id, &body))
        .await
    {
        Ok(r) => r,
        Err(e) => {
            session.fail();
            return Err(e.into());
        }
    };
    let presented: PresentationBody = match expect_reply(replies, &session.thread_id, PRESENTATION)? {
        Ok(p) => p,
        Err(denial) => {
            session.fail();
            return Err(PresentationError::Declined(denial));
        }
    };
    session.advance(PresentationState::Presented)?;
    let vp = presented.presentation;
    let mut verdict = verifier.verify(&vp, &session.challenge).await?;
    if vp.holder != peer.id && !verdict.failures.contains(&FailureCode::SubjectMismatch) {
        verdict.failures.push(FailureCode::SubjectMismatch);
        verdict.ok = false;
    }
    Ok(PresentationOutcome {
        session,
        verdict,
        presentation: vp,
    })
}

fn missing_kinds(vp: &VerifiablePresentation, kinds: &[CredentialKind]) -> Vec<CredentialKind> {
    let have = vp.kinds();
    kinds.iter().copied().filter(|k| !have.contains(k)).collect()
}

/// Verifier side: asks `peer` for `kinds`, verifies the answer and closes the thread
/// with ack or deny.
pub async fn run_presentation(
    channel: &SecureChannel,
    peer: &DidDocument,
    kinds: &[CredentialKind],
    verifier: &Verifier,
) -> Result<PresentationOutcome, PresentationError> {
    let mut outcome = request_presentation(channel, peer, kinds, verifier).await?;
    let thread = outcome.session.thread_id.clone();
    let missing = missing_kinds(&outcome.presentation, kinds);
    let close = if !missing.is_empty() {
        Some(Denial::new(DenyReason::MissingCredentials, "requested kinds not presented"))
    } else if !outcome.verdict.ok {
        Some(Denial::new(DenyReason::Identification, "presentation rejected").with_failures(outcome.verdict.failures.clone()))
    } else {
        None
    };
    match &close {
        None => {
            outcome.session.advance(PresentationState::Verified)?;
            channel.request(peer, ack(&thread)).await?;
        }
        Some(denial) => {
            outcome.session.advance(PresentationState::Denied)?;
            channel.request(peer, deny(&thread, denial)).await?;
        }
    }
    if !missing.is_empty() {
        return Err(PresentationError::MissingKinds(missing));
    }
    Ok(outcome)
}

/// Prover side: builds a presentation answering a present-request, or a deny when no
/// requested credential is held. AuthZ credentials are narrowed to `producer` when given.
pub fn answer_presentation_request(
    holder: &SharedIdentity,
    wallet: &SharedWallet,
    msg: &ProtocolMessage,
    producer: Option<&str>,
    clock: &SharedClock,
) -> Result<ProtocolMessage, ProtocolError> {
    let request: PresentRequestBody = parse(msg, PRESENT_REQUEST)?;
    let now = clock.now();
    let creds = wallet
        .read()
        .expect("wallet lock poisoned")
        .select(&request.requested_kinds, producer, now);
    if creds.is_empty() {
        return Ok(deny(
            &msg.thread_id,
            &Denial::new(DenyReason::MissingCredentials, "no credential of the requested kinds"),
        ));
    }
    let vp = build_presentation(&holder.snapshot().signer(), creds, request.challenge, now)
        .map_err(|e| ProtocolError::MalformedBody(e.to_string()))?;
    Ok(message(PRESENTATION, &msg.thread_id, &PresentationBody { presentation: vp }))
}

/// A stand-alone prover answering presentation requests from its wallet.
pub struct Prover {
    pub identity: SharedIdentity,
    pub wallet: SharedWallet,
    pub clock: SharedClock,
}

impl Prover {
    pub fn new(identity: SharedIdentity, wallet: SharedWallet, clock: SharedClock) -> Arc<Self> {
        Arc::new(Self {
            identity,
            wallet,
            clock,
        })
    }
}

#[async_trait]
impl MessageHandler for Prover {
    async fn handle(&self, _sender: &Did, msg: ProtocolMessage) -> Vec<ProtocolMessage> {
        if msg.msg_type != PRESENT_REQUEST {
            return Vec::new();
        }
        match answer_presentation_request(&self.identity, &self.wallet, &msg, None, &self.clock) {
            Ok(reply) => vec![reply],
            Err(e) => vec![deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, e.to_string()))],
        }
    }
}
