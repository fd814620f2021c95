//! Combined handshake, always driven by the consumer:
//!
//! 1. consumer -> present-request(T1, AuthN); producer -> presentation(T1)
//! 2. consumer verifies; consumer -> ack(T1); producer -> present-request(T2, AuthN+AuthZ)
//! 3. consumer -> presentation(T2) carrying AuthN and the AuthZ credentials for the
//!    producer's NF type; producer verifies and -> ack(T2) or deny(T2)
//!
//! T1 identifies the producer to the consumer; T2 identifies the consumer and
//! authorizes it in a single combined presentation.

use std::sync::Arc;

use super::channel::{ChannelError, SecureChannel, SharedIdentity};
use super::messages::{
    ack, deny, expect_reply, message, parse, Denial, DenyReason, PresentRequestBody, PresentationBody, Empty, ACK,
    DENY, PRESENTATION, PRESENT_REQUEST,
};
use super::presentation::{answer_presentation_request, request_presentation, PresentationError};
use super::session::{Direction, HandshakePhase, HandshakeSession, PresentationSession, PresentationState, SessionTable};
use super::wallet::SharedWallet;
use super::{ProtocolError, Verifier};
use crate::clock::SharedClock;
use crate::credentials::{
    build_presentation, claims_target_producer, Claims, CredentialKind, FailureCode, Verdict, VerifiablePresentation,
};
use crate::envelope::ProtocolMessage;
use crate::identity::{Did, DidDocument};

pub const CLAIM_NF_TYPE: &str = "nf_type";

/// Dependencies of one side of the handshake.
pub struct HandshakeContext {
    pub channel: Arc<SecureChannel>,
    pub wallet: SharedWallet,
    pub verifier: Arc<Verifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HandshakeError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("verification infrastructure: {0}")]
    Verify(String),
}

impl From<PresentationError> for HandshakeError {
    fn from(e: PresentationError) -> Self {
        match e {
            PresentationError::Channel(c) => HandshakeError::Channel(c),
            PresentationError::Protocol(p) => HandshakeError::Protocol(p),
            PresentationError::Verify(v) => HandshakeError::Verify(v.to_string()),
            PresentationError::Declined(d) => HandshakeError::Protocol(ProtocolError::MalformedBody(d.to_string())),
            PresentationError::MissingKinds(k) => HandshakeError::Protocol(ProtocolError::MalformedBody(format!("{k:?}"))),
        }
    }
}

/// The verified AuthN claims of the holder, if the presentation identifies it cleanly.
fn identified_claims(verdict: &Verdict, vp: &VerifiablePresentation, expected_holder: &Did) -> Option<Claims> {
    if vp.holder != *expected_holder || !verdict.presentation_failures().is_empty() {
        return None;
    }
    vp.credentials
        .iter()
        .find(|c| c.kind == CredentialKind::AuthN && verdict.credential_ok(&c.credential_id))
        .map(|c| c.claims.clone())
}

/// Consumer side. Returns the session in a terminal phase; infrastructure problems
/// (transport, timeouts, registry outages) are errors.
pub async fn run_handshake(ctx: &HandshakeContext, peer: &DidDocument) -> Result<HandshakeSession, HandshakeError> {
    let mut session = HandshakeSession::new(peer.id.clone(), Direction::Initiator);
    session.advance(HandshakePhase::Identifying)?;
    let channel = ctx.channel.as_ref();

    let t1 = match request_presentation(channel, peer, &[CredentialKind::AuthN], &ctx.verifier).await {
        Ok(outcome) => outcome,
        Err(PresentationError::Declined(denial)) => {
            session.reject(denial);
            return Ok(session);
        }
        Err(e) => return Err(e.into()),
    };
    let thread1 = t1.session.thread_id.clone();
    let peer_claims = identified_claims(&t1.verdict, &t1.presentation, &peer.id)
        .filter(|c| c.contains_key(CLAIM_NF_TYPE));
    let Some(peer_claims) = peer_claims else {
        let denial = Denial::new(DenyReason::Identification, "producer identification failed")
            .with_failures(t1.verdict.failures.clone());
        channel.request(peer, deny(&thread1, &denial)).await?;
        session.reject(denial);
        return Ok(session);
    };
    session.advance(HandshakePhase::Identified)?;
    let producer_type = peer_claims[CLAIM_NF_TYPE].clone();
    session.peer_claims = peer_claims;

    let replies = channel.request(peer, ack(&thread1)).await?;
    let Some(first) = replies.first() else {
        return Err(ProtocolError::NoReply.into());
    };
    let thread2 = first.thread_id.clone();
    let request: PresentRequestBody = match expect_reply(replies, &thread2, PRESENT_REQUEST)? {
        Ok(r) => r,
        Err(denial) => {
            session.reject(denial);
            return Ok(session);
        }
    };
    session.advance(HandshakePhase::Authorizing)?;

    let now = ctx.verifier.clock.now();
    let creds = ctx
        .wallet
        .read()
        .expect("wallet lock poisoned")
        .select(&request.requested_kinds, Some(&producer_type), now);
    if !creds.iter().any(|c| c.kind == CredentialKind::AuthN) {
        let denial = Denial::new(DenyReason::MissingCredentials, "consumer holds no AuthN credential");
        channel.request(peer, deny(&thread2, &denial)).await?;
        session.reject(denial);
        return Ok(session);
    }
    let vp = build_presentation(&channel.identity().snapshot().signer(), creds, request.challenge, now)
        .expect("wallet credentials belong to the holder");
    let replies = channel
        .request(peer, message(PRESENTATION, &thread2, &PresentationBody { presentation: vp }))
        .await?;
    match expect_reply::<Empty>(replies, &thread2, ACK)? {
        Ok(_) => session.advance(HandshakePhase::Established)?,
        Err(denial) => session.reject(denial),
    }
    Ok(session)
}

struct Pending {
    session: HandshakeSession,
    identification_thread: String,
    authorization: Option<PresentationSession>,
}

/// Producer side: answers the consumer's messages and reports the handshake once it
/// reaches a terminal phase.
pub struct HandshakeResponder {
    identity: SharedIdentity,
    wallet: SharedWallet,
    verifier: Arc<Verifier>,
    nf_type: String,
    pending: SessionTable<Did, Pending>,
}

/// Replies to send plus, when the handshake finished, its terminal session.
pub type ResponderStep = (Vec<ProtocolMessage>, Option<HandshakeSession>);

impl HandshakeResponder {
    pub fn new(
        identity: SharedIdentity,
        wallet: SharedWallet,
        verifier: Arc<Verifier>,
        nf_type: impl Into<String>,
        timeout: std::time::Duration,
    ) -> Self {
        let clock: SharedClock = verifier.clock.clone();
        Self {
            identity,
            wallet,
            verifier,
            nf_type: nf_type.into(),
            pending: SessionTable::new(timeout, clock),
        }
    }

    pub fn nf_type(&self) -> &str {
        &self.nf_type
    }

    /// Number of handshakes currently in flight.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn handles(msg_type: &str) -> bool {
        matches!(msg_type, PRESENT_REQUEST | PRESENTATION | ACK | DENY)
    }

    pub async fn handle(&self, sender: &Did, msg: &ProtocolMessage) -> Result<ResponderStep, ProtocolError> {
        match msg.msg_type.as_str() {
            PRESENT_REQUEST => Ok(self.on_identification_request(sender, msg)),
            ACK => self.on_identification_ack(sender, msg),
            DENY => self.on_deny(sender, msg),
            PRESENTATION => self.on_presentation(sender, msg).await,
            other => Err(ProtocolError::UnexpectedMessage {
                expected: PRESENT_REQUEST,
                got: other.to_string(),
            }),
        }
    }

    fn on_identification_request(&self, sender: &Did, msg: &ProtocolMessage) -> ResponderStep {
        let mut session = HandshakeSession::new(sender.clone(), Direction::Responder);
        session.advance(HandshakePhase::Identifying).expect("idle -> identifying");
        let reply = match answer_presentation_request(&self.identity, &self.wallet, msg, None, &self.verifier.clock) {
            Ok(reply) => reply,
            Err(e) => deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, e.to_string())),
        };
        if reply.msg_type == DENY {
            let denial = parse(&reply, DENY).expect("own deny parses");
            session.reject(denial);
            return (vec![reply], Some(session));
        }
        self.pending.insert(
            sender.clone(),
            Pending {
                session,
                identification_thread: msg.thread_id.clone(),
                authorization: None,
            },
        );
        (vec![reply], None)
    }

    fn on_identification_ack(&self, sender: &Did, msg: &ProtocolMessage) -> Result<ResponderStep, ProtocolError> {
        let reply = self
            .pending
            .with(sender, |p| -> Result<ProtocolMessage, ProtocolError> {
                if p.identification_thread != msg.thread_id || p.authorization.is_some() {
                    return Err(ProtocolError::UnknownThread(msg.thread_id.clone()));
                }
                p.session.advance(HandshakePhase::Identified)?;
                let t2 = PresentationSession::request(
                    super::messages::new_thread_id(),
                    [CredentialKind::AuthN, CredentialKind::AuthZ],
                );
                let body = PresentRequestBody {
                    challenge: t2.challenge,
                    requested_kinds: t2.requested_kinds.iter().copied().collect(),
                };
                let out = message(PRESENT_REQUEST, &t2.thread_id, &body);
                p.session.advance(HandshakePhase::Authorizing)?;
                p.authorization = Some(t2);
                Ok(out)
            })
            .ok_or_else(|| ProtocolError::UnknownThread(msg.thread_id.clone()))??;
        Ok((vec![reply], None))
    }

    fn on_deny(&self, sender: &Did, msg: &ProtocolMessage) -> Result<ResponderStep, ProtocolError> {
        let denial: Denial = parse(msg, DENY)?;
        let known = self.pending.with(sender, |p| {
            p.identification_thread == msg.thread_id
                || p.authorization.as_ref().is_some_and(|a| a.thread_id == msg.thread_id)
        });
        if known != Some(true) {
            return Err(ProtocolError::UnknownThread(msg.thread_id.clone()));
        }
        let mut pending = self.pending.remove(sender).expect("checked above");
        pending.session.reject(denial);
        Ok((Vec::new(), Some(pending.session)))
    }

    async fn on_presentation(&self, sender: &Did, msg: &ProtocolMessage) -> Result<ResponderStep, ProtocolError> {
        let matches = self.pending.with(sender, |p| {
            p.authorization.as_ref().is_some_and(|a| a.thread_id == msg.thread_id)
        });
        if matches != Some(true) {
            return Err(ProtocolError::UnknownThread(msg.thread_id.clone()));
        }
        let mut pending = self.pending.remove(sender).expect("checked above");
        let mut t2 = pending.authorization.take().expect("checked above");
        let body: PresentationBody = match parse(msg, PRESENTATION) {
            Ok(b) => b,
            Err(e) => {
                let denial = Denial::new(DenyReason::Protocol, e.to_string());
                pending.session.reject(denial.clone());
                return Ok((vec![deny(&msg.thread_id, &denial)], Some(pending.session)));
            }
        };
        t2.advance(PresentationState::Presented)?;
        let vp = body.presentation;
        let (reply, denial) = match self.verifier.verify(&vp, &t2.challenge).await {
            Err(e) => (None, Some(Denial::new(DenyReason::Identification, e.to_string()))),
            Ok(verdict) => match identified_claims(&verdict, &vp, sender) {
                None => (
                    None,
                    Some(
                        Denial::new(DenyReason::Identification, "consumer identification failed")
                            .with_failures(verdict.failures.clone()),
                    ),
                ),
                Some(claims) => {
                    pending.session.peer_claims = claims;
                    let (granted, refused): (Vec<_>, Vec<_>) = vp
                        .credentials
                        .iter()
                        .filter(|c| c.kind == CredentialKind::AuthZ && claims_target_producer(&c.claims, &self.nf_type))
                        .partition(|c| verdict.credential_ok(&c.credential_id));
                    if granted.is_empty() {
                        let failures: Vec<FailureCode> = verdict
                            .credential_failures
                            .iter()
                            .filter(|f| refused.iter().any(|c| c.credential_id == f.credential_id))
                            .map(|f| f.code)
                            .collect();
                        (
                            None,
                            Some(
                                Denial::new(DenyReason::Authorization, format!("no valid AuthZ credential for {}", self.nf_type))
                                    .with_failures(failures),
                            ),
                        )
                    } else {
                        pending.session.authorizations = granted.iter().map(|c| c.claims.clone()).collect();
                        (Some(ack(&msg.thread_id)), None)
                    }
                }
            },
        };
        match denial {
            Some(denial) => {
                t2.advance(PresentationState::Denied)?;
                pending.session.reject(denial.clone());
                Ok((vec![deny(&msg.thread_id, &denial)], Some(pending.session)))
            }
            None => {
                t2.advance(PresentationState::Verified)?;
                pending.session.advance(HandshakePhase::Established)?;
                Ok((reply.into_iter().collect(), Some(pending.session)))
            }
        }
    }
}
