use super::channel::{ChannelError, SecureChannel};
use super::messages::{
    ack, expect_reply, message, new_thread_id, Denial, IssueBody, OfferBody, RequestBody, ISSUE, OFFER, REQUEST,
};
use super::session::{IssuanceRole, IssuanceSession, IssuanceState};
use super::wallet::SharedWallet;
use super::ProtocolError;
use crate::clock::SharedClock;
use crate::credentials::{build_presentation, Claims, CredentialKind, VerifiableCredential};
use crate::identity::{verify_signature, DidDocument};

/// What a holder asks an IPMF for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wanted {
    pub kind: CredentialKind,
    pub claims: Claims,
}

impl Wanted {
    pub fn new(kind: CredentialKind, claims: Claims) -> Self {
        Self { kind, claims }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IssuanceError {
    #[error("issuer denied: {0}")]
    Denied(Denial),
    #[error("holder has no AuthN credential to identify with")]
    MissingBootstrap,
    #[error("issued credential rejected: {0}")]
    InvalidCredential(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn check_issued(vc: &VerifiableCredential, ipmf: &DidDocument, session: &IssuanceSession, wanted: &Wanted) -> Result<(), IssuanceError> {
    if vc.subject != session.subject_did {
        return Err(IssuanceError::InvalidCredential("subject is not the holder"));
    }
    if vc.kind != wanted.kind {
        return Err(IssuanceError::InvalidCredential("unexpected kind"));
    }
    if vc.issuer != ipmf.id || !verify_signature(&ipmf.signing_key, &vc.signing_bytes(), &vc.proof) {
        return Err(IssuanceError::InvalidCredential("proof does not verify under the issuer"));
    }
    if wanted.claims.iter().any(|(k, v)| vc.claims.get(k) != Some(v)) {
        return Err(IssuanceError::InvalidCredential("claims differ from the request"));
    }
    Ok(())
}

/// Holder side of issuance: solicit an offer, identify with the current AuthN
/// credential, receive the credential, store it and acknowledge.
pub async fn run_issuance(
    channel: &SecureChannel,
    ipmf: &DidDocument,
    wallet: &SharedWallet,
    clock: &SharedClock,
    wanted: Wanted,
) -> Result<VerifiableCredential, IssuanceError> {
    let holder = channel.identity().snapshot();
    let mut session = IssuanceSession::new(new_thread_id(), IssuanceRole::Holder, holder.did.clone());
    let result = drive(channel, ipmf, wallet, clock, &wanted, &mut session).await;
    if result.is_err() {
        session.fail();
    }
    result
}

async fn drive(
    channel: &SecureChannel,
    ipmf: &DidDocument,
    wallet: &SharedWallet,
    clock: &SharedClock,
    wanted: &Wanted,
    session: &mut IssuanceSession,
) -> Result<VerifiableCredential, IssuanceError> {
    let thread = session.thread_id.clone();
    let solicit = RequestBody {
        kind: wanted.kind,
        claims: wanted.claims.clone(),
        presentation: None,
    };
    let replies = channel.request(ipmf, message(REQUEST, &thread, &solicit)).await?;
    let offer: OfferBody = expect_reply(replies, &thread, OFFER)?.map_err(IssuanceError::Denied)?;
    session.advance(IssuanceState::Offered)?;
    session.offered_kind = Some(offer.kind);
    session.challenge = Some(offer.challenge);

    let now = clock.now();
    let bootstrap = wallet
        .read()
        .expect("wallet lock poisoned")
        .authn(now)
        .cloned()
        .ok_or(IssuanceError::MissingBootstrap)?;
    let holder = channel.identity().snapshot();
    let vp = build_presentation(&holder.signer(), vec![bootstrap], offer.challenge, now)
        .expect("wallet credentials belong to the holder");
    let request = RequestBody {
        kind: wanted.kind,
        claims: wanted.claims.clone(),
        presentation: Some(vp),
    };
    let replies = channel.request(ipmf, message(REQUEST, &thread, &request)).await?;
    session.advance(IssuanceState::Requested)?;
    let issued: IssueBody = expect_reply(replies, &thread, ISSUE)?.map_err(IssuanceError::Denied)?;
    check_issued(&issued.credential, ipmf, session, wanted)?;
    session.advance(IssuanceState::Issued)?;
    wallet
        .write()
        .expect("wallet lock poisoned")
        .add(issued.credential.clone())
        .map_err(|_| IssuanceError::InvalidCredential("wallet could not store the credential"))?;
    channel.request(ipmf, ack(&thread)).await?;
    session.advance(IssuanceState::Done)?;
    Ok(issued.credential)
}
