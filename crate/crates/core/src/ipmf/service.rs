use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;

use super::config::{ConfigError, IpmfConfig};
use super::log::{IssuanceLog, LogEntry, LogError};
use super::policy::first_match;
use crate::clock::SharedClock;
use crate::credentials::{
    issue_credential, issue_delegation, Claims, CredentialError, CredentialKind, CredentialRequest, RightSet,
    Signer, VerifiableCredential,
};
use crate::envelope::ProtocolMessage;
use crate::identity::{
    create_registry_did, self_sign, update_endpoint, Did, DidResolver, IdentityError,
};
use crate::protocols::{
    deny, fresh_challenge, message, parse, Denial, DenyReason, IssuanceRole, IssuanceSession,
    IssuanceState, IssueBody, LocalIdentity, MessageHandler, OfferBody, RequestBody, SessionTable, SharedIdentity,
    Verifier, ACK, ISSUE, OFFER, REQUEST, DEFAULT_SESSION_TIMEOUT,
};
use crate::vdr::{CreateRevocationRegistry, RevokeRequest, VdrClient, VdrError, VdrSource};

#[derive(Debug, thiserror::Error)]
pub enum IpmfError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("registry: {0}")]
    Registry(#[from] VdrError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("registered document of {0} does not carry the configured signing key")]
    KeyMismatch(Did),
    #[error("credential {0} was not issued by this IPMF")]
    UnknownCredential(String),
    #[error("credential {0} was issued by {1}, not by this IPMF")]
    NotIssuer(String, Did),
    #[error("credential {0} is not revocable")]
    NotRevocable(String),
}

/// Running IPMF: answers issuance requests, delegates and revokes.
pub struct IpmfService {
    config: IpmfConfig,
    identity: SharedIdentity,
    vdr: Arc<dyn VdrClient>,
    verifier: Verifier,
    log: IssuanceLog,
    sessions: SessionTable<String, IssuanceSession>,
    registry_id: String,
}

impl IpmfService {
    /// Validates the config, makes sure the DID is registered with the configured endpoint
    /// and a revocation registry exists.
    pub async fn start(
        config: IpmfConfig,
        vdr: Arc<dyn VdrClient>,
        resolver: Arc<dyn DidResolver>,
        clock: SharedClock,
        log: IssuanceLog,
    ) -> Result<Self, IpmfError> {
        config.validate()?;
        let keys = &config.keys;
        let endpoint = config.endpoint.as_deref();
        let document = match vdr.resolve_did(&config.did).await {
            Ok((doc, _)) => {
                if doc.signing_key != keys.signing_public() {
                    return Err(IpmfError::KeyMismatch(config.did.clone()));
                }
                if doc.service_endpoint.as_deref() != endpoint {
                    let update = update_endpoint(&doc, endpoint, keys)?;
                    vdr.update(update.clone()).await?;
                    update.document
                } else {
                    doc
                }
            }
            Err(VdrError::UnknownDid(_)) => {
                let (_, doc) = create_registry_did(keys, endpoint);
                vdr.register(doc.clone(), self_sign(&doc, keys)).await?;
                doc
            }
            Err(e) => return Err(e.into()),
        };
        let registry_id = match &config.revocation_registry_id {
            Some(id) => id.clone(),
            None => {
                let request = CreateRevocationRegistry::new(config.did.clone());
                let signature = keys.sign(&request.signing_bytes()).to_vec();
                vdr.create_revocation_registry(request, signature).await?
            }
        };
        let verifier = Verifier {
            policy: config.trust_policy(),
            resolver,
            revocation: Arc::new(VdrSource(vdr.clone())),
            clock: clock.clone(),
        };
        Ok(Self {
            identity: SharedIdentity::new(LocalIdentity::new(keys.clone(), document)),
            sessions: SessionTable::new(DEFAULT_SESSION_TIMEOUT, clock),
            config,
            vdr,
            verifier,
            log,
            registry_id,
        })
    }

    pub fn with_session_timeout(mut self, timeout: Duration) -> Self {
        self.sessions = SessionTable::new(timeout, self.verifier.clock.clone());
        self
    }

    pub fn did(&self) -> &Did {
        &self.config.did
    }

    pub fn config(&self) -> &IpmfConfig {
        &self.config
    }

    pub fn identity(&self) -> &SharedIdentity {
        &self.identity
    }

    pub fn registry_id(&self) -> &str {
        &self.registry_id
    }

    pub fn log(&self) -> &IssuanceLog {
        &self.log
    }

    pub fn effective_rights(&self) -> RightSet {
        self.config.effective_rights()
    }

    /// The chain a child of this IPMF embeds: this IPMF's chain plus `del`.
    pub fn parent_chain(&self) -> &[VerifiableCredential] {
        &self.config.parent_chain
    }

    fn signer(&self) -> Signer {
        Signer::new(self.config.did.clone(), self.config.keys.clone())
    }

    /// Issues a Del credential to a child IPMF and records it.
    pub fn delegate_to_child(&self, child: &Did, rights: RightSet) -> Result<VerifiableCredential, IpmfError> {
        let del = issue_delegation(
            &self.signer(),
            child,
            &rights,
            &self.config.parent_chain,
            self.config.delegation_validity_secs.map(Duration::from_secs),
            Some(self.registry_id.clone()),
            self.verifier.clock.now(),
        )?;
        self.log.append(LogEntry::issued(&del))?;
        Ok(del)
    }

    /// Out-of-band issuance (e.g. the bootstrap credentials an NF ships with).
    pub fn issue_direct(
        &self,
        subject: &Did,
        kind: CredentialKind,
        claims: Claims,
        validity: Option<Duration>,
    ) -> Result<VerifiableCredential, IpmfError> {
        let mut request = CredentialRequest::new(kind, subject.clone(), claims)
            .revocable_in(self.registry_id.clone())
            .chain(self.config.parent_chain.clone());
        request.validity = validity;
        let vc = issue_credential(&self.signer(), request, self.verifier.clock.now())?;
        self.log.append(LogEntry::issued(&vc))?;
        Ok(vc)
    }

    /// Revokes a credential this IPMF issued. Revoking twice is a no-op.
    pub async fn revoke_credential(&self, credential_id: &str) -> Result<(), IpmfError> {
        let record = self
            .log
            .get(credential_id)
            .ok_or_else(|| IpmfError::UnknownCredential(credential_id.to_string()))?;
        let reference = record
            .revocation
            .ok_or_else(|| IpmfError::NotRevocable(credential_id.to_string()))?;
        let request = RevokeRequest {
            registry_id: reference.registry_id,
            credential_id: reference.credential_id,
        };
        let signature = self.config.keys.sign(&request.signing_bytes()).to_vec();
        self.vdr.revoke(request, signature).await?;
        if !record.revoked {
            self.log.append(LogEntry::Revoked {
                credential_id: credential_id.to_string(),
                at: self.verifier.clock.now(),
            })?;
        }
        Ok(())
    }

    /// Revokes a credential given in full, refusing credentials of other issuers.
    pub async fn revoke(&self, vc: &VerifiableCredential) -> Result<(), IpmfError> {
        if vc.issuer != self.config.did {
            return Err(IpmfError::NotIssuer(vc.credential_id.clone(), vc.issuer.clone()));
        }
        self.revoke_credential(&vc.credential_id).await
    }

    fn solicit(&self, sender: &Did, msg: &ProtocolMessage, body: &RequestBody) -> ProtocolMessage {
        let mut session = IssuanceSession::new(msg.thread_id.clone(), IssuanceRole::Issuer, sender.clone());
        session.advance(IssuanceState::Offered).expect("start -> offered");
        let challenge = fresh_challenge();
        session.offered_kind = Some(body.kind);
        session.challenge = Some(challenge);
        self.sessions.insert(msg.thread_id.clone(), session);
        message(OFFER, &msg.thread_id, &OfferBody { kind: body.kind, challenge })
    }

    /// Verifies the requester's presentation and applies the issuance policy.
    pub async fn handle_issuance_request(&self, sender: &Did, msg: &ProtocolMessage) -> ProtocolMessage {
        let body: RequestBody = match parse(msg, REQUEST) {
            Ok(b) => b,
            Err(e) => return deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, e.to_string())),
        };
        let Some(vp) = &body.presentation else {
            return self.solicit(sender, msg, &body);
        };
        let Some(mut session) = self.sessions.remove(&msg.thread_id) else {
            return deny(&msg.thread_id, &Denial::new(DenyReason::Protocol, "no pending offer on this thread"));
        };
        let result = self.decide(sender, &mut session, &body, vp).await;
        match result {
            Ok(vc) => {
                let reply = message(ISSUE, &msg.thread_id, &IssueBody { credential: vc });
                session.advance(IssuanceState::Issued).expect("requested -> issued");
                self.sessions.insert(msg.thread_id.clone(), session);
                reply
            }
            Err(denial) => {
                session.fail();
                tracing::info!(holder = %sender, %denial, "issuance denied");
                deny(&msg.thread_id, &denial)
            }
        }
    }

    async fn decide(
        &self,
        sender: &Did,
        session: &mut IssuanceSession,
        body: &RequestBody,
        vp: &crate::credentials::VerifiablePresentation,
    ) -> Result<VerifiableCredential, Denial> {
        let protocol = |d: &str| Denial::new(DenyReason::Protocol, d);
        if session.subject_did != *sender || session.offered_kind != Some(body.kind) {
            return Err(protocol("request does not match the offer"));
        }
        session
            .advance(IssuanceState::Requested)
            .map_err(|e| protocol(&e.to_string()))?;
        let challenge = session.challenge.expect("offered sessions carry a challenge");
        let verdict = self
            .verifier
            .verify(vp, &challenge)
            .await
            .map_err(|e| protocol(&format!("verification unavailable: {e}")))?;
        if !verdict.ok {
            return Err(Denial::new(DenyReason::Identification, "bootstrap presentation rejected")
                .with_failures(verdict.failures));
        }
        if vp.holder != *sender {
            return Err(Denial::new(DenyReason::Identification, "presentation holder is not the sender")
                .with_failures(vec![crate::credentials::FailureCode::SubjectMismatch]));
        }
        let Some(authn) = vp.credentials.iter().find(|c| c.kind == CredentialKind::AuthN) else {
            return Err(Denial::new(DenyReason::Identification, "no AuthN credential presented"));
        };
        if self.config.is_root() && !self.config.allow_direct_issuance {
            return Err(Denial::new(DenyReason::Policy, "root IPMF only delegates"));
        }
        if body.kind == CredentialKind::Del || !self.effective_rights().contains(body.kind.required_right()) {
            return Err(Denial::new(DenyReason::Policy, format!("{} is outside this IPMF's rights", body.kind)));
        }
        let decision = first_match(&self.config.issuance_policy, &authn.claims, body.kind, &body.claims)
            .ok_or_else(|| Denial::new(DenyReason::Policy, "no matching issuance rule"))?;
        self.issue_direct(sender, body.kind, decision.claims, decision.validity)
            .map_err(|e| Denial::new(DenyReason::Policy, e.to_string()))
    }

    fn on_ack(&self, msg: &ProtocolMessage) {
        if let Some(mut s) = self.sessions.remove(&msg.thread_id) {
            if s.advance(IssuanceState::Done).is_err() {
                s.fail();
            }
        }
    }
}

#[async_trait]
impl MessageHandler for IpmfService {
    async fn handle(&self, sender: &Did, msg: ProtocolMessage) -> Vec<ProtocolMessage> {
        match msg.msg_type.as_str() {
            REQUEST => vec![self.handle_issuance_request(sender, &msg).await],
            ACK => {
                self.on_ack(&msg);
                Vec::new()
            }
            other => vec![deny(
                &msg.thread_id,
                &Denial::new(DenyReason::Protocol, format!("unsupported message {other}")),
            )],
        }
    }
}
