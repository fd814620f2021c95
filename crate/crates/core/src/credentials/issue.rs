use std::time::Duration;

use super::model::{
    Claims, CredentialKind, RevocationRef, RightSet, VerifiableCredential, VerifiablePresentation,
    CLAIM_RIGHTS,
};
use super::CredentialError;
use crate::clock::Timestamp;
use crate::identity::{Did, KeyPair};

/// Signing identity of an issuer or holder.
#[derive(Debug, Clone)]
pub struct Signer {
    pub did: Did,
    pub keys: KeyPair,
}

impl Signer {
    pub fn new(did: Did, keys: KeyPair) -> Self {
        Self { did, keys }
    }
}

/// What to issue, independent of who issues it.
#[derive(Debug, Clone)]
pub struct CredentialRequest {
    pub kind: CredentialKind,
    pub subject: Did,
    pub claims: Claims,
    pub validity: Option<Duration>,
    /// Registry in which the credential can later be revoked.
    pub revocation_registry: Option<String>,
    /// Del credentials proving the issuer's rights, root first.
    pub chain: Vec<VerifiableCredential>,
}

impl CredentialRequest {
    pub fn new(kind: CredentialKind, subject: Did, claims: Claims) -> Self {
        Self {
            kind,
            subject,
            claims,
            validity: None,
            revocation_registry: None,
            chain: Vec::new(),
        }
    }

    pub fn validity(mut self, d: Duration) -> Self {
        self.validity = Some(d);
        self
    }

    pub fn revocable_in(mut self, registry_id: impl Into<String>) -> Self {
        self.revocation_registry = Some(registry_id.into());
        self
    }

    pub fn chain(mut self, chain: Vec<VerifiableCredential>) -> Self {
        self.chain = chain;
        self
    }
}

/// Rights an issuer holds given the chain it presents: all rights for a root.
pub fn effective_rights(chain: &[VerifiableCredential]) -> Option<RightSet> {
    match chain.last() {
        None => Some(RightSet::all()),
        Some(terminal) => terminal.rights(),
    }
}

fn check_chain_authority(
    issuer: &Did,
    kind: CredentialKind,
    chain: &[VerifiableCredential],
) -> Result<RightSet, CredentialError> {
    if let Some(terminal) = chain.last() {
        if terminal.subject != *issuer {
            return Err(CredentialError::ChainTerminalMismatch);
        }
    }
    let rights = effective_rights(chain).ok_or(CredentialError::InsufficientRights)?;
    if !rights.contains(kind.required_right()) {
        return Err(CredentialError::InsufficientRights);
    }
    Ok(rights)
}

/// Issues and signs a credential. The chain must authorize the requested kind.
pub fn issue_credential(
    issuer: &Signer,
    request: CredentialRequest,
    now: Timestamp,
) -> Result<VerifiableCredential, CredentialError> {
    let rights = check_chain_authority(&issuer.did, request.kind, &request.chain)?;
    if request.kind == CredentialKind::Del {
        let granted: RightSet = request
            .claims
            .get(CLAIM_RIGHTS)
            .ok_or(CredentialError::MissingRights)?
            .parse()
            .map_err(|_| CredentialError::MissingRights)?;
        if !granted.grants_issuance() {
            return Err(CredentialError::MissingRights);
        }
        if !granted.is_subset(&rights) {
            return Err(CredentialError::RightsEscalation);
        }
    }
    let expires_at = match request.validity {
        Some(d) if d.is_zero() => return Err(CredentialError::InvalidValidity),
        Some(d) => Some(now.saturating_add(d)),
        None => None,
    };
    let credential_id = uuid::Uuid::new_v4().to_string();
    let revocation = request.revocation_registry.map(|registry_id| RevocationRef {
        registry_id,
        credential_id: credential_id.clone(),
    });
    let mut vc = VerifiableCredential {
        credential_id,
        kind: request.kind,
        issuer: issuer.did.clone(),
        subject: request.subject,
        claims: request.claims,
        issued_at: now,
        expires_at,
        revocation,
        delegation_chain: request.chain,
        proof: Vec::new(),
    };
    vc.proof = issuer.keys.sign(&vc.signing_bytes()).to_vec();
    Ok(vc)
}

/// Issues a Del credential to a child IPMF.
///
/// The rights must be a subset of the parent's own rights, and a non-root
/// parent needs `delegate` in its terminal Del credential. The parent's
/// chain is embedded so the child can prove its rights back to the root.
pub fn issue_delegation(
    parent: &Signer,
    child: &Did,
    rights: &RightSet,
    parent_chain: &[VerifiableCredential],
    validity: Option<Duration>,
    revocation_registry: Option<String>,
    now: Timestamp,
) -> Result<VerifiableCredential, CredentialError> {
    let parent_rights = check_chain_authority(&parent.did, CredentialKind::Del, parent_chain)
        .map_err(|e| match e {
            CredentialError::InsufficientRights => CredentialError::MissingDelegateRight,
            other => other,
        })?;
    if !rights.is_subset(&parent_rights) {
        return Err(CredentialError::RightsEscalation);
    }
    let mut claims = Claims::new();
    claims.insert(CLAIM_RIGHTS.to_string(), rights.to_string());
    issue_credential(
        parent,
        CredentialRequest {
            kind: CredentialKind::Del,
            subject: child.clone(),
            claims,
            validity,
            revocation_registry,
            chain: parent_chain.to_vec(),
        },
        now,
    )
}

/// The chain a child must attach to its own issuances: parent's chain plus the child's Del VC.
pub fn child_chain(del: &VerifiableCredential) -> Vec<VerifiableCredential> {
    let mut chain = del.delegation_chain.clone();
    chain.push(del.clone());
    chain
}

/// Bundles the holder's own credentials with a verifier's challenge and signs the result.
pub fn build_presentation(
    holder: &Signer,
    credentials: Vec<VerifiableCredential>,
    challenge: [u8; 32],
    now: Timestamp,
) -> Result<VerifiablePresentation, CredentialError> {
    if credentials.is_empty() {
        return Err(CredentialError::EmptyPresentation);
    }
    if credentials.iter().any(|c| c.subject != holder.did) {
        return Err(CredentialError::SubjectMismatch);
    }
    let mut vp = VerifiablePresentation {
        holder: holder.did.clone(),
        credentials,
        challenge,
        created_at: now,
        proof: Vec::new(),
    };
    vp.proof = holder.keys.sign(&vp.signing_bytes()).to_vec();
    Ok(vp)
}
