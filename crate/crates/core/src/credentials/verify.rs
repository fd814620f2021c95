use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::model::{CredentialKind, VerifiableCredential, VerifiablePresentation};
use crate::clock::Timestamp;
use crate::identity::{verify_signature, CachePolicy, Did, DidResolver, ResolveError};
use crate::vdr::{RevocationStatus, RevocationStatusSource, VdrError};

pub const DEFAULT_CLOCK_SKEW: Duration = Duration::from_secs(30);

/// Which issuers a verifier accepts as trust anchors, and how strictly it checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustPolicy {
    pub trusted_roots: BTreeSet<Did>,
    pub require_revocation_check: bool,
    #[serde(with = "duration_secs")]
    pub clock_skew_tolerance: Duration,
}

impl TrustPolicy {
    pub fn trusting(roots: impl IntoIterator<Item = Did>) -> Self {
        Self {
            trusted_roots: roots.into_iter().collect(),
            require_revocation_check: true,
            clock_skew_tolerance: DEFAULT_CLOCK_SKEW,
        }
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCode {
    BadVcSignature,
    BadVpSignature,
    Expired,
    Revoked,
    ChainBroken,
    ChainUntrusted,
    SubjectMismatch,
    ChallengeMismatch,
    InsufficientRights,
}

impl FailureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCode::BadVcSignature => "bad_vc_signature",
            FailureCode::BadVpSignature => "bad_vp_signature",
            FailureCode::Expired => "expired",
            FailureCode::Revoked => "revoked",
            FailureCode::ChainBroken => "chain_broken",
            FailureCode::ChainUntrusted => "chain_untrusted",
            FailureCode::SubjectMismatch => "subject_mismatch",
            FailureCode::ChallengeMismatch => "challenge_mismatch",
            FailureCode::InsufficientRights => "insufficient_rights",
        }
    }

    /// Failures that concern the delegation chain rather than the credential itself.
    pub fn is_chain_failure(self) -> bool {
        matches!(
            self,
            FailureCode::ChainBroken | FailureCode::ChainUntrusted | FailureCode::InsufficientRights
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CredentialFailure {
    pub credential_id: String,
    pub code: FailureCode,
}

/// Outcome of presentation verification. `ok` holds exactly when `failures` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub ok: bool,
    pub failures: Vec<FailureCode>,
    /// Attribution of credential-level failures, for callers that act per credential.
    pub credential_failures: Vec<CredentialFailure>,
}

impl Verdict {
    fn from_parts(vp_failures: Vec<FailureCode>, credential_failures: Vec<CredentialFailure>) -> Self {
        let mut failures = Vec::new();
        for code in vp_failures
            .into_iter()
            .chain(credential_failures.iter().map(|f| f.code))
        {
            if !failures.contains(&code) {
                failures.push(code);
            }
        }
        Verdict {
            ok: failures.is_empty(),
            failures,
            credential_failures,
        }
    }

    /// Presentation-level failures (proof, challenge, subject binding).
    pub fn presentation_failures(&self) -> Vec<FailureCode> {
        let attributed: BTreeSet<FailureCode> = self
            .credential_failures
            .iter()
            .map(|f| f.code)
            .collect();
        self.failures
            .iter()
            .copied()
            .filter(|c| {
                matches!(
                    c,
                    FailureCode::BadVpSignature | FailureCode::ChallengeMismatch
                ) || (*c == FailureCode::SubjectMismatch && !attributed.contains(c))
            })
            .collect()
    }

    pub fn credential_ok(&self, credential_id: &str) -> bool {
        !self
            .credential_failures
            .iter()
            .any(|f| f.credential_id == credential_id)
    }
}

/// Infrastructure failures; never folded into a verdict.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("DID resolution failed: {0}")]
    Resolver(ResolveError),
    #[error("revocation service failed: {0}")]
    Revocation(VdrError),
}

/// Resolves the signing key of `did`. Unknown or malformed DIDs mean "no verification
/// material" and yield `Ok(None)`; an unreachable registry is an error.
async fn signing_key(resolver: &dyn DidResolver, did: &Did) -> Result<Option<[u8; 32]>, VerifyError> {
    match resolver.resolve(did, CachePolicy::CacheOk).await {
        Ok(doc) => Ok(Some(doc.signing_key)),
        Err(ResolveError::UnknownDid(_)) | Err(ResolveError::MalformedDid(_)) => Ok(None),
        Err(e) => Err(VerifyError::Resolver(e)),
    }
}

async fn proof_verifies(
    resolver: &dyn DidResolver,
    vc: &VerifiableCredential,
) -> Result<bool, VerifyError> {
    Ok(match signing_key(resolver, &vc.issuer).await? {
        Some(key) => verify_signature(&key, &vc.signing_bytes(), &vc.proof),
        None => false,
    })
}

fn is_expired(vc: &VerifiableCredential, now: Timestamp, skew: Duration) -> bool {
    match vc.expires_at {
        Some(exp) => exp <= vc.issued_at || now.saturating_sub(skew) >= exp,
        None => false,
    }
}

async fn is_revoked(
    vc: &VerifiableCredential,
    policy: &TrustPolicy,
    revocation: &dyn RevocationStatusSource,
) -> Result<bool, VerifyError> {
    if !policy.require_revocation_check {
        return Ok(false);
    }
    let Some(r) = &vc.revocation else {
        return Ok(false);
    };
    if r.credential_id != vc.credential_id {
        return Ok(true);
    }
    match revocation.status(&r.registry_id, &r.credential_id).await {
        Ok(RevocationStatus::Active) => Ok(false),
        Ok(RevocationStatus::Revoked) => Ok(true),
        Err(e) => Err(VerifyError::Revocation(e)),
    }
}

/// Walks the delegation chain of `vc` from the root down and returns chain failures.
async fn verify_chain(
    vc: &VerifiableCredential,
    policy: &TrustPolicy,
    resolver: &dyn DidResolver,
    revocation: &dyn RevocationStatusSource,
    now: Timestamp,
) -> Result<Vec<FailureCode>, VerifyError> {
    let chain = &vc.delegation_chain;
    let mut failures = Vec::new();
    let Some(terminal) = chain.last() else {
        if !policy.trusted_roots.contains(&vc.issuer) {
            failures.push(FailureCode::ChainUntrusted);
        }
        if vc.kind == CredentialKind::Del && vc.rights().is_none_or(|r| !r.grants_issuance()) {
            failures.push(FailureCode::ChainBroken);
        }
        return Ok(failures);
    };

    let mut broken = false;
    for (i, link) in chain.iter().enumerate() {
        let Some(rights) = link.rights() else {
            broken = true;
            continue;
        };
        if link.kind != CredentialKind::Del
            || !rights.grants_issuance()
            || link.delegation_chain.as_slice() != &chain[..i]
            || !proof_verifies(resolver, link).await?
        {
            broken = true;
            continue;
        }
        if i > 0 {
            let parent = &chain[i - 1];
            let parent_rights = parent.rights().unwrap_or_default();
            if parent.subject != link.issuer
                || !parent_rights.contains(super::model::Right::Delegate)
                || !rights.is_subset(&parent_rights)
            {
                broken = true;
            }
        }
        if is_expired(link, now, policy.clock_skew_tolerance) {
            failures.push(FailureCode::Expired);
        }
        if is_revoked(link, policy, revocation).await? {
            failures.push(FailureCode::Revoked);
        }
    }
    if terminal.subject != vc.issuer {
        broken = true;
    }
    if !broken {
        let terminal_rights = terminal.rights().unwrap_or_default();
        if !terminal_rights.contains(vc.kind.required_right()) {
            failures.push(FailureCode::InsufficientRights);
        } else if vc.kind == CredentialKind::Del
            && vc
                .rights()
                .is_none_or(|r| !r.grants_issuance() || !r.is_subset(&terminal_rights))
        {
            broken = true;
        }
    }
    if broken {
        failures.push(FailureCode::ChainBroken);
    }
    if !policy.trusted_roots.contains(&chain[0].issuer) {
        failures.push(FailureCode::ChainUntrusted);
    }
    Ok(failures)
}

/// Verifies one credential in isolation (no holder binding).
///
/// A credential whose own proof fails is reported as `bad_vc_signature` only;
/// none of its unauthenticated content is used to drive further lookups.
pub async fn verify_credential(
    vc: &VerifiableCredential,
    policy: &TrustPolicy,
    resolver: &dyn DidResolver,
    revocation: &dyn RevocationStatusSource,
    now: Timestamp,
) -> Result<Vec<FailureCode>, VerifyError> {
    if !proof_verifies(resolver, vc).await? {
        return Ok(vec![FailureCode::BadVcSignature]);
    }
    let mut failures = Vec::new();
    if is_expired(vc, now, policy.clock_skew_tolerance) {
        failures.push(FailureCode::Expired);
    }
    if is_revoked(vc, policy, revocation).await? {
        failures.push(FailureCode::Revoked);
    }
    failures.extend(verify_chain(vc, policy, resolver, revocation, now).await?);
    Ok(failures)
}

/// Full presentation check.
///
/// Passes iff the holder's proof verifies, the challenge matches, every
/// credential is bound to the holder, verifies under its issuer's key, is
/// neither expired nor (when required) revoked, and traces back through a
/// well-formed delegation chain to a trusted root.
pub async fn verify_presentation(
    vp: &VerifiablePresentation,
    expected_challenge: &[u8; 32],
    policy: &TrustPolicy,
    resolver: &dyn DidResolver,
    revocation: &dyn RevocationStatusSource,
    now: Timestamp,
) -> Result<Verdict, VerifyError> {
    let mut vp_failures = Vec::new();
    match signing_key(resolver, &vp.holder).await? {
        Some(key) if verify_signature(&key, &vp.signing_bytes(), &vp.proof) => {}
        _ => vp_failures.push(FailureCode::BadVpSignature),
    }
    if vp.challenge != *expected_challenge {
        vp_failures.push(FailureCode::ChallengeMismatch);
    }
    if vp.credentials.is_empty() {
        vp_failures.push(FailureCode::SubjectMismatch);
    }

    let mut credential_failures = Vec::new();
    for vc in &vp.credentials {
        let mut codes = Vec::new();
        if vc.subject != vp.holder {
            codes.push(FailureCode::SubjectMismatch);
        }
        codes.extend(verify_credential(vc, policy, resolver, revocation, now).await?);
        credential_failures.extend(codes.into_iter().map(|code| CredentialFailure {
            credential_id: vc.credential_id.clone(),
            code,
        }));
    }
    Ok(Verdict::from_parts(vp_failures, credential_failures))
}
