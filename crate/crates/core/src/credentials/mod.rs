//! Verifiable credentials and presentations.
//!
//! Credentials come in three kinds: AuthN (identity claims), AuthZ
//! (permission grants) and Del (issuance rights handed from a parent IPMF
//! to a child). Every AuthN/AuthZ credential issued by a non-root IPMF
//! embeds the Del chain back to the root so a verifier can trace it to an
//! issuer it trusts.

mod authz;
mod issue;
mod model;
mod verify;

pub use authz::{
    claims_grant, claims_target_producer, evaluate_authorization, AccessRequest, CLAIM_OPS,
    CLAIM_PRODUCER, CLAIM_SERVICE, WILDCARD,
};
pub use issue::{
    build_presentation, child_chain, effective_rights, issue_credential, issue_delegation,
    CredentialRequest, Signer,
};
pub use model::{
    Claims, CredentialKind, RevocationRef, Right, RightSet, VerifiableCredential,
    VerifiablePresentation, CLAIM_RIGHTS,
};
pub use verify::{
    verify_credential, verify_presentation, CredentialFailure, FailureCode, TrustPolicy, Verdict,
    VerifyError, DEFAULT_CLOCK_SKEW,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("delegation chain does not end at the issuer")]
    ChainTerminalMismatch,
    #[error("issuer lacks the right required for this credential kind")]
    InsufficientRights,
    #[error("delegated rights exceed the parent's rights")]
    RightsEscalation,
    #[error("parent lacks the delegate right")]
    MissingDelegateRight,
    #[error("delegation must grant issue_authn and/or issue_authz")]
    MissingRights,
    #[error("credential subject differs from the presentation holder")]
    SubjectMismatch,
    #[error("a presentation needs at least one credential")]
    EmptyPresentation,
    #[error("validity period must be positive")]
    InvalidValidity,
}
