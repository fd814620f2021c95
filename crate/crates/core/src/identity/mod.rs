//! Keys, DIDs, DID documents and resolution.
//!
//! Two DID methods exist. `did:speer:` identifiers carry both public keys
//! and resolve without any registry. `did:svdr:` identifiers fingerprint
//! the initial signing key; their documents live in the registry and can
//! be rotated by the owner.

mod did;
mod document;
mod keys;
mod resolver;

pub use did::{Did, DidMethod, PEER_PREFIX, REGISTRY_PREFIX};
pub use document::{
    create_peer_did, create_registry_did, extract_document, rotate_document, self_sign, update_endpoint,
    verify_document_chain, verify_update, DidDocument, SignedDocumentUpdate,
};
pub use keys::{generate_keypair, verify_signature, KeyPair, SEED_LEN, SIGNATURE_LEN};
pub use resolver::{
    resolve, CachePolicy, CachedDocument, CachingResolver, DidResolver, DocumentSource,
    ResolutionCache, ResolveError, DEFAULT_CACHE_MAX_AGE,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("seed must be 32 bytes, got {0}")]
    MalformedSeed(usize),
    #[error("malformed DID {0}")]
    MalformedDid(String),
    #[error("{0} is not a peer DID")]
    NotSelfContained(String),
    #[error("peer DID documents cannot be rotated")]
    PeerRotation,
    #[error("signing key does not match the current document")]
    SignerMismatch,
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("version chain broken: {0}")]
    ChainBroken(String),
}
