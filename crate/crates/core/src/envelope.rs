//! Authenticated-encryption envelope between two DIDs.
//!
//! Each message gets a fresh random content key and is sealed with
//! XChaCha20-Poly1305 under that key, with the canonical protected header
//! as associated data. The content key is wrapped under a key derived with
//! HKDF-SHA-256 from the static-static X25519 secret of the sender's and
//! recipient's agreement keys, using the protected header as HKDF info.
//! Only the intended recipient can unwrap it, and a successful unwrap
//! proves the sender held the agreement secret named in the header.
//!
//! Wire framing is a 4-byte big-endian length followed by the canonical
//! JSON envelope with base64url binary fields.

use chacha20poly1305::aead::{Aead, AeadInPlace, KeyInit};
use chacha20poly1305::{Key, XChaCha20Poly1305, XNonce};
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::Sha256;

use crate::canonical::to_canonical_bytes;
use crate::identity::{CachePolicy, Did, DidDocument, DidResolver, KeyPair, ResolveError};

pub const CONTENT_ENCRYPTION: &str = "XC20P";
pub const NONCE_LEN: usize = 24;
pub const TAG_LEN: usize = 16;
pub const WRAPPED_KEY_LEN: usize = 32 + TAG_LEN;
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

const HKDF_SALT: &[u8] = b"nfid-envelope-v1";

/// A typed message carried inside an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtocolMessage {
    #[serde(rename = "type")]
    pub msg_type: String,
    pub thread_id: String,
    pub body: Value,
}

impl ProtocolMessage {
    pub fn new(msg_type: impl Into<String>, thread_id: impl Into<String>, body: Value) -> Self {
        Self {
            msg_type: msg_type.into(),
            thread_id: thread_id.into(),
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtectedHeader {
    pub sender: Did,
    pub recipient: Did,
    pub recipient_key_version: u64,
    pub content_encryption: String,
    #[serde(with = "crate::canonical::b64_array")]
    pub nonce: [u8; NONCE_LEN],
}

impl ProtectedHeader {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("headers serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    pub protected_header: ProtectedHeader,
    #[serde(with = "crate::canonical::b64")]
    pub wrapped_key: Vec<u8>,
    #[serde(with = "crate::canonical::b64")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "crate::canonical::b64")]
    pub auth_tag: Vec<u8>,
}

impl Envelope {
    /// Size of the binary content (header bytes, wrapped key, ciphertext, tag).
    pub fn binary_len(&self) -> usize {
        self.protected_header.canonical_bytes().len()
            + self.wrapped_key.len()
            + self.ciphertext.len()
            + self.auth_tag.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("envelope is addressed to someone else")]
    NotIntendedRecipient,
    #[error("sender authentication failed (content key could not be unwrapped)")]
    SenderAuthentication,
    #[error("ciphertext integrity check failed")]
    Integrity,
    #[error("unknown sender {0}")]
    UnknownSender(String),
    #[error("envelope targets key version {header}, current version is {current}")]
    StaleRecipientKey { header: u64, current: u64 },
    #[error("unsupported content encryption {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("resolver failure: {0}")]
    Resolver(ResolveError),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("truncated frame")]
    TruncatedFrame,
    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    OversizeFrame(usize),
    #[error("malformed envelope JSON: {0}")]
    MalformedHeader(String),
}

/// The recipient side's own identity: DID, current keys and current document version.
#[derive(Debug, Clone)]
pub struct LocalKeys<'a> {
    pub did: &'a Did,
    pub keys: &'a KeyPair,
    pub key_version: u64,
}

fn derive_wrapping(shared: &[u8; 32], header: &[u8]) -> (Key, XNonce) {
    let hk = Hkdf::<Sha256>::new(Some(HKDF_SALT), shared);
    let mut okm = [0u8; 32 + NONCE_LEN];
    hk.expand(header, &mut okm).expect("output length is valid");
    (
        *Key::from_slice(&okm[..32]),
        *XNonce::from_slice(&okm[32..]),
    )
}

/// Encrypts `msg` for the holder of `recipient_doc`.
pub fn pack(
    msg: &ProtocolMessage,
    sender_keys: &KeyPair,
    sender_did: &Did,
    recipient_doc: &DidDocument,
) -> Envelope {
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let mut content_key = [0u8; 32];
    OsRng.fill_bytes(&mut content_key);

    let header = ProtectedHeader {
        sender: sender_did.clone(),
        recipient: recipient_doc.id.clone(),
        recipient_key_version: recipient_doc.version,
        content_encryption: CONTENT_ENCRYPTION.to_string(),
        nonce,
    };
    let header_bytes = header.canonical_bytes();

    let shared = sender_keys.agree(&recipient_doc.agreement_key);
    let (kek, wrap_nonce) = derive_wrapping(&shared, &header_bytes);
    let wrapped_key = XChaCha20Poly1305::new(&kek)
        .encrypt(&wrap_nonce, content_key.as_slice())
        .expect("key wrap cannot fail");

    let mut ciphertext = serde_json::to_vec(msg).expect("messages serialize");
    let tag = XChaCha20Poly1305::new(Key::from_slice(&content_key))
        .encrypt_in_place_detached(XNonce::from_slice(&nonce), &header_bytes, &mut ciphertext)
        .expect("encryption cannot fail");

    Envelope {
        protected_header: header,
        wrapped_key,
        ciphertext,
        auth_tag: tag.to_vec(),
    }
}

fn unwrap_content_key(
    env: &Envelope,
    header_bytes: &[u8],
    recipient: &KeyPair,
    sender_agreement: &[u8; 32],
) -> Option<[u8; 32]> {
    let shared = recipient.agree(sender_agreement);
    let (kek, wrap_nonce) = derive_wrapping(&shared, header_bytes);
    XChaCha20Poly1305::new(&kek)
        .decrypt(&wrap_nonce, env.wrapped_key.as_slice())
        .ok()?
        .try_into()
        .ok()
}

/// Decrypts and authenticates an envelope, returning the message and the authenticated sender.
///
/// The sender's agreement key comes from `resolver`; if the cached document
/// does not authenticate the envelope, one forced refresh is attempted in
/// case the sender rotated its keys.
pub async fn unpack(
    env: &Envelope,
    me: LocalKeys<'_>,
    resolver: &dyn DidResolver,
) -> Result<(ProtocolMessage, Did), EnvelopeError> {
    let header = &env.protected_header;
    if header.recipient != *me.did {
        return Err(EnvelopeError::NotIntendedRecipient);
    }
    if header.content_encryption != CONTENT_ENCRYPTION {
        return Err(EnvelopeError::UnsupportedAlgorithm(
            header.content_encryption.clone(),
        ));
    }
    if header.recipient_key_version != me.key_version {
        return Err(EnvelopeError::StaleRecipientKey {
            header: header.recipient_key_version,
            current: me.key_version,
        });
    }
    let header_bytes = header.canonical_bytes();

    let lookup = |policy| async move {
        match resolver.resolve(&header.sender, policy).await {
            Ok(doc) => Ok(doc),
            Err(ResolveError::UnknownDid(d)) | Err(ResolveError::MalformedDid(d)) => {
                Err(EnvelopeError::UnknownSender(d))
            }
            Err(e) => Err(EnvelopeError::Resolver(e)),
        }
    };
    let sender_doc = lookup(CachePolicy::CacheOk).await?;
    let content_key = match unwrap_content_key(env, &header_bytes, me.keys, &sender_doc.agreement_key) {
        Some(k) => k,
        None if !header.sender.is_peer() => {
            let fresh = lookup(CachePolicy::ForceFresh).await?;
            if fresh.agreement_key == sender_doc.agreement_key {
                return Err(EnvelopeError::SenderAuthentication);
            }
            unwrap_content_key(env, &header_bytes, me.keys, &fresh.agreement_key)
                .ok_or(EnvelopeError::SenderAuthentication)?
        }
        None => return Err(EnvelopeError::SenderAuthentication),
    };

    if env.auth_tag.len() != TAG_LEN {
        return Err(EnvelopeError::Integrity);
    }
    let mut plaintext = env.ciphertext.clone();
    XChaCha20Poly1305::new(Key::from_slice(&content_key))
        .decrypt_in_place_detached(
            XNonce::from_slice(&header.nonce),
            &header_bytes,
            &mut plaintext,
            chacha20poly1305::Tag::from_slice(&env.auth_tag),
        )
        .map_err(|_| EnvelopeError::Integrity)?;
    let msg: ProtocolMessage = serde_json::from_slice(&plaintext)
        .map_err(|e| EnvelopeError::MalformedMessage(e.to_string()))?;
    Ok((msg, header.sender.clone()))
}

/// Encodes one envelope as a length-prefixed frame.
pub fn encode_wire(env: &Envelope) -> Vec<u8> {
    let body = to_canonical_bytes(env).expect("envelopes serialize");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Reads one frame from the front of `bytes`, returning the envelope and bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Envelope, usize), EnvelopeError> {
    let prefix: [u8; 4] = bytes
        .get(..4)
        .ok_or(EnvelopeError::TruncatedFrame)?
        .try_into()
        .expect("slice of length 4");
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(EnvelopeError::OversizeFrame(len));
    }
    let body = bytes.get(4..4 + len).ok_or(EnvelopeError::TruncatedFrame)?;
    let env = serde_json::from_slice(body).map_err(|e| EnvelopeError::MalformedHeader(e.to_string()))?;
    Ok((env, 4 + len))
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode_wire(bytes: &[u8]) -> Result<Envelope, EnvelopeError> {
    let (env, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(EnvelopeError::MalformedHeader(format!(
            "{} trailing bytes after frame",
            bytes.len() - used
        )));
    }
    Ok(env)
}

/// Decodes a concatenation of frames.
pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<Envelope>, EnvelopeError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (env, used) = decode_frame(bytes)?;
        out.push(env);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn encode_frames<'a>(envs: impl IntoIterator<Item = &'a Envelope>) -> Vec<u8> {
    envs.into_iter().flat_map(encode_wire).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{create_peer_did, generate_keypair, DocumentSource, ResolutionCache};
    use crate::identity::CachingResolver;
    use serde_json::json;
    use std::sync::Arc;

    struct NoRegistry;

    #[async_trait::async_trait]
    impl DocumentSource for NoRegistry {
        async fn fetch_document(&self, did: &Did) -> Result<DidDocument, ResolveError> {
            Err(ResolveError::UnknownDid(did.to_string()))
        }
    }

    fn resolver() -> CachingResolver {
        CachingResolver::new(
            Arc::new(NoRegistry),
            Arc::new(ResolutionCache::new(
                std::time::Duration::from_secs(300),
                crate::clock::system_clock(),
            )),
        )
    }

    struct Party {
        keys: KeyPair,
        did: Did,
        doc: DidDocument,
    }

    impl Party {
        fn new() -> Self {
            let keys = generate_keypair(None).unwrap();
            let (did, doc) = create_peer_did(&keys);
            Party { keys, did, doc }
        }

        fn local(&self) -> LocalKeys<'_> {
            LocalKeys {
                did: &self.did,
                keys: &self.keys,
                key_version: self.doc.version,
            }
        }
    }

    fn msg() -> ProtocolMessage {
        ProtocolMessage::new("acl/1.0/ack", "t-1", json!({"hello": "world"}))
    }

    #[tokio::test]
    async fn roundtrip() {
        let (a, b) = (Party::new(), Party::new());
        let env = pack(&msg(), &a.keys, &a.did, &b.doc);
        let (got, sender) = unpack(&env, b.local(), &resolver()).await.unwrap();
        assert_eq!(got, msg());
        assert_eq!(sender, a.did);
    }

    #[test]
    fn packs_are_fresh() {
        let (a, b) = (Party::new(), Party::new());
        let e1 = pack(&msg(), &a.keys, &a.did, &b.doc);
        let e2 = pack(&msg(), &a.keys, &a.did, &b.doc);
        assert_ne!(e1.protected_header.nonce, e2.protected_header.nonce);
        assert_ne!(e1.ciphertext, e2.ciphertext);
        assert_eq!(e1.wrapped_key.len(), WRAPPED_KEY_LEN);
        assert_eq!(e1.auth_tag.len(), TAG_LEN);
    }

    #[tokio::test]
    async fn third_party_cannot_unpack() {
        let (a, b, c) = (Party::new(), Party::new(), Party::new());
        let env = pack(&msg(), &a.keys, &a.did, &b.doc);
        assert_eq!(
            unpack(&env, c.local(), &resolver()).await.unwrap_err(),
            EnvelopeError::NotIntendedRecipient
        );
        // Even when impersonating the recipient DID, the wrong keys cannot unwrap.
        let impostor = LocalKeys {
            did: &b.did,
            keys: &c.keys,
            key_version: 1,
        };
        assert!(unpack(&env, impostor, &resolver()).await.is_err());
    }

    #[tokio::test]
    async fn ciphertext_flip_is_integrity_failure() {
        let (a, b) = (Party::new(), Party::new());
        let mut env = pack(&msg(), &a.keys, &a.did, &b.doc);
        env.ciphertext[0] ^= 1;
        assert_eq!(
            unpack(&env, b.local(), &resolver()).await.unwrap_err(),
            EnvelopeError::Integrity
        );
        let mut env = pack(&msg(), &a.keys, &a.did, &b.doc);
        env.auth_tag[3] ^= 1;
        assert_eq!(
            unpack(&env, b.local(), &resolver()).await.unwrap_err(),
            EnvelopeError::Integrity
        );
    }

    #[tokio::test]
    async fn forged_sender_is_rejected() {
        let (a, b, mallory) = (Party::new(), Party::new(), Party::new());
        // Mallory packs with her own keys but claims to be A.
        let env = pack(&msg(), &mallory.keys, &a.did, &b.doc);
        assert_eq!(
            unpack(&env, b.local(), &resolver()).await.unwrap_err(),
            EnvelopeError::SenderAuthentication
        );
    }

    #[tokio::test]
    async fn header_mutations_fail() {
        let (a, b, c) = (Party::new(), Party::new(), Party::new());
        let env = pack(&msg(), &a.keys, &a.did, &b.doc);
        let mut m = env.clone();
        m.protected_header.nonce[0] ^= 1;
        assert!(unpack(&m, b.local(), &resolver()).await.is_err());
        let mut m = env.clone();
        m.protected_header.sender = c.did.clone();
        assert!(unpack(&m, b.local(), &resolver()).await.is_err());
        let mut m = env.clone();
        m.protected_header.recipient_key_version = 2;
        assert!(matches!(
            unpack(&m, b.local(), &resolver()).await,
            Err(EnvelopeError::StaleRecipientKey { header: 2, current: 1 })
        ));
        let mut m = env;
        m.protected_header.content_encryption = "A256GCM".into();
        assert!(unpack(&m, b.local(), &resolver()).await.is_err());
    }

    #[tokio::test]
    async fn wire_roundtrip() {
        let (a, b) = (Party::new(), Party::new());
        let env = pack(&msg(), &a.keys, &a.did, &b.doc);
        let bytes = encode_wire(&env);
        assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
        let back = decode_wire(&bytes).unwrap();
        assert_eq!(back, env);
        let (got, _) = unpack(&back, b.local(), &resolver()).await.unwrap();
        assert_eq!(got, msg());
    }

    #[test]
    fn truncated_frames() {
        let (a, b) = (Party::new(), Party::new());
        let bytes = encode_wire(&pack(&msg(), &a.keys, &a.did, &b.doc));
        assert_eq!(decode_wire(&bytes[..3]).unwrap_err(), EnvelopeError::TruncatedFrame);
        assert_eq!(
            decode_wire(&bytes[..bytes.len() - 1]).unwrap_err(),
            EnvelopeError::TruncatedFrame
        );
        assert_eq!(decode_wire(&[]).unwrap_err(), EnvelopeError::TruncatedFrame);
    }

    #[test]
    fn frame_length_limit() {
        let frame = |len: usize| {
            let mut f = (len as u32).to_be_bytes().to_vec();
            f.resize(4 + len.min(MAX_FRAME_LEN), b' ');
            f
        };
        assert_eq!(
            decode_wire(&frame(MAX_FRAME_LEN + 1)).unwrap_err(),
            EnvelopeError::OversizeFrame(MAX_FRAME_LEN + 1)
        );
        // At and below the limit the length is accepted and the body is parsed.
        assert!(matches!(
            decode_wire(&frame(MAX_FRAME_LEN)).unwrap_err(),
            EnvelopeError::MalformedHeader(_)
        ));
        assert!(matches!(
            decode_wire(&frame(MAX_FRAME_LEN - 1)).unwrap_err(),
            EnvelopeError::MalformedHeader(_)
        ));
    }

    #[test]
    fn multiple_frames() {
        let (a, b) = (Party::new(), Party::new());
        let e1 = pack(&msg(), &a.keys, &a.did, &b.doc);
        let e2 = pack(&msg(), &b.keys, &b.did, &a.doc);
        let bytes = encode_frames([&e1, &e2]);
        assert_eq!(decode_frames(&bytes).unwrap(), vec![e1, e2]);
        assert!(decode_wire(&bytes).is_err());
    }
}
