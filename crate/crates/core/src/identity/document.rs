use serde::{Deserialize, Serialize};

use super::{verify_signature, Did, IdentityError, KeyPair};
use crate::canonical::{canonical_hash, to_canonical_bytes};

/// Verification material and service endpoint bound to a DID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DidDocument {
    pub id: Did,
    pub version: u64,
    #[serde(with = "crate::canonical::b64_array")]
    pub signing_key: [u8; 32],
    #[serde(with = "crate::canonical::b64_array")]
    pub agreement_key: [u8; 32],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_endpoint: Option<String>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "crate::canonical::b64_array_opt"
    )]
    pub prev_version_hash: Option<[u8; 32]>,
}

impl DidDocument {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("documents always serialize")
    }

    pub fn hash(&self) -> [u8; 32] {
        canonical_hash(self).expect("documents always serialize")
    }

    /// Checks the structural rules that do not need any signature.
    pub fn validate(&self) -> Result<(), IdentityError> {
        if self.version == 0 {
            return Err(IdentityError::InvalidDocument("version must be >= 1".into()));
        }
        if (self.version == 1) != self.prev_version_hash.is_none() {
            return Err(IdentityError::InvalidDocument(
                "only version 1 may omit prevVersionHash".into(),
            ));
        }
        if self.id.is_peer() {
            if self.version != 1 {
                return Err(IdentityError::InvalidDocument("peer documents are immutable".into()));
            }
            if self.id.peer_keys() != Some((self.signing_key, self.agreement_key)) {
                return Err(IdentityError::InvalidDocument(
                    "peer document keys do not match the identifier".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A new document version signed by the signing key of the version it replaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignedDocumentUpdate {
    pub document: DidDocument,
    #[serde(with = "crate::canonical::b64")]
    pub signature: Vec<u8>,
}

pub fn create_peer_did(kp: &KeyPair) -> (Did, DidDocument) {
    let did = Did::peer(&kp.signing_public(), &kp.agreement_public());
    let doc = DidDocument {
        id: did.clone(),
        version: 1,
        signing_key: kp.signing_public(),
        agreement_key: kp.agreement_public(),
        service_endpoint: None,
        prev_version_hash: None,
    };
    (did, doc)
}

/// Rebuilds a peer DID's document from the identifier alone.
pub fn extract_document(did: &str) -> Result<DidDocument, IdentityError> {
    let did: Did = did.parse()?;
    let (signing_key, agreement_key) = did
        .peer_keys()
        .ok_or_else(|| IdentityError::NotSelfContained(did.to_string()))?;
    Ok(DidDocument {
        id: did,
        version: 1,
        signing_key,
        agreement_key,
        service_endpoint: None,
        prev_version_hash: None,
    })
}

/// Builds the initial (unregistered) document of a registry-anchored DID.
pub fn create_registry_did(kp: &KeyPair, endpoint: Option<&str>) -> (Did, DidDocument) {
    let did = Did::registry(&kp.signing_public());
    let doc = DidDocument {
        id: did.clone(),
        version: 1,
        signing_key: kp.signing_public(),
        agreement_key: kp.agreement_public(),
        service_endpoint: endpoint.map(str::to_string),
        prev_version_hash: None,
    };
    (did, doc)
}

/// Self-signature over the canonical document, as required for registration.
pub fn self_sign(doc: &DidDocument, kp: &KeyPair) -> Vec<u8> {
    kp.sign(&doc.canonical_bytes()).to_vec()
}

/// Produces the next version of `current` carrying `new_keys`, signed by the current key.
pub fn rotate_document(
    current: &DidDocument,
    new_keys: &KeyPair,
    current_keys: &KeyPair,
) -> Result<SignedDocumentUpdate, IdentityError> {
    if current.id.is_peer() {
        return Err(IdentityError::PeerRotation);
    }
    if current_keys.signing_public() != current.signing_key {
        return Err(IdentityError::SignerMismatch);
    }
    let document = DidDocument {
        id: current.id.clone(),
        version: current.version + 1,
        signing_key: new_keys.signing_public(),
        agreement_key: new_keys.agreement_public(),
        service_endpoint: current.service_endpoint.clone(),
        prev_version_hash: Some(current.hash()),
    };
    let signature = current_keys.sign(&document.canonical_bytes()).to_vec();
    Ok(SignedDocumentUpdate {
        document,
        signature,
    })
}

/// Produces the next version of `current` with a new service endpoint and unchanged keys.
pub fn update_endpoint(
    current: &DidDocument,
    endpoint: Option<&str>,
    keys: &KeyPair,
) -> Result<SignedDocumentUpdate, IdentityError> {
    let mut update = rotate_document(current, keys, keys)?;
    update.document.service_endpoint = endpoint.map(str::to_string);
    update.signature = keys.sign(&update.document.canonical_bytes()).to_vec();
    Ok(update)
}

/// Checks that `next` is a valid successor of `prev`.
pub fn verify_update(prev: &DidDocument, next: &SignedDocumentUpdate) -> Result<(), IdentityError> {
    let doc = &next.document;
    if doc.id != prev.id {
        return Err(IdentityError::ChainBroken("document id changed".into()));
    }
    if doc.version != prev.version + 1 {
        return Err(IdentityError::ChainBroken(format!(
            "version {} does not follow {}",
            doc.version, prev.version
        )));
    }
    if doc.prev_version_hash != Some(prev.hash()) {
        return Err(IdentityError::ChainBroken("previous-version hash mismatch".into()));
    }
    if !verify_signature(&prev.signing_key, &doc.canonical_bytes(), &next.signature) {
        return Err(IdentityError::ChainBroken(
            "update not signed by the previous signing key".into(),
        ));
    }
    Ok(())
}

/// Verifies a full version history: v1 self-signed, every later link signed by its predecessor.
pub fn verify_document_chain(versions: &[SignedDocumentUpdate]) -> Result<(), IdentityError> {
    let first = versions
        .first()
        .ok_or_else(|| IdentityError::ChainBroken("empty history".into()))?;
    first.document.validate()?;
    if first.document.version != 1
        || !verify_signature(
            &first.document.signing_key,
            &first.document.canonical_bytes(),
            &first.signature,
        )
    {
        return Err(IdentityError::ChainBroken("first version is not a self-signed v1".into()));
    }
    if first.document.id != Did::registry(&first.document.signing_key) && !first.document.id.is_peer() {
        return Err(IdentityError::ChainBroken("identifier does not fingerprint the initial key".into()));
    }
    for pair in versions.windows(2) {
        verify_update(&pair[0].document, &pair[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::generate_keypair;

    fn kp(n: u8) -> KeyPair {
        generate_keypair(Some(&[n; 32])).unwrap()
    }

    #[test]
    fn peer_did_is_stable_and_self_extracting() {
        let (did1, doc1) = create_peer_did(&kp(1));
        let (did2, _) = create_peer_did(&kp(1));
        assert_eq!(did1, did2);
        let extracted = extract_document(&did1.to_string()).unwrap();
        assert_eq!(extracted, doc1);
        assert_eq!(extracted.canonical_bytes(), doc1.canonical_bytes());
    }

    #[test]
    fn registry_did_fingerprints_signing_key_only() {
        let a = kp(1);
        let b = KeyPair::from_secrets(a.signing_secret(), [42u8; 32]);
        let (did_a, doc_a) = create_registry_did(&a, Some("http://x"));
        let (did_b, doc_b) = create_registry_did(&b, Some("http://x"));
        assert_eq!(did_a, did_b);
        assert_ne!(doc_a, doc_b);
        assert_eq!(doc_a.version, 1);
        assert!(doc_a.prev_version_hash.is_none());
        assert_eq!(create_registry_did(&a, Some("http://x")).0, did_a);
    }

    #[test]
    fn extract_rejects_registry_dids() {
        let (did, _) = create_registry_did(&kp(1), None);
        assert!(matches!(
            extract_document(&did.to_string()),
            Err(IdentityError::NotSelfContained(_))
        ));
        assert!(matches!(extract_document("nope"), Err(IdentityError::MalformedDid(_))));
    }

    #[test]
    fn rotation_increments_and_is_signed_by_old_key() {
        let old = kp(1);
        let new = kp(2);
        let (_, v1) = create_registry_did(&old, None);
        let up = rotate_document(&v1, &new, &old).unwrap();
        assert_eq!(up.document.version, 2);
        assert_eq!(up.document.prev_version_hash, Some(v1.hash()));
        let bytes = up.document.canonical_bytes();
        assert!(verify_signature(&old.signing_public(), &bytes, &up.signature));
        assert!(!verify_signature(&new.signing_public(), &bytes, &up.signature));
    }

    #[test]
    fn peer_rotation_is_refused() {
        let (_, doc) = create_peer_did(&kp(1));
        assert!(matches!(
            rotate_document(&doc, &kp(2), &kp(1)),
            Err(IdentityError::PeerRotation)
        ));
    }

    #[test]
    fn rotation_with_wrong_signer_is_refused() {
        let (_, v1) = create_registry_did(&kp(1), None);
        assert!(matches!(
            rotate_document(&v1, &kp(2), &kp(3)),
            Err(IdentityError::SignerMismatch)
        ));
    }

    fn three_version_chain() -> Vec<SignedDocumentUpdate> {
        let keys = [kp(1), kp(2), kp(3)];
        let (_, v1) = create_registry_did(&keys[0], Some("http://nf"));
        let first = SignedDocumentUpdate {
            signature: self_sign(&v1, &keys[0]),
            document: v1,
        };
        let second = rotate_document(&first.document, &keys[1], &keys[0]).unwrap();
        let third = rotate_document(&second.document, &keys[2], &keys[1]).unwrap();
        vec![first, second, third]
    }

    #[test]
    fn chained_rotations_verify_end_to_end() {
        let chain = three_version_chain();
        verify_document_chain(&chain).unwrap();
        for (i, link) in chain.iter().enumerate() {
            assert_eq!(link.document.version, i as u64 + 1);
        }
    }

    #[test]
    fn any_flipped_byte_breaks_the_chain() {
        let chain = three_version_chain();
        for idx in 0..chain.len() {
            let doc_bytes = chain[idx].document.canonical_bytes();
            for pos in (0..doc_bytes.len()).step_by(7) {
                let mut bytes = doc_bytes.clone();
                bytes[pos] ^= 0x01;
                let Ok(doc) = serde_json::from_slice::<DidDocument>(&bytes) else {
                    continue;
                };
                let mut tampered = chain.clone();
                tampered[idx].document = doc;
                assert!(verify_document_chain(&tampered).is_err(), "doc {idx} byte {pos}");
            }
            for pos in 0..chain[idx].signature.len() {
                let mut tampered = chain.clone();
                tampered[idx].signature[pos] ^= 0x80;
                assert!(verify_document_chain(&tampered).is_err(), "sig {idx} byte {pos}");
            }
        }
    }

    #[test]
    fn validate_structural_rules() {
        let (_, mut doc) = create_registry_did(&kp(1), None);
        doc.validate().unwrap();
        doc.version = 0;
        assert!(doc.validate().is_err());
        doc.version = 2;
        assert!(doc.validate().is_err());
        let (_, mut peer) = create_peer_did(&kp(1));
        peer.agreement_key = [0u8; 32];
        assert!(peer.validate().is_err());
    }
}
