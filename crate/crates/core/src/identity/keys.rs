use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey as AgreementPublic, StaticSecret};

use super::IdentityError;

pub const SEED_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// An Ed25519 signing pair and an independent X25519 key-agreement pair.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    agreement: StaticSecret,
}

impl KeyPair {
    pub fn from_secrets(signing_secret: [u8; 32], agreement_secret: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&signing_secret),
            agreement: StaticSecret::from(agreement_secret),
        }
    }

    pub fn signing_public(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn agreement_public(&self) -> [u8; 32] {
        AgreementPublic::from(&self.agreement).to_bytes()
    }

    pub fn signing_secret(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn agreement_secret(&self) -> [u8; 32] {
        self.agreement.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        self.signing.sign(message).to_bytes()
    }

    /// Static-static X25519 shared secret with a peer's agreement key.
    pub fn agree(&self, peer_agreement_public: &[u8; 32]) -> [u8; 32] {
        self.agreement
            .diffie_hellman(&AgreementPublic::from(*peer_agreement_public))
            .to_bytes()
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("signing_public", &crate::canonical::b64_encode(&self.signing_public()))
            .field("agreement_public", &crate::canonical::b64_encode(&self.agreement_public()))
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.signing_secret() == other.signing_secret()
            && self.agreement_secret() == other.agreement_secret()
    }
}

impl Eq for KeyPair {}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StoredKeyPair {
    #[serde(with = "crate::canonical::b64_array")]
    signing_secret: [u8; 32],
    #[serde(with = "crate::canonical::b64_array")]
    agreement_secret: [u8; 32],
}

impl Serialize for KeyPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StoredKeyPair {
            signing_secret: self.signing_secret(),
            agreement_secret: self.agreement_secret(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeyPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let stored = StoredKeyPair::deserialize(d)?;
        Ok(KeyPair::from_secrets(stored.signing_secret, stored.agreement_secret))
    }
}

/// Generates a key pair, deterministically when a 32-byte seed is given.
///
/// The two secrets are derived under distinct domain labels so the signing
/// and agreement keys never coincide.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair, IdentityError> {
    let seed: [u8; SEED_LEN] = match seed {
        Some(bytes) => bytes
            .try_into()
            .map_err(|_| IdentityError::MalformedSeed(bytes.len()))?,
        None => {
            let mut s = [0u8; SEED_LEN];
            OsRng.fill_bytes(&mut s);
            s
        }
    };
    Ok(KeyPair::from_secrets(
        derive_secret(b"nfid/signing", &seed),
        derive_secret(b"nfid/agreement", &seed),
    ))
}

fn derive_secret(label: &[u8], seed: &[u8; SEED_LEN]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label);
    h.update(seed);
    h.finalize().into()
}

/// Verifies an Ed25519 signature. Malformed keys or signatures verify as false.
pub fn verify_signature(public: &[u8; 32], message: &[u8], signature: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    key.verify(message, &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unhex<const N: usize>(s: &str) -> [u8; N] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = generate_keypair(Some(&[0u8; 32])).unwrap();
        let b = generate_keypair(Some(&[0u8; 32])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.signing_public(), b.signing_public());
    }

    #[test]
    fn unseeded_generation_is_random() {
        let a = generate_keypair(None).unwrap();
        let b = generate_keypair(None).unwrap();
        assert_ne!(a.signing_public(), b.signing_public());
        assert_ne!(a.agreement_public(), b.agreement_public());
    }

    #[test]
    fn seed_length_is_checked() {
        assert!(matches!(
            generate_keypair(Some(&[1u8; 31])),
            Err(IdentityError::MalformedSeed(31))
        ));
        assert!(generate_keypair(Some(&[1u8; 33])).is_err());
    }

    #[test]
    fn signing_and_agreement_secrets_differ() {
        let kp = generate_keypair(Some(&[7u8; 32])).unwrap();
        assert_ne!(kp.signing_secret(), kp.agreement_secret());
    }

    #[test]
    fn publics_derive_from_secrets() {
        let kp = generate_keypair(None).unwrap();
        let rebuilt = KeyPair::from_secrets(kp.signing_secret(), kp.agreement_secret());
        assert_eq!(rebuilt.signing_public(), kp.signing_public());
        assert_eq!(rebuilt.agreement_public(), kp.agreement_public());
    }

    // RFC 8032, section 7.1, TEST 1 and TEST 2.
    #[test]
    fn ed25519_published_vectors() {
        let vectors = [
            (
                "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
                "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
                "",
                "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
            ),
            (
                "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
                "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
                "72",
                "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
            ),
        ];
        for (secret, public, msg, sig) in vectors {
            let kp = KeyPair::from_secrets(unhex(secret), [9u8; 32]);
            assert_eq!(kp.signing_public(), unhex::<32>(public));
            let msg = hex::decode(msg).unwrap();
            let produced = kp.sign(&msg);
            assert_eq!(produced, unhex::<64>(sig));
            assert!(verify_signature(&kp.signing_public(), &msg, &produced));
        }
    }

    // RFC 7748, section 6.1.
    #[test]
    fn x25519_published_vector() {
        let alice = KeyPair::from_secrets(
            [1u8; 32],
            unhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"),
        );
        let bob = KeyPair::from_secrets(
            [2u8; 32],
            unhex("5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb"),
        );
        assert_eq!(
            alice.agreement_public(),
            unhex::<32>("8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a")
        );
        assert_eq!(
            bob.agreement_public(),
            unhex::<32>("de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f")
        );
        let shared = unhex::<32>("4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742");
        assert_eq!(alice.agree(&bob.agreement_public()), shared);
        assert_eq!(bob.agree(&alice.agreement_public()), shared);
    }

    #[test]
    fn sign_verify_roundtrip_and_tamper() {
        let kp = generate_keypair(None).unwrap();
        let sig = kp.sign(b"hello");
        assert!(verify_signature(&kp.signing_public(), b"hello", &sig));
        assert!(!verify_signature(&kp.signing_public(), b"hellp", &sig));
        assert!(!verify_signature(&kp.signing_public(), b"hello", &sig[..63]));
    }

    #[test]
    fn keypair_serde_roundtrip() {
        let kp = generate_keypair(None).unwrap();
        let json = serde_json::to_string(&kp).unwrap();
        let back: KeyPair = serde_json::from_str(&json).unwrap();
        assert_eq!(kp, back);
    }
}
