use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::IdentityError;
use crate::canonical::sha256;

pub const PEER_PREFIX: &str = "did:speer:";
pub const REGISTRY_PREFIX: &str = "did:svdr:";

const PEER_VERSION_BYTE: u8 = 0x01;
const PEER_PAYLOAD_LEN: usize = 1 + 32 + 32;
const FINGERPRINT_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DidMethod {
    /// Self-contained; the document is encoded in the identifier.
    Peer,
    /// Anchored in the registry; the identifier fingerprints the initial signing key.
    Registry,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    method: DidMethod,
    identifier: String,
}

impl Did {
    pub fn peer(signing_public: &[u8; 32], agreement_public: &[u8; 32]) -> Self {
        let mut payload = Vec::with_capacity(PEER_PAYLOAD_LEN);
        payload.push(PEER_VERSION_BYTE);
        payload.extend_from_slice(signing_public);
        payload.extend_from_slice(agreement_public);
        Did {
            method: DidMethod::Peer,
            identifier: bs58::encode(payload).into_string(),
        }
    }

    pub fn registry(signing_public: &[u8; 32]) -> Self {
        let digest = sha256(signing_public);
        Did {
            method: DidMethod::Registry,
            identifier: bs58::encode(&digest[..FINGERPRINT_LEN]).into_string(),
        }
    }

    pub fn method(&self) -> DidMethod {
        self.method
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    pub fn is_peer(&self) -> bool {
        self.method == DidMethod::Peer
    }

    /// Signing and agreement keys embedded in a peer DID.
    pub fn peer_keys(&self) -> Option<([u8; 32], [u8; 32])> {
        if self.method != DidMethod::Peer {
            return None;
        }
        let raw = bs58::decode(&self.identifier).into_vec().ok()?;
        if raw.len() != PEER_PAYLOAD_LEN || raw[0] != PEER_VERSION_BYTE {
            return None;
        }
        let signing = raw[1..33].try_into().ok()?;
        let agreement = raw[33..65].try_into().ok()?;
        Some((signing, agreement))
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.method {
            DidMethod::Peer => PEER_PREFIX,
            DidMethod::Registry => REGISTRY_PREFIX,
        };
        write!(f, "{prefix}{}", self.identifier)
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || IdentityError::MalformedDid(s.to_string());
        let (method, identifier) = if let Some(id) = s.strip_prefix(PEER_PREFIX) {
            (DidMethod::Peer, id)
        } else if let Some(id) = s.strip_prefix(REGISTRY_PREFIX) {
            (DidMethod::Registry, id)
        } else {
            return Err(malformed());
        };
        let raw = bs58::decode(identifier).into_vec().map_err(|_| malformed())?;
        // Reject non-canonical base58 (e.g. extra leading '1's that decode identically).
        if bs58::encode(&raw).into_string() != identifier {
            return Err(malformed());
        }
        match method {
            DidMethod::Peer if raw.len() != PEER_PAYLOAD_LEN || raw[0] != PEER_VERSION_BYTE => {
                return Err(malformed())
            }
            DidMethod::Registry if raw.len() != FINGERPRINT_LEN => return Err(malformed()),
            _ => {}
        }
        Ok(Did {
            method,
            identifier: identifier.to_string(),
        })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_forms() {
        let peer = Did::peer(&[1u8; 32], &[2u8; 32]);
        assert!(peer.to_string().starts_with("did:speer:"));
        let reg = Did::registry(&[1u8; 32]);
        assert!(reg.to_string().starts_with("did:svdr:"));
        assert_eq!(peer.to_string().parse::<Did>().unwrap(), peer);
        assert_eq!(reg.to_string().parse::<Did>().unwrap(), reg);
    }

    #[test]
    fn peer_keys_are_recoverable() {
        let peer = Did::peer(&[3u8; 32], &[4u8; 32]);
        assert_eq!(peer.peer_keys(), Some(([3u8; 32], [4u8; 32])));
        assert_eq!(Did::registry(&[3u8; 32]).peer_keys(), None);
    }

    #[test]
    fn malformed_strings_are_rejected() {
        for bad in [
            "",
            "did:web:example.com",
            "did:svdr:",
            "did:svdr:0OIl",
            "did:speer:abc",
            "did:svdr:11111111111111111111111111",
        ] {
            assert!(bad.parse::<Did>().is_err(), "{bad}");
        }
        let reg = Did::registry(&[5u8; 32]).to_string();
        assert!(format!("{reg}1").parse::<Did>().is_err());
    }
}
