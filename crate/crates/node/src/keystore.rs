//! On-disk key material and registry bootstrap for long-running nodes.

use std::path::Path;

use nfid_core::identity::{
    create_registry_did, generate_keypair, self_sign, update_endpoint, Did, DidDocument, IdentityError, KeyPair,
};
use nfid_core::vdr::{VdrClient, VdrError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum KeyStoreError {
    #[error("key store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("key store is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Identity(#[from] IdentityError),
}

#[derive(Debug, thiserror::Error)]
pub enum RegistrationError {
    #[error("registry: {0}")]
    Registry(#[from] VdrError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("registered document of {0} does not carry the stored signing key")]
    KeyMismatch(Did),
    #[error("{0} is not registered and its identifier does not match the stored key")]
    Unregistrable(Did),
}

/// The DID a node controls and its current keys. After a rotation the DID
/// keeps the fingerprint of the first key while `keys` move on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredKeys {
    pub did: Did,
    pub keys: KeyPair,
}

impl StoredKeys {
    pub fn generate() -> Result<Self, KeyStoreError> {
        Ok(Self::from_keys(generate_keypair(None)?))
    }

    pub fn from_keys(keys: KeyPair) -> Self {
        Self {
            did: Did::registry(&keys.signing_public()),
            keys,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeyStoreError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Loads the store, creating it with fresh keys if the file is missing.
    pub fn load_or_generate(path: impl AsRef<Path>) -> Result<Self, KeyStoreError> {
        let path = path.as_ref();
        match std::fs::read(path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let stored = Self::generate()?;
                stored.save(path)?;
                Ok(stored)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KeyStoreError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Makes sure the registry holds `stored.did` with the current key and `endpoint`.
pub async fn ensure_registered(
    vdr: &dyn VdrClient,
    stored: &StoredKeys,
    endpoint: Option<&str>,
) -> Result<DidDocument, RegistrationError> {
    match vdr.resolve_did(&stored.did).await {
        Ok((doc, _)) => {
            if doc.signing_key != stored.keys.signing_public() {
                return Err(RegistrationError::KeyMismatch(stored.did.clone()));
            }
            if doc.service_endpoint.as_deref() == endpoint {
                return Ok(doc);
            }
            let update = update_endpoint(&doc, endpoint, &stored.keys)?;
            vdr.update(update.clone()).await?;
            Ok(update.document)
        }
        Err(VdrError::UnknownDid(_)) => {
            let (did, doc) = create_registry_did(&stored.keys, endpoint);
            if did != stored.did {
                return Err(RegistrationError::Unregistrable(stored.did.clone()));
            }
            vdr.register(doc.clone(), self_sign(&doc, &stored.keys)).await?;
            Ok(doc)
        }
        Err(e) => Err(e.into()),
    }
}
