use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crate::clock::Timestamp;
use crate::credentials::{claims_target_producer, CredentialKind, VerifiableCredential};

#[derive(Debug, thiserror::Error)]
pub enum WalletError {
    #[error("wallet io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wallet file is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
}

/// Credentials held by one subject. `generation` changes whenever the contents change.
#[derive(Debug, Default)]
pub struct Wallet {
    credentials: Vec<VerifiableCredential>,
    generation: u64,
    path: Option<PathBuf>,
}

impl Wallet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a file-backed wallet; a missing file is an empty wallet.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, WalletError> {
        let path = path.as_ref().to_path_buf();
        let credentials = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            credentials,
            generation: 0,
            path: Some(path),
        })
    }

    fn persist(&self) -> Result<(), WalletError> {
        if let Some(path) = &self.path {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec_pretty(&self.credentials)?)?;
            std::fs::rename(tmp, path)?;
        }
        Ok(())
    }

    pub fn add(&mut self, vc: VerifiableCredential) -> Result<(), WalletError> {
        self.credentials.retain(|c| c.credential_id != vc.credential_id);
        self.credentials.push(vc);
        self.generation += 1;
        self.persist()
    }

    pub fn remove(&mut self, credential_id: &str) -> Result<bool, WalletError> {
        let before = self.credentials.len();
        self.credentials.retain(|c| c.credential_id != credential_id);
        let removed = self.credentials.len() != before;
        if removed {
            self.generation += 1;
            self.persist()?;
        }
        Ok(removed)
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn all(&self) -> &[VerifiableCredential] {
        &self.credentials
    }

    fn usable(vc: &VerifiableCredential, now: Timestamp) -> bool {
        vc.expires_at.is_none_or(|e| e > now)
    }

    /// The most recently issued unexpired AuthN credential.
    pub fn authn(&self, now: Timestamp) -> Option<&VerifiableCredential> {
        self.credentials
            .iter()
            .filter(|c| c.kind == CredentialKind::AuthN && Self::usable(c, now))
            .max_by_key(|c| c.issued_at)
    }

    /// Unexpired AuthZ credentials naming `producer` (or any producer).
    pub fn authz_for(&self, producer: &str, now: Timestamp) -> Vec<&VerifiableCredential> {
        self.credentials
            .iter()
            .filter(|c| {
                c.kind == CredentialKind::AuthZ
                    && Self::usable(c, now)
                    && claims_target_producer(&c.claims, producer)
            })
            .collect()
    }

    /// Credentials to answer a request for `kinds`; AuthZ is narrowed to `producer` if given.
    pub fn select(&self, kinds: &[CredentialKind], producer: Option<&str>, now: Timestamp) -> Vec<VerifiableCredential> {
        let mut out = Vec::new();
        if kinds.contains(&CredentialKind::AuthN) {
            out.extend(self.authn(now).cloned());
        }
        if kinds.contains(&CredentialKind::AuthZ) {
            match producer {
                Some(p) => out.extend(self.authz_for(p, now).into_iter().cloned()),
                None => out.extend(
                    self.credentials
                        .iter()
                        .filter(|c| c.kind == CredentialKind::AuthZ && Self::usable(c, now))
                        .cloned(),
                ),
            }
        }
        out
    }
}

pub type SharedWallet = Arc<RwLock<Wallet>>;

pub fn shared(wallet: Wallet) -> SharedWallet {
    Arc::new(RwLock::new(wallet))
}
