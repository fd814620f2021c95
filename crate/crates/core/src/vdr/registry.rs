use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{CreateRevocationRegistry, RevocationStatus, RevokeRequest, VdrError};
use crate::clock::{system_clock, SharedClock, Timestamp};
use crate::identity::{
    extract_document, verify_signature, verify_update, Did, DidDocument, IdentityError,
    SignedDocumentUpdate,
};

/// Version history of one registry DID. `versions[0]` is the self-signed v1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub did: Did,
    pub versions: Vec<SignedDocumentUpdate>,
}

impl RegistryRecord {
    pub fn latest(&self) -> &DidDocument {
        &self.versions.last().expect("records are never empty").document
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevocationRegistry {
    pub registry_id: String,
    pub issuer: Did,
    pub revoked: BTreeSet<String>,
    pub updated_at: Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogEntry {
    Register {
        document: DidDocument,
        #[serde(with = "crate::canonical::b64")]
        signature: Vec<u8>,
    },
    Update {
        update: SignedDocumentUpdate,
    },
    CreateRevocationRegistry {
        request: CreateRevocationRegistry,
        #[serde(with = "crate::canonical::b64")]
        signature: Vec<u8>,
        at: Timestamp,
    },
    Revoke {
        request: RevokeRequest,
        #[serde(with = "crate::canonical::b64")]
        signature: Vec<u8>,
        at: Timestamp,
    },
}

#[derive(Debug, Default)]
struct State {
    records: HashMap<Did, RegistryRecord>,
    revocations: HashMap<String, RevocationRegistry>,
}

/// In-process registry. Reads take a shared lock; writes are serialized.
#[derive(Debug)]
pub struct Registry {
    state: RwLock<State>,
    log: Option<Mutex<File>>,
    log_path: Option<PathBuf>,
    clock: SharedClock,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Self::with_clock(system_clock())
    }

    pub fn with_clock(clock: SharedClock) -> Self {
        Self {
            state: RwLock::new(State::default()),
            log: None,
            log_path: None,
            clock,
        }
    }

    /// Opens (or creates) a log-backed registry, replaying and re-verifying every entry.
    pub fn open(path: impl AsRef<Path>, clock: SharedClock) -> Result<Self, VdrError> {
        let path = path.as_ref();
        let mut state = State::default();
        if path.exists() {
            let file = File::open(path).map_err(persist)?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(persist)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(&line)
                    .map_err(|e| VdrError::Persistence(format!("line {}: {e}", lineno + 1)))?;
                apply(&mut state, &entry).map_err(|e| {
                    VdrError::Persistence(format!("line {} failed verification: {e}", lineno + 1))
                })?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(persist)?;
        Ok(Self {
            state: RwLock::new(state),
            log: Some(Mutex::new(file)),
            log_path: Some(path.to_path_buf()),
            clock,
        })
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    fn commit(&self, entry: LogEntry) -> Result<(), VdrError> {
        let mut state = self.state.write().expect("registry lock poisoned");
        if !apply(&mut state, &entry)? {
            return Ok(());
        }
        if let Some(log) = &self.log {
            let mut file = log.lock().expect("log lock poisoned");
            let mut line = serde_json::to_vec(&entry).map_err(persist)?;
            line.push(b'\n');
            if let Err(e) = file.write_all(&line).and_then(|_| file.sync_data()) {
                // Keep memory and disk consistent: undo the in-memory apply.
                revert(&mut state, &entry);
                return Err(persist(e));
            }
        }
        Ok(())
    }

    pub fn register(&self, document: DidDocument, signature: Vec<u8>) -> Result<(), VdrError> {
        self.commit(LogEntry::Register {
            document,
            signature,
        })
    }

    pub fn update(&self, update: SignedDocumentUpdate) -> Result<(), VdrError> {
        self.commit(LogEntry::Update { update })
    }

    pub fn resolve_did(&self, did: &Did) -> Result<(DidDocument, u64), VdrError> {
        let state = self.state.read().expect("registry lock poisoned");
        let record = state
            .records
            .get(did)
            .ok_or_else(|| VdrError::UnknownDid(did.to_string()))?;
        let doc = record.latest().clone();
        let version = doc.version;
        Ok((doc, version))
    }

    pub fn history(&self, did: &Did) -> Result<Vec<SignedDocumentUpdate>, VdrError> {
        let state = self.state.read().expect("registry lock poisoned");
        state
            .records
            .get(did)
            .map(|r| r.versions.clone())
            .ok_or_else(|| VdrError::UnknownDid(did.to_string()))
    }

    pub fn create_revocation_registry(
        &self,
        request: CreateRevocationRegistry,
        signature: Vec<u8>,
    ) -> Result<String, VdrError> {
        let id = request.registry_id();
        self.commit(LogEntry::CreateRevocationRegistry {
            request,
            signature,
            at: self.clock.now(),
        })?;
        Ok(id)
    }

    pub fn revoke(&self, request: RevokeRequest, signature: Vec<u8>) -> Result<(), VdrError> {
        self.commit(LogEntry::Revoke {
            request,
            signature,
            at: self.clock.now(),
        })
    }

    pub fn check_status(
        &self,
        registry_id: &str,
        credential_id: &str,
    ) -> Result<RevocationStatus, VdrError> {
        let state = self.state.read().expect("registry lock poisoned");
        let reg = state
            .revocations
            .get(registry_id)
            .ok_or_else(|| VdrError::UnknownRegistry(registry_id.to_string()))?;
        Ok(if reg.revoked.contains(credential_id) {
            RevocationStatus::Revoked
        } else {
            RevocationStatus::Active
        })
    }

    pub fn revocation_registry(&self, registry_id: &str) -> Result<RevocationRegistry, VdrError> {
        let state = self.state.read().expect("registry lock poisoned");
        state
            .revocations
            .get(registry_id)
            .cloned()
            .ok_or_else(|| VdrError::UnknownRegistry(registry_id.to_string()))
    }

    pub fn record_count(&self) -> usize {
        self.state.read().expect("registry lock poisoned").records.len()
    }
}

fn persist(e: impl std::fmt::Display) -> VdrError {
    VdrError::Persistence(e.to_string())
}

fn current_signing_key(state: &State, did: &Did) -> Result<[u8; 32], VdrError> {
    if did.is_peer() {
        return extract_document(&did.to_string())
            .map(|d| d.signing_key)
            .map_err(|_| VdrError::UnknownDid(did.to_string()));
    }
    state
        .records
        .get(did)
        .map(|r| r.latest().signing_key)
        .ok_or_else(|| VdrError::UnknownDid(did.to_string()))
}

/// Verifies and applies one entry; returns whether the state changed.
fn apply(state: &mut State, entry: &LogEntry) -> Result<bool, VdrError> {
    match entry {
        LogEntry::Register {
            document,
            signature,
        } => {
            if document.version != 1 {
                return Err(VdrError::InvalidVersion(document.version));
            }
            if document.id.is_peer() {
                return Err(VdrError::InvalidDocument(
                    "peer DIDs are not registry-anchored".into(),
                ));
            }
            document
                .validate()
                .map_err(|e| VdrError::InvalidDocument(e.to_string()))?;
            if document.id != Did::registry(&document.signing_key) {
                return Err(VdrError::InvalidDocument(
                    "identifier is not the fingerprint of the signing key".into(),
                ));
            }
            if state.records.contains_key(&document.id) {
                return Err(VdrError::AlreadyRegistered(document.id.to_string()));
            }
            if !verify_signature(&document.signing_key, &document.canonical_bytes(), signature) {
                return Err(VdrError::BadSignature);
            }
            state.records.insert(
                document.id.clone(),
                RegistryRecord {
                    did: document.id.clone(),
                    versions: vec![SignedDocumentUpdate {
                        document: document.clone(),
                        signature: signature.clone(),
                    }],
                },
            );
        }
        LogEntry::Update { update } => {
            let doc = &update.document;
            let record = state
                .records
                .get_mut(&doc.id)
                .ok_or_else(|| VdrError::UnknownDid(doc.id.to_string()))?;
            let latest = record.latest();
            if doc.version != latest.version + 1 {
                return Err(VdrError::VersionGap {
                    expected: latest.version + 1,
                    got: doc.version,
                });
            }
            if doc.prev_version_hash != Some(latest.hash()) {
                return Err(VdrError::HashMismatch);
            }
            verify_update(latest, update).map_err(|e| match e {
                IdentityError::ChainBroken(_) => VdrError::BadSignature,
                other => VdrError::InvalidDocument(other.to_string()),
            })?;
            record.versions.push(update.clone());
        }
        LogEntry::CreateRevocationRegistry {
            request,
            signature,
            at,
        } => {
            let key = current_signing_key(state, &request.issuer)?;
            if !verify_signature(&key, &request.signing_bytes(), signature) {
                return Err(VdrError::BadSignature);
            }
            let id = request.registry_id();
            if state.revocations.contains_key(&id) {
                return Err(VdrError::RegistryExists(id));
            }
            state.revocations.insert(
                id.clone(),
                RevocationRegistry {
                    registry_id: id,
                    issuer: request.issuer.clone(),
                    revoked: BTreeSet::new(),
                    updated_at: *at,
                },
            );
        }
        LogEntry::Revoke {
            request,
            signature,
            at,
        } => {
            let issuer = state
                .revocations
                .get(&request.registry_id)
                .ok_or_else(|| VdrError::UnknownRegistry(request.registry_id.clone()))?
                .issuer
                .clone();
            let key = current_signing_key(state, &issuer)?;
            if !verify_signature(&key, &request.signing_bytes(), signature) {
                return Err(VdrError::NotIssuer);
            }
            let reg = state
                .revocations
                .get_mut(&request.registry_id)
                .expect("checked above");
            if !reg.revoked.insert(request.credential_id.clone()) {
                return Ok(false);
            }
            reg.updated_at = *at;
        }
    }
    Ok(true)
}

// Undoes an entry whose `apply` just changed the state but failed to persist.
fn revert(state: &mut State, entry: &LogEntry) {
    match entry {
        LogEntry::Register { document, .. } => {
            state.records.remove(&document.id);
        }
        LogEntry::Update { update } => {
            if let Some(r) = state.records.get_mut(&update.document.id) {
                r.versions.pop();
            }
        }
        LogEntry::CreateRevocationRegistry { request, .. } => {
            state.revocations.remove(&request.registry_id());
        }
        LogEntry::Revoke { request, .. } => {
            if let Some(r) = state.revocations.get_mut(&request.registry_id) {
                r.revoked.remove(&request.credential_id);
            }
        }
    }
}
