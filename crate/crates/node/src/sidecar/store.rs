//! Association state, persisted as a JSON-lines event log.
//!
//! Each line is an upsert or a removal. Opening the store replays the log and
//! rewrites it compacted; a log that fails to parse is set aside and the store
//! starts empty.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use nfid_core::clock::Timestamp;
use nfid_core::identity::{Did, DidDocument};
use nfid_core::protocols::HandshakeSession;
use serde::{Deserialize, Serialize};

/// Which side of the handshake this sidecar played.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationRole {
    /// We are the consumer and call the peer.
    Outbound,
    /// The peer is the consumer and calls us.
    Inbound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerDocument {
    pub document: DidDocument,
    pub fetched_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Association {
    pub peer: Did,
    pub role: AssociationRole,
    /// Terminal handshake session; inbound sessions carry the consumer's verified AuthZ claims.
    pub session: HandshakeSession,
    /// Outbound only: the peer document envelopes are packed for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer_document: Option<PeerDocument>,
    /// Set when the last refresh could not reach the registry.
    #[serde(default)]
    pub degraded: bool,
    /// Outbound only: digest of the wallet contents presented in the handshake.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wallet_digest: Option<String>,
    pub created_at: Timestamp,
}

impl Association {
    pub fn is_established(&self) -> bool {
        self.session.is_established()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum StoreEvent {
    Upsert { association: Box<Association> },
    Remove { role: AssociationRole, peer: Did },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("association store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("association does not serialize: {0}")]
    Encode(#[from] serde_json::Error),
}

type Key = (AssociationRole, Did);

#[derive(Debug)]
pub struct AssociationStore {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<Key, Association>>,
    file: Mutex<Option<File>>,
    recovered: bool,
}

fn replay(bytes: &[u8]) -> Result<HashMap<Key, Association>, serde_json::Error> {
    let mut entries = HashMap::new();
    for line in bytes.split(|b| *b == b'\n').filter(|l| !l.iter().all(u8::is_ascii_whitespace)) {
        match serde_json::from_slice(line)? {
            StoreEvent::Upsert { association } => {
                entries.insert((association.role, association.peer.clone()), *association);
            }
            StoreEvent::Remove { role, peer } => {
                entries.remove(&(role, peer));
            }
        }
    }
    Ok(entries)
}

impl AssociationStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
            file: Mutex::new(None),
            recovered: false,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let (entries, recovered) = match std::fs::read(&path) {
            Ok(bytes) => match replay(&bytes) {
                Ok(entries) => (entries, false),
                Err(e) => {
                    let aside = path.with_extension("corrupt");
                    tracing::warn!(path = %path.display(), error = %e, moved_to = %aside.display(),
                        "association store is corrupt; starting empty");
                    std::fs::rename(&path, &aside)?;
                    (HashMap::new(), true)
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (HashMap::new(), false),
            Err(e) => return Err(e.into()),
        };
        let tmp = path.with_extension("tmp");
        {
            let mut out = File::create(&tmp)?;
            for association in entries.values() {
                let event = StoreEvent::Upsert {
                    association: Box::new(association.clone()),
                };
                serde_json::to_writer(&mut out, &event)?;
                out.write_all(b"\n")?;
            }
            out.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            entries: Mutex::new(entries),
            file: Mutex::new(Some(file)),
            recovered,
        })
    }

    /// True if the on-disk log was unreadable and the store started empty.
    pub fn recovered_from_corruption(&self) -> bool {
        self.recovered
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn append(&self, event: &StoreEvent) -> Result<(), StoreError> {
        let mut file = self.file.lock().expect("store file lock poisoned");
        if let Some(f) = file.as_mut() {
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }

    pub fn get(&self, role: AssociationRole, peer: &Did) -> Option<Association> {
        self.entries
            .lock()
            .expect("store lock poisoned")
            .get(&(role, peer.clone()))
            .cloned()
    }

    pub fn upsert(&self, association: Association) -> Result<(), StoreError> {
        let event = StoreEvent::Upsert {
            association: Box::new(association.clone()),
        };
        let mut entries = self.entries.lock().expect("store lock poisoned");
        self.append(&event)?;
        entries.insert((association.role, association.peer.clone()), association);
        Ok(())
    }

    pub fn remove(&self, role: AssociationRole, peer: &Did) -> Result<bool, StoreError> {
        let mut entries = self.entries.lock().expect("store lock poisoned");
        if !entries.contains_key(&(role, peer.clone())) {
            return Ok(false);
        }
        self.append(&StoreEvent::Remove {
            role,
            peer: peer.clone(),
        })?;
        entries.remove(&(role, peer.clone()));
        Ok(true)
    }

    /// Forgets every association, as if the sidecar had lost its state.
    pub fn clear(&self) -> Result<(), StoreError> {
        let keys: Vec<Key> = self.entries.lock().expect("store lock poisoned").keys().cloned().collect();
        for (role, peer) in keys {
            self.remove(role, &peer)?;
        }
        Ok(())
    }

    pub fn all(&self) -> Vec<Association> {
        self.entries.lock().expect("store lock poisoned").values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfid_core::identity::{create_registry_did, generate_keypair};
    use nfid_core::protocols::{Direction, HandshakePhase};

    fn association(seed: u8, role: AssociationRole) -> Association {
        let kp = generate_keypair(Some(&[seed; 32])).unwrap();
        let (did, doc) = create_registry_did(&kp, Some("http://peer"));
        let mut session = HandshakeSession::new(did.clone(), Direction::Initiator);
        for p in [
            HandshakePhase::Identifying,
            HandshakePhase::Identified,
            HandshakePhase::Authorizing,
            HandshakePhase::Established,
        ] {
            session.advance(p).unwrap();
        }
        Association {
            peer: did,
            role,
            session,
            peer_document: Some(PeerDocument {
                document: doc,
                fetched_at: Timestamp(5),
            }),
            degraded: false,
            wallet_digest: Some("d".into()),
            created_at: Timestamp(1),
        }
    }

    #[test]
    fn replay_restores_the_latest_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assoc.jsonl");
        let a = association(1, AssociationRole::Outbound);
        let b = association(2, AssociationRole::Inbound);
        {
            let store = AssociationStore::open(&path).unwrap();
            store.upsert(a.clone()).unwrap();
            store.upsert(b.clone()).unwrap();
            let mut a2 = a.clone();
            a2.degraded = true;
            store.upsert(a2).unwrap();
            assert!(store.remove(AssociationRole::Inbound, &b.peer).unwrap());
            assert!(!store.remove(AssociationRole::Inbound, &b.peer).unwrap());
        }
        let store = AssociationStore::open(&path).unwrap();
        assert!(!store.recovered_from_corruption());
        assert_eq!(store.len(), 1);
        let got = store.get(AssociationRole::Outbound, &a.peer).unwrap();
        assert!(got.degraded);
        assert!(got.is_established());
        // Compaction leaves one line per live association.
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn roles_are_separate_keys() {
        let store = AssociationStore::in_memory();
        let out = association(3, AssociationRole::Outbound);
        let mut inb = out.clone();
        inb.role = AssociationRole::Inbound;
        store.upsert(out.clone()).unwrap();
        store.upsert(inb).unwrap();
        assert_eq!(store.len(), 2);
        store.clear().unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn corrupt_log_starts_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assoc.jsonl");
        std::fs::write(&path, b"{\"op\":\"upsert\",\"association\":{\"peer\":12}}\nnot json\n").unwrap();
        let store = AssociationStore::open(&path).unwrap();
        assert!(store.recovered_from_corruption());
        assert!(store.is_empty());
        assert!(dir.path().join("assoc.corrupt").exists());
        store.upsert(association(4, AssociationRole::Outbound)).unwrap();
        drop(store);
        assert_eq!(AssociationStore::open(&path).unwrap().len(), 1);
    }
}
