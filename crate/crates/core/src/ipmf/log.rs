use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::credentials::{CredentialKind, RevocationRef, VerifiableCredential};
use crate::identity::Did;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEntry {
    #[serde(rename_all = "camelCase")]
    Issued {
        credential_id: String,
        kind: CredentialKind,
        subject: Did,
        issued_at: Timestamp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        revocation: Option<RevocationRef>,
    },
    #[serde(rename_all = "camelCase")]
    Revoked { credential_id: String, at: Timestamp },
}

impl LogEntry {
    pub fn issued(vc: &VerifiableCredential) -> Self {
        LogEntry::Issued {
            credential_id: vc.credential_id.clone(),
            kind: vc.kind,
            subject: vc.subject.clone(),
            issued_at: vc.issued_at,
            revocation: vc.revocation.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedRecord {
    pub kind: CredentialKind,
    pub subject: Did,
    pub revocation: Option<RevocationRef>,
    pub revoked: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("issuance log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("issuance log line {line} is corrupt: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Default)]
struct State {
    entries: Vec<LogEntry>,
    index: HashMap<String, IssuedRecord>,
}

impl State {
    fn apply(&mut self, entry: &LogEntry) -> Result<(), String> {
        match entry {
            LogEntry::Issued {
                credential_id,
                kind,
                subject,
                revocation,
                ..
            } => {
                if self.index.contains_key(credential_id) {
                    return Err(format!("credential {credential_id} issued twice"));
                }
                self.index.insert(
                    credential_id.clone(),
                    IssuedRecord {
                        kind: *kind,
                        subject: subject.clone(),
                        revocation: revocation.clone(),
                        revoked: false,
                    },
                );
            }
            LogEntry::Revoked { credential_id, .. } => {
                self.index
                    .get_mut(credential_id)
                    .ok_or_else(|| format!("revocation of unknown credential {credential_id}"))?
                    .revoked = true;
            }
        }
        self.entries.push(entry.clone());
        Ok(())
    }
}

/// Append-only record of everything an IPMF issued and revoked. Appends are serialized
/// and flushed to disk before they become visible.
pub struct IssuanceLog {
    state: Mutex<State>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl IssuanceLog {
    pub fn in_memory() -> Self {
        Self {
            state: Mutex::new(State::default()),
            file: None,
            path: None,
        }
    }

    /// Opens (creating if needed) and replays a JSON-lines log.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let mut state = State::default();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                state
                    .apply(&entry)
                    .map_err(|reason| LogError::Corrupt { line: i + 1, reason })?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            state: Mutex::new(state),
            file: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, entry: LogEntry) -> Result<(), LogError> {
        let mut state = self.state.lock().expect("log poisoned");
        let mut probe = State {
            entries: Vec::new(),
            index: state.index.clone(),
        };
        probe
            .apply(&entry)
            .map_err(|reason| LogError::Corrupt { line: state.entries.len() + 1, reason })?;
        if let Some(file) = &self.file {
            let mut line = serde_json::to_vec(&entry).expect("log entries serialize");
            line.push(b'\n');
            let mut f = file.lock().expect("log file poisoned");
            f.write_all(&line)?;
            f.sync_data()?;
        }
        state.apply(&entry).expect("validated above");
        Ok(())
    }

    pub fn get(&self, credential_id: &str) -> Option<IssuedRecord> {
        self.state.lock().expect("log poisoned").index.get(credential_id).cloned()
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.state.lock().expect("log poisoned").entries.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("log poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
