use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::clock::{SharedClock, Timestamp};
use crate::credentials::{Claims, CredentialKind};
use crate::identity::Did;

pub const DEFAULT_SESSION_TIMEOUT: Duration = Duration::from_secs(10);

/// A state with a fixed transition relation. `Failed`-like states are reachable from any
/// non-terminal state.
pub trait StateMachine: Copy + Eq + std::fmt::Debug {
    fn allows(self, next: Self) -> bool;
    fn is_terminal(self) -> bool;
    fn failed() -> Self;
}

fn step<S: StateMachine>(state: &mut S, next: S) -> Result<(), ProtocolError> {
    if state.allows(next) {
        *state = next;
        Ok(())
    } else {
        Err(ProtocolError::IllegalTransition {
            from: format!("{:?}", state),
            to: format!("{:?}", next),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceState {
    Start,
    Offered,
    Requested,
    Issued,
    Done,
    Failed,
}

impl StateMachine for IssuanceState {
    fn allows(self, next: Self) -> bool {
        use IssuanceState::*;
        match (self, next) {
            (Start, Offered) | (Offered, Requested) | (Requested, Issued) | (Issued, Done) => true,
            (s, Failed) => !s.is_terminal(),
            _ => false,
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, IssuanceState::Done | IssuanceState::Failed)
    }

    fn failed() -> Self {
        IssuanceState::Failed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationState {
    Start,
    Requested,
    Presented,
    Verified,
    Denied,
    Failed,
}

impl StateMachine for PresentationState {
    fn allows(self, next: Self) -> bool {
        use PresentationState::*;
        match (self, next) {
            (Start, Requested) | (Requested, Presented) | (Presented, Verified) | (Presented, Denied) => true,
            (s, Failed) => !s.is_terminal(),
            _ => false,
        }
    }

    fn is_terminal(self) -> bool {
        matches!(
            self,
            PresentationState::Verified | PresentationState::Denied | PresentationState::Failed
        )
    }

    fn failed() -> Self {
        PresentationState::Failed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandshakePhase {
    Idle,
    Identifying,
    Identified,
    Authorizing,
    Established,
    Rejected,
}

impl StateMachine for HandshakePhase {
    fn allows(self, next: Self) -> bool {
        use HandshakePhase::*;
        match (self, next) {
            (Idle, Identifying)
            | (Identifying, Identified)
            | (Identified, Authorizing)
            | (Authorizing, Established) => true,
            (s, Rejected) => !s.is_terminal(),
            _ => false,
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, HandshakePhase::Established | HandshakePhase::Rejected)
    }

    fn failed() -> Self {
        HandshakePhase::Rejected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceRole {
    Issuer,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IssuanceSession {
    pub thread_id: String,
    pub role: IssuanceRole,
    pub state: IssuanceState,
    pub offered_kind: Option<CredentialKind>,
    pub subject_did: Did,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::canonical::b64_array_opt")]
    pub challenge: Option<[u8; 32]>,
}

impl IssuanceSession {
    pub fn new(thread_id: impl Into<String>, role: IssuanceRole, subject_did: Did) -> Self {
        Self {
            thread_id: thread_id.into(),
            role,
            state: IssuanceState::Start,
            offered_kind: None,
            subject_did,
            challenge: None,
        }
    }

    pub fn advance(&mut self, next: IssuanceState) -> Result<(), ProtocolError> {
        step(&mut self.state, next)
    }

    pub fn fail(&mut self) {
        let _ = self.advance(IssuanceState::Failed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationRole {
    Verifier,
    Prover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentationSession {
    pub thread_id: String,
    pub role: PresentationRole,
    pub state: PresentationState,
    #[serde(with = "crate::canonical::b64_array")]
    pub challenge: [u8; 32],
    pub requested_kinds: BTreeSet<CredentialKind>,
}

impl PresentationSession {
    /// A verifier session that has issued its request with a fresh challenge.
    pub fn request(thread_id: impl Into<String>, requested_kinds: impl IntoIterator<Item = CredentialKind>) -> Self {
        let mut s = Self {
            thread_id: thread_id.into(),
            role: PresentationRole::Verifier,
            state: PresentationState::Start,
            challenge: fresh_challenge(),
            requested_kinds: requested_kinds.into_iter().collect(),
        };
        s.advance(PresentationState::Requested).expect("start -> requested");
        s
    }

    /// A prover session answering a received request.
    pub fn answer(thread_id: impl Into<String>, challenge: [u8; 32], requested_kinds: impl IntoIterator<Item = CredentialKind>) -> Self {
        Self {
            thread_id: thread_id.into(),
            role: PresentationRole::Prover,
            state: PresentationState::Requested,
            challenge,
            requested_kinds: requested_kinds.into_iter().collect(),
        }
    }

    pub fn advance(&mut self, next: PresentationState) -> Result<(), ProtocolError> {
        step(&mut self.state, next)
    }

    pub fn fail(&mut self) {
        let _ = self.advance(PresentationState::Failed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HandshakeSession {
    pub peer: Did,
    pub direction: Direction,
    pub phase: HandshakePhase,
    pub consumer_is_local: bool,
    /// Verified AuthN claims of the peer.
    #[serde(default)]
    pub peer_claims: Claims,
    /// Verified AuthZ claim sets of the consumer (producer side only).
    #[serde(default)]
    pub authorizations: Vec<Claims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<super::Denial>,
}

impl HandshakeSession {
    pub fn new(peer: Did, direction: Direction) -> Self {
        Self {
            peer,
            direction,
            phase: HandshakePhase::Idle,
            consumer_is_local: direction == Direction::Initiator,
            peer_claims: Claims::new(),
            authorizations: Vec::new(),
            rejection: None,
        }
    }

    pub fn advance(&mut self, next: HandshakePhase) -> Result<(), ProtocolError> {
        step(&mut self.phase, next)
    }

    pub fn reject(&mut self, denial: super::Denial) {
        let _ = self.advance(HandshakePhase::Rejected);
        self.rejection = Some(denial);
    }

    pub fn is_established(&self) -> bool {
        self.phase == HandshakePhase::Established
    }
}

pub fn fresh_challenge() -> [u8; 32] {
    use rand::RngCore;
    let mut c = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut c);
    c
}

struct Entry<V> {
    value: V,
    deadline: Timestamp,
}

/// Pending sessions with a deadline. Expired entries are dropped (and thereby failed)
/// by [`SessionTable::reap`], which every accessor runs first.
pub struct SessionTable<K, V> {
    entries: Mutex<HashMap<K, Entry<V>>>,
    timeout: Duration,
    clock: SharedClock,
}

impl<K: Eq + Hash + Clone, V> SessionTable<K, V> {
    pub fn new(timeout: Duration, clock: SharedClock) -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            timeout,
            clock,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn reap_locked(&self, map: &mut HashMap<K, Entry<V>>) -> Vec<(K, V)> {
        let now = self.clock.now();
        let expired: Vec<K> = map
            .iter()
            .filter(|(_, e)| e.deadline <= now)
            .map(|(k, _)| k.clone())
            .collect();
        expired
            .into_iter()
            .filter_map(|k| map.remove(&k).map(|e| (k, e.value)))
            .collect()
    }

    /// Removes and returns all sessions whose deadline has passed.
    pub fn reap(&self) -> Vec<(K, V)> {
        let mut map = self.entries.lock().expect("session table poisoned");
        self.reap_locked(&mut map)
    }

    pub fn insert(&self, key: K, value: V) {
        let mut map = self.entries.lock().expect("session table poisoned");
        self.reap_locked(&mut map);
        let deadline = self.clock.now().saturating_add(self.timeout);
        map.insert(key, Entry { value, deadline });
    }

    pub fn remove(&self, key: &K) -> Option<V> {
        let mut map = self.entries.lock().expect("session table poisoned");
        self.reap_locked(&mut map);
        map.remove(key).map(|e| e.value)
    }

    /// Runs `f` on a live session; the session stays in the table.
    pub fn with<R>(&self, key: &K, f: impl FnOnce(&mut V) -> R) -> Option<R> {
        let mut map = self.entries.lock().expect("session table poisoned");
        self.reap_locked(&mut map);
        map.get_mut(key).map(|e| f(&mut e.value))
    }

    pub fn len(&self) -> usize {
        let mut map = self.entries.lock().expect("session table poisoned");
        self.reap_locked(&mut map);
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
