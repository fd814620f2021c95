use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::credentials::{Claims, CredentialKind, FailureCode, VerifiableCredential, VerifiablePresentation};
use crate::envelope::ProtocolMessage;

pub const OFFER: &str = "acl/1.0/offer";
pub const REQUEST: &str = "acl/1.0/request";
pub const ISSUE: &str = "acl/1.0/issue";
pub const PRESENT_REQUEST: &str = "acl/1.0/present-request";
pub const PRESENTATION: &str = "acl/1.0/presentation";
pub const ACK: &str = "acl/1.0/ack";
pub const DENY: &str = "acl/1.0/deny";
pub const TUNNEL_REQUEST: &str = "acl/1.0/tunnel-request";
pub const TUNNEL_RESPONSE: &str = "acl/1.0/tunnel-response";
pub const REHANDSHAKE: &str = "acl/1.0/rehandshake";

pub const REGISTERED_TYPES: [&str; 10] = [
    OFFER,
    REQUEST,
    ISSUE,
    PRESENT_REQUEST,
    PRESENTATION,
    ACK,
    DENY,
    TUNNEL_REQUEST,
    TUNNEL_RESPONSE,
    REHANDSHAKE,
];

pub fn is_registered(msg_type: &str) -> bool {
    REGISTERED_TYPES.contains(&msg_type)
}

pub fn new_thread_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Holder asks for a credential. Without a presentation it only solicits an offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestBody {
    pub kind: CredentialKind,
    #[serde(default)]
    pub claims: Claims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<VerifiablePresentation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OfferBody {
    pub kind: CredentialKind,
    #[serde(with = "crate::canonical::b64_array")]
    pub challenge: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IssueBody {
    pub credential: VerifiableCredential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentRequestBody {
    #[serde(with = "crate::canonical::b64_array")]
    pub challenge: [u8; 32],
    pub requested_kinds: Vec<CredentialKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresentationBody {
    pub presentation: VerifiablePresentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    Identification,
    Authorization,
    Policy,
    MissingCredentials,
    Protocol,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::Identification => "identification",
            DenyReason::Authorization => "authorization",
            DenyReason::Policy => "policy",
            DenyReason::MissingCredentials => "missing_credentials",
            DenyReason::Protocol => "protocol",
        }
    }
}

/// Body of a deny message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Denial {
    pub reason: DenyReason,
    #[serde(default)]
    pub failures: Vec<FailureCode>,
    #[serde(default)]
    pub detail: String,
}

impl Denial {
    pub fn new(reason: DenyReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            failures: Vec::new(),
            detail: detail.into(),
        }
    }

    pub fn with_failures(mut self, failures: Vec<FailureCode>) -> Self {
        self.failures = failures;
        self
    }
}

impl std::fmt::Display for Denial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.reason.as_str())?;
        if !self.failures.is_empty() {
            let codes: Vec<&str> = self.failures.iter().map(|c| c.as_str()).collect();
            write!(f, " [{}]", codes.join(","))?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Empty {}

/// Builds a message with a typed body.
pub fn message<T: Serialize>(msg_type: &str, thread_id: &str, body: &T) -> ProtocolMessage {
    ProtocolMessage::new(
        msg_type,
        thread_id,
        serde_json::to_value(body).expect("message bodies serialize"),
    )
}

pub fn deny(thread_id: &str, denial: &Denial) -> ProtocolMessage {
    message(DENY, thread_id, denial)
}

pub fn ack(thread_id: &str) -> ProtocolMessage {
    message(ACK, thread_id, &Empty {})
}

/// Parses the body of `msg`, which must have type `expected`.
pub fn parse<T: DeserializeOwned>(msg: &ProtocolMessage, expected: &'static str) -> Result<T, ProtocolError> {
    if msg.msg_type != expected {
        return Err(ProtocolError::UnexpectedMessage {
            expected,
            got: msg.msg_type.clone(),
        });
    }
    serde_json::from_value(msg.body.clone()).map_err(|e| ProtocolError::MalformedBody(e.to_string()))
}

/// Interprets a single reply that is either `expected` or a deny.
pub fn expect_reply<T: DeserializeOwned>(
    replies: Vec<ProtocolMessage>,
    thread_id: &str,
    expected: &'static str,
) -> Result<Result<T, Denial>, ProtocolError> {
    let mut iter = replies.into_iter();
    let msg = iter.next().ok_or(ProtocolError::NoReply)?;
    if msg.thread_id != thread_id {
        return Err(ProtocolError::UnknownThread(msg.thread_id));
    }
    if msg.msg_type == DENY {
        return Ok(Err(parse(&msg, DENY)?));
    }
    Ok(Ok(parse(&msg, expected)?))
}
