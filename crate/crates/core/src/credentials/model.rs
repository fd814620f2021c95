use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::canonical::value_to_canonical_bytes;
use crate::clock::Timestamp;
use crate::identity::Did;

pub type Claims = BTreeMap<String, String>;

pub const CLAIM_RIGHTS: &str = "rights";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CredentialKind {
    /// Identity claims about an NF.
    AuthN,
    /// A permission grant as key/value claims.
    AuthZ,
    /// Issuance rights delegated from a parent IPMF to a child IPMF.
    Del,
}

impl CredentialKind {
    /// Right the issuer must hold to issue a credential of this kind.
    pub fn required_right(self) -> Right {
        match self {
            CredentialKind::AuthN => Right::IssueAuthn,
            CredentialKind::AuthZ => Right::IssueAuthz,
            CredentialKind::Del => Right::Delegate,
        }
    }
}

impl fmt::Display for CredentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CredentialKind::AuthN => "AuthN",
            CredentialKind::AuthZ => "AuthZ",
            CredentialKind::Del => "Del",
        })
    }
}

impl FromStr for CredentialKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AuthN" => Ok(CredentialKind::AuthN),
            "AuthZ" => Ok(CredentialKind::AuthZ),
            "Del" => Ok(CredentialKind::Del),
            other => Err(format!("unknown credential kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Right {
    IssueAuthn,
    IssueAuthz,
    Delegate,
}

impl Right {
    pub const ALL: [Right; 3] = [Right::IssueAuthn, Right::IssueAuthz, Right::Delegate];

    pub fn as_str(self) -> &'static str {
        match self {
            Right::IssueAuthn => "issue_authn",
            Right::IssueAuthz => "issue_authz",
            Right::Delegate => "delegate",
        }
    }
}

/// A set of delegable rights, encoded in claims as a sorted comma-separated list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct RightSet(BTreeSet<Right>);

impl RightSet {
    pub fn all() -> Self {
        RightSet(Right::ALL.into_iter().collect())
    }

    pub fn contains(&self, right: Right) -> bool {
        self.0.contains(&right)
    }

    pub fn is_subset(&self, other: &RightSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Right> + '_ {
        self.0.iter().copied()
    }

    /// Delegations must always grant at least one issuance right.
    pub fn grants_issuance(&self) -> bool {
        self.contains(Right::IssueAuthn) || self.contains(Right::IssueAuthz)
    }
}

impl FromIterator<Right> for RightSet {
    fn from_iter<I: IntoIterator<Item = Right>>(iter: I) -> Self {
        RightSet(iter.into_iter().collect())
    }
}

impl fmt::Display for RightSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|r| r.as_str()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for RightSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p {
                "issue_authn" => Ok(Right::IssueAuthn),
                "issue_authz" => Ok(Right::IssueAuthz),
                "delegate" => Ok(Right::Delegate),
                other => Err(format!("unknown right {other:?}")),
            })
            .collect()
    }
}

impl Serialize for RightSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RightSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevocationRef {
    pub registry_id: String,
    pub credential_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifiableCredential {
    pub credential_id: String,
    pub kind: CredentialKind,
    pub issuer: Did,
    pub subject: Did,
    pub claims: Claims,
    pub issued_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revocation: Option<RevocationRef>,
    #[serde(default)]
    pub delegation_chain: Vec<VerifiableCredential>,
    #[serde(with = "crate::canonical::b64")]
    pub proof: Vec<u8>,
}

impl VerifiableCredential {
    /// Canonical bytes of the credential without its `proof` member.
    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes_without_proof(self)
    }

    /// Rights carried by a Del credential, `None` if absent or unparsable.
    pub fn rights(&self) -> Option<RightSet> {
        self.claims.get(CLAIM_RIGHTS)?.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifiablePresentation {
    pub holder: Did,
    pub credentials: Vec<VerifiableCredential>,
    #[serde(with = "crate::canonical::b64_array")]
    pub challenge: [u8; 32],
    pub created_at: Timestamp,
    #[serde(with = "crate::canonical::b64")]
    pub proof: Vec<u8>,
}

impl VerifiablePresentation {
    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes_without_proof(self)
    }

    pub fn kinds(&self) -> BTreeSet<CredentialKind> {
        self.credentials.iter().map(|c| c.kind).collect()
    }
}

fn signing_bytes_without_proof<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_value(value).expect("credentials serialize");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("proof");
    }
    value_to_canonical_bytes(&v).expect("credentials contain no floats")
}
