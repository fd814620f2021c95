use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::policy::PolicyRule;
use crate::credentials::{effective_rights, CredentialKind, Right, RightSet, TrustPolicy, VerifiableCredential};
use crate::identity::{Did, KeyPair};

/// Configuration of one IPMF. An empty `parent_chain` makes it a root.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IpmfConfig {
    pub name: String,
    pub did: Did,
    pub keys: KeyPair,
    #[serde(default)]
    pub parent_chain: Vec<VerifiableCredential>,
    #[serde(default)]
    pub issuance_policy: Vec<PolicyRule>,
    #[serde(default)]
    pub trusted_foreign_roots: BTreeSet<Did>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revocation_registry_id: Option<String>,
    /// Lets a root IPMF issue AuthN/AuthZ credentials to NFs directly.
    #[serde(default)]
    pub allow_direct_issuance: bool,
    /// Advertised envelope endpoint, recorded in the DID document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delegation_validity_secs: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error("invalid IPMF config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl IpmfConfig {
    /// A root configuration with no rules.
    pub fn root(name: impl Into<String>, keys: KeyPair) -> Self {
        Self {
            name: name.into(),
            did: Did::registry(&keys.signing_public()),
            keys,
            parent_chain: Vec::new(),
            issuance_policy: Vec::new(),
            trusted_foreign_roots: BTreeSet::new(),
            revocation_registry_id: None,
            allow_direct_issuance: false,
            endpoint: None,
            listen: None,
            registry_url: None,
            log_path: None,
            delegation_validity_secs: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent_chain.is_empty()
    }

    /// All rights for a root, otherwise the rights of the terminal Del credential.
    pub fn effective_rights(&self) -> RightSet {
        effective_rights(&self.parent_chain).unwrap_or_default()
    }

    /// The root of this IPMF's own hierarchy.
    pub fn root_did(&self) -> &Did {
        self.parent_chain.first().map(|c| &c.issuer).unwrap_or(&self.did)
    }

    /// Own root plus configured foreign roots, with revocation checking.
    pub fn trust_policy(&self) -> TrustPolicy {
        let mut policy = TrustPolicy::trusting(self.trusted_foreign_roots.iter().cloned());
        policy.trusted_roots.insert(self.root_did().clone());
        policy
    }

    /// Every invariant violation, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.did != Did::registry(&self.keys.signing_public()) {
            v.push(format!("did {} does not fingerprint the configured signing key", self.did));
        }
        let chain = &self.parent_chain;
        for (i, link) in chain.iter().enumerate() {
            if link.kind != CredentialKind::Del {
                v.push(format!("parentChain[{i}] is not a Del credential"));
            }
            let Some(rights) = link.rights() else {
                v.push(format!("parentChain[{i}] carries no valid rights claim"));
                continue;
            };
            if !rights.grants_issuance() {
                v.push(format!("parentChain[{i}] grants neither issue_authn nor issue_authz"));
            }
            if link.delegation_chain.as_slice() != &chain[..i] {
                v.push(format!("parentChain[{i}] does not embed the preceding links"));
            }
            if i > 0 {
                let parent = &chain[i - 1];
                if parent.subject != link.issuer {
                    v.push(format!("parentChain[{i}] issuer is not the subject of parentChain[{}]", i - 1));
                }
                let parent_rights = parent.rights().unwrap_or_default();
                if !parent_rights.contains(Right::Delegate) {
                    v.push(format!("parentChain[{}] lacks the delegate right", i - 1));
                }
                if !rights.is_subset(&parent_rights) {
                    v.push(format!("parentChain[{i}] escalates rights beyond its parent"));
                }
            }
        }
        if let Some(terminal) = chain.last() {
            if terminal.subject != self.did {
                v.push(format!(
                    "parentChain terminal subject {} is not this IPMF ({})",
                    terminal.subject, self.did
                ));
            }
        }
        let rights = self.effective_rights();
        for (i, rule) in self.issuance_policy.iter().enumerate() {
            if rule.grant.kind == CredentialKind::Del {
                v.push(format!("issuancePolicy[{i}] grants Del; delegations are issued administratively"));
            } else if !rights.contains(rule.grant.kind.required_right()) {
                v.push(format!(
                    "issuancePolicy[{i}] grants {:?} outside effective rights {rights}",
                    rule.grant.kind
                ));
            }
            if rule.grant.validity_secs == Some(0) {
                v.push(format!("issuancePolicy[{i}] has zero validity"));
            }
        }
        if self.is_root() && !self.allow_direct_issuance && !self.issuance_policy.is_empty() {
            v.push("root IPMF has issuance rules but allowDirectIssuance is false".into());
        }
        if self.delegation_validity_secs == Some(0) {
            v.push("delegationValiditySecs must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

/// Reads and validates an IPMF config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<IpmfConfig, ConfigError> {
    let config: IpmfConfig = serde_json::from_slice(&std::fs::read(path)?)?;
    config.validate()?;
    Ok(config)
}
