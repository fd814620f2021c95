//! Topology files: which IPMFs, NFs and grants make up a test deployment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nfid_core::credentials::RightSet;
use nfid_core::ipmf::PolicyRule;
use nfid_node::mock_nf::Behavior;
use nfid_node::sidecar::CacheConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The single-domain six-NF deployment the bundled registration script runs against.
pub const BUNDLED_TOPOLOGY: &str = include_str!("../scenarios/registration.topology.json");

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("cannot read topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("topology is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error("invalid topology:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistrySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Persist the registry log here instead of keeping it in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IpmfSpec {
    pub name: String,
    pub domain: String,
    /// Parent IPMF; absent for a domain root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Rights delegated by the parent; defaults to all of the parent's rights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rights: Option<RightSet>,
    /// Root IPMFs of other domains whose credentials this root accepts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trusted_foreign_roots: Vec<String>,
    /// Rules in addition to those derived from NF grants.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issuance_policy: Vec<PolicyRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RouteSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    pub path_prefix: String,
    /// Name of the NF the prefix routes to.
    pub target: String,
}

/// An AuthZ credential an NF obtains at startup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GrantSpec {
    /// NF type of the producer.
    pub producer: String,
    pub service: String,
    /// Comma-separated HTTP methods, or `*`.
    pub ops: String,
    /// IPMF to ask; defaults to the NF's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NfSpec {
    pub name: String,
    pub nf_type: String,
    /// IPMF that bootstraps this NF; its root decides the NF's domain.
    pub ipmf: String,
    /// Service names this NF produces; every other NF routes `/{service}/` here.
    #[serde(default)]
    pub services: Vec<String>,
    /// Routes tried before the service-derived ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<RouteSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grants: Vec<GrantSpec>,
    #[serde(default)]
    pub behaviors: Vec<Behavior>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub discovery: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TopologyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub registry: RegistrySpec,
    pub ipmfs: Vec<IpmfSpec>,
    pub nfs: Vec<NfSpec>,
    /// Peer-document cache settings applied to every sidecar.
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    /// Where keys, wallets and stores go; a temporary directory if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_dir: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    10
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    names.filter(|n| !seen.insert(*n)).collect()
}

impl TopologyConfig {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_TOPOLOGY).expect("bundled topology parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let config: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn ipmf(&self, name: &str) -> Option<&IpmfSpec> {
        self.ipmfs.iter().find(|i| i.name == name)
    }

    pub fn nf(&self, name: &str) -> Option<&NfSpec> {
        self.nfs.iter().find(|n| n.name == name)
    }

    /// Root IPMF of `ipmf`'s hierarchy. Assumes a valid config.
    pub fn root_of<'a>(&'a self, ipmf: &'a str) -> &'a str {
        let mut current = ipmf;
        while let Some(parent) = self.ipmf(current).and_then(|i| i.parent.as_deref()) {
            current = parent;
        }
        current
    }

    /// IPMF names ordered so every parent precedes its children.
    pub fn launch_order(&self) -> Vec<&str> {
        let mut order: Vec<&str> = Vec::new();
        while order.len() < self.ipmfs.len() {
            let before = order.len();
            for i in &self.ipmfs {
                let ready = i.parent.as_deref().is_none_or(|p| order.contains(&p));
                if ready && !order.contains(&i.name.as_str()) {
                    order.push(&i.name);
                }
            }
            if order.len() == before {
                break;
            }
        }
        order
    }

    /// Route rules of `nf` as (host, path prefix, target NF): explicit routes
    /// first, then `/{service}/` for every service of every other NF.
    pub fn routes_of(&self, nf: &str) -> Vec<(Option<String>, String, String)> {
        let Some(spec) = self.nf(nf) else {
            return Vec::new();
        };
        let mut routes: Vec<_> = spec
            .routes
            .iter()
            .map(|r| (r.host.clone(), r.path_prefix.clone(), r.target.clone()))
            .collect();
        for other in self.nfs.iter().filter(|o| o.name != nf) {
            for service in &other.services {
                routes.push((None, format!("/{service}/"), other.name.clone()));
            }
        }
        routes
    }

    /// NF a path-only call from `caller` is routed to. Host-bound rules never match here.
    pub fn route(&self, caller: &str, path: &str) -> Option<String> {
        self.routes_of(caller)
            .into_iter()
            .find(|(host, prefix, _)| host.is_none() && path.starts_with(prefix.as_str()))
            .map(|(_, _, target)| target)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for d in duplicates(self.ipmfs.iter().map(|i| i.name.as_str())) {
            v.push(format!("IPMF {d:?} is declared twice"));
        }
        for d in duplicates(self.nfs.iter().map(|n| n.name.as_str())) {
            v.push(format!("NF {d:?} is declared twice"));
        }
        if self.ipmfs.is_empty() {
            v.push("at least one IPMF is required".into());
        }
        for i in &self.ipmfs {
            if let Some(p) = &i.parent {
                match self.ipmf(p) {
                    None => v.push(format!("IPMF {:?} names unknown parent {p:?}", i.name)),
                    Some(parent) if parent.domain != i.domain => v.push(format!(
                        "IPMF {:?} is in domain {:?} but its parent is not",
                        i.name, i.domain
                    )),
                    Some(_) => {}
                }
                if !i.trusted_foreign_roots.is_empty() {
                    v.push(format!(
                        "IPMF {:?}: only roots carry trustedForeignRoots",
                        i.name
                    ));
                }
            } else if i.rights.is_some() {
                v.push(format!(
                    "IPMF {:?} is a root and cannot be granted rights",
                    i.name
                ));
            }
            for r in &i.trusted_foreign_roots {
                match self.ipmf(r) {
                    Some(f) if f.parent.is_none() => {}
                    _ => v.push(format!(
                        "IPMF {:?} trusts {r:?}, which is not a root IPMF",
                        i.name
                    )),
                }
            }
        }
        if self.launch_order().len() != self.ipmfs.len() {
            v.push("IPMF parent links form a cycle".into());
        }
        let mut domain_roots: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for i in self.ipmfs.iter().filter(|i| i.parent.is_none()) {
            domain_roots.entry(&i.domain).or_default().push(&i.name);
        }
        for (domain, roots) in domain_roots.iter().filter(|(_, r)| r.len() > 1) {
            v.push(format!(
                "domain {domain:?} has several roots: {}",
                roots.join(", ")
            ));
        }
        for n in &self.nfs {
            if n.nf_type.is_empty() {
                v.push(format!("NF {:?} has an empty nfType", n.name));
            }
            if self.ipmf(&n.ipmf).is_none() {
                v.push(format!(
                    "NF {:?} references missing IPMF {:?}",
                    n.name, n.ipmf
                ));
            }
            for g in &n.grants {
                if let Some(issuer) = &g.issuer {
                    if self.ipmf(issuer).is_none() {
                        v.push(format!(
                            "NF {:?} asks missing IPMF {issuer:?} for a grant",
                            n.name
                        ));
                    }
                }
            }
            for r in &n.routes {
                if self.nf(&r.target).is_none() {
                    v.push(format!(
                        "NF {:?} routes {} to missing NF {:?}",
                        n.name, r.path_prefix, r.target
                    ));
                }
                if !r.path_prefix.starts_with('/') {
                    v.push(format!(
                        "NF {:?}: route prefix {:?} must start with '/'",
                        n.name, r.path_prefix
                    ));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(TopologyError::Invalid(v))
        }
    }
}
