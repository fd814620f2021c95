//! Brings a topology up in-process: registry, IPMF hierarchy, mock NFs and
//! their sidecars, each on its own loopback listener.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nfid_core::clock::{system_clock, SharedClock};
use nfid_core::credentials::{child_chain, Claims, CredentialKind};
use nfid_core::identity::{generate_keypair, Did};
use nfid_core::ipmf::{Grant, IpmfConfig, PolicyRule, RuleMatch};
use nfid_core::protocols::{Wallet, CLAIM_NF_TYPE};
use nfid_core::vdr::{Registry, VdrClient};
use nfid_node::ipmf_admin::{self, persist_provisioned, AdminError};
use nfid_node::ipmf_node::{launch_ipmf, IpmfNode};
use nfid_node::keystore::StoredKeys;
use nfid_node::mock_nf::{MockNf, MockNfConfig};
use nfid_node::server::{spawn, ServerHandle};
use nfid_node::sidecar::{
    launch, CredentialWant, RouteRule, RunningSidecar, SidecarConfig, SidecarDeps, STATS_PATH,
};
use nfid_node::transport::HttpTransport;
use nfid_node::vdr_http::{router, HttpVdrClient};

use crate::topology::{NfSpec, TopologyConfig, TopologyError};

/// Lifetime of AuthZ credentials issued through derived rules.
pub const GRANT_VALIDITY_SECS: u64 = 24 * 3600;
const LOOPBACK: &str = "127.0.0.1:0";

#[derive(Debug, thiserror::Error)]
pub enum LaunchError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("work directory: {0}")]
    WorkDir(std::io::Error),
    #[error("registry: {0}")]
    Registry(String),
    #[error("IPMF {name}: {detail}")]
    Ipmf { name: String, detail: String },
    #[error("NF {name}: {detail}")]
    Nf { name: String, detail: String },
    #[error("NF {name} could not obtain {what} from IPMF {issuer}: {detail}")]
    Credentials {
        name: String,
        issuer: String,
        what: String,
        detail: String,
    },
}

fn ipmf_err(name: &str) -> impl Fn(String) -> LaunchError + '_ {
    move |detail| LaunchError::Ipmf {
        name: name.to_string(),
        detail,
    }
}

fn nf_err(name: &str) -> impl Fn(String) -> LaunchError + '_ {
    move |detail| LaunchError::Nf {
        name: name.to_string(),
        detail,
    }
}

pub struct RunningIpmf {
    pub name: String,
    pub domain: String,
    pub node: IpmfNode,
    /// Config file with the provisioned endpoint and revocation registry, usable by the admin verbs.
    pub config_path: PathBuf,
}

impl RunningIpmf {
    pub fn did(&self) -> &Did {
        self.node.service.did()
    }
}

pub struct RunningNf {
    pub spec: NfSpec,
    pub did: Did,
    pub mock: Arc<MockNf>,
    pub sidecar: RunningSidecar,
    pub sidecar_config: SidecarConfig,
    mock_server: ServerHandle,
}

impl RunningNf {
    /// Where plain-mode calls to this NF go.
    pub fn mock_url(&self) -> String {
        self.mock_server.url()
    }

    /// Where this NF's own outbound calls go in tunneled mode.
    pub fn intercept_url(&self) -> String {
        self.sidecar.intercept_url()
    }
}

enum WorkDir {
    Temp(tempfile::TempDir),
    Fixed(PathBuf),
}

impl WorkDir {
    fn path(&self) -> &Path {
        match self {
            WorkDir::Temp(t) => t.path(),
            WorkDir::Fixed(p) => p,
        }
    }
}

/// A launched deployment. Dropping it stops nothing cleanly; call [`Topology::shutdown`].
pub struct Topology {
    pub config: TopologyConfig,
    pub registry: Arc<Registry>,
    pub vdr: Arc<dyn VdrClient>,
    pub clock: SharedClock,
    registry_server: ServerHandle,
    ipmfs: BTreeMap<String, RunningIpmf>,
    nfs: BTreeMap<String, RunningNf>,
    work: WorkDir,
}

/// Rules an IPMF needs so every NF that asks it for a grant gets one.
pub fn derived_rules(config: &TopologyConfig, ipmf: &str) -> Vec<PolicyRule> {
    let mut rules: Vec<PolicyRule> = Vec::new();
    for nf in &config.nfs {
        for g in nf
            .grants
            .iter()
            .filter(|g| g.issuer.as_deref().unwrap_or(&nf.ipmf) == ipmf)
        {
            let rule = PolicyRule {
                matcher: RuleMatch {
                    nf_type: Some(nf.nf_type.clone()),
                    ..Default::default()
                },
                grant: Grant {
                    kind: CredentialKind::AuthZ,
                    claims: Claims::from([
                        ("producer".to_string(), g.producer.clone()),
                        ("service".to_string(), g.service.clone()),
                        ("ops".to_string(), g.ops.clone()),
                    ]),
                    validity_secs: Some(GRANT_VALIDITY_SECS),
                },
            };
            if !rules.contains(&rule) {
                rules.push(rule);
            }
        }
    }
    rules
}

impl Topology {
    pub async fn launch(config: TopologyConfig) -> Result<Self, LaunchError> {
        config.validate()?;
        let work = match &config.work_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(LaunchError::WorkDir)?;
                WorkDir::Fixed(dir.clone())
            }
            None => WorkDir::Temp(tempfile::tempdir().map_err(LaunchError::WorkDir)?),
        };
        let clock = system_clock();

        let registry = Arc::new(match &config.registry.log {
            Some(log) => Registry::open(log, clock.clone())
                .map_err(|e| LaunchError::Registry(e.to_string()))?,
            None => Registry::with_clock(clock.clone()),
        });
        let listen = config.registry.listen.as_deref().unwrap_or(LOOPBACK);
        let registry_server = spawn(listen, router(registry.clone()))
            .await
            .map_err(|e| LaunchError::Registry(format!("bind {listen}: {e}")))?;
        let registry_url = registry_server.url();
        let vdr: Arc<dyn VdrClient> = Arc::new(
            HttpVdrClient::new(&registry_url).map_err(|e| LaunchError::Registry(e.to_string()))?,
        );
        tracing::info!(url = %registry_url, "registry up");

        // Keys first, so foreign-root trust can name DIDs of IPMFs not started yet.
        let mut keys = BTreeMap::new();
        for i in &config.ipmfs {
            keys.insert(
                i.name.clone(),
                generate_keypair(None).map_err(|e| ipmf_err(&i.name)(e.to_string()))?,
            );
        }
        let did_of = |name: &str| Did::registry(&keys[name].signing_public());

        let mut ipmfs: BTreeMap<String, RunningIpmf> = BTreeMap::new();
        for name in config.launch_order() {
            let spec = config
                .ipmf(name)
                .expect("launch order names declared IPMFs");
            let fail = ipmf_err(name);
            let mut ic = IpmfConfig::root(name, keys[name].clone());
            ic.issuance_policy = derived_rules(&config, name);
            ic.issuance_policy
                .extend(spec.issuance_policy.iter().cloned());
            ic.trusted_foreign_roots = spec
                .trusted_foreign_roots
                .iter()
                .map(|r| did_of(r))
                .collect();
            ic.registry_url = Some(registry_url.clone());
            ic.log_path = Some(work.path().join(format!("ipmf-{name}.log.jsonl")));
            if let Some(parent) = &spec.parent {
                let parent = &ipmfs[parent].node.service;
                let rights = spec
                    .rights
                    .clone()
                    .unwrap_or_else(|| parent.effective_rights());
                let del = parent
                    .delegate_to_child(&ic.did, rights)
                    .map_err(|e| fail(e.to_string()))?;
                ic.parent_chain = child_chain(&del);
            } else {
                ic.allow_direct_issuance = !ic.issuance_policy.is_empty();
            }
            ic.validate().map_err(|e| fail(e.to_string()))?;
            let listener =
                tokio::net::TcpListener::bind(spec.listen.as_deref().unwrap_or(LOOPBACK))
                    .await
                    .map_err(|e| fail(format!("bind: {e}")))?;
            let node = launch_ipmf(ic.clone(), vdr.clone(), clock.clone(), listener)
                .await
                .map_err(|e| fail(e.to_string()))?;
            let config_path = work.path().join(format!("ipmf-{name}.json"));
            persist_provisioned(&ic, &node, &config_path).map_err(|e| fail(e.to_string()))?;
            tracing::info!(ipmf = name, did = %node.service.did(), "IPMF up");
            ipmfs.insert(
                name.to_string(),
                RunningIpmf {
                    name: name.to_string(),
                    domain: spec.domain.clone(),
                    node,
                    config_path,
                },
            );
        }

        let deps = SidecarDeps {
            vdr: vdr.clone(),
            transport: Arc::new(HttpTransport::new()),
            clock: clock.clone(),
        };
        let mut provisioned = BTreeMap::new();
        for nf in &config.nfs {
            let fail = nf_err(&nf.name);
            let stored = StoredKeys::generate().map_err(|e| fail(e.to_string()))?;
            let key_store = work.path().join(format!("nf-{}.keys.json", nf.name));
            stored.save(&key_store).map_err(|e| fail(e.to_string()))?;
            let bootstrap = ipmfs[&nf.ipmf]
                .node
                .service
                .issue_direct(
                    &stored.did,
                    CredentialKind::AuthN,
                    Claims::from([(CLAIM_NF_TYPE.to_string(), nf.nf_type.clone())]),
                    None,
                )
                .map_err(|e| fail(format!("bootstrap credential: {e}")))?;
            let credential_store = work.path().join(format!("nf-{}.wallet.json", nf.name));
            let mut wallet = Wallet::open(&credential_store).map_err(|e| fail(e.to_string()))?;
            wallet.add(bootstrap).map_err(|e| fail(e.to_string()))?;
            provisioned.insert(nf.name.clone(), (stored.did, key_store, credential_store));
        }

        let mut nfs = BTreeMap::new();
        for nf in &config.nfs {
            let fail = nf_err(&nf.name);
            let mock = MockNf::new(MockNfConfig {
                name: nf.name.clone(),
                behaviors: nf.behaviors.clone(),
                discovery: nf.discovery.clone(),
            });
            let mock_server = spawn(LOOPBACK, mock.clone().router())
                .await
                .map_err(|e| fail(format!("mock NF: {e}")))?;
            let (did, key_store, credential_store) = provisioned[&nf.name].clone();

            let routes: Vec<RouteRule> = config
                .routes_of(&nf.name)
                .into_iter()
                .map(|(host, path_prefix, target)| RouteRule {
                    host,
                    path_prefix,
                    target: provisioned[&target].0.clone(),
                })
                .collect();

            let root = config.root_of(&nf.ipmf);
            let mut trusted_roots = BTreeSet::from([did_of(root)]);
            let root_spec = config.ipmf(root).expect("validated root");
            trusted_roots.extend(root_spec.trusted_foreign_roots.iter().map(|r| did_of(r)));

            let sidecar_config = SidecarConfig {
                name: nf.name.clone(),
                nf_type: nf.nf_type.clone(),
                local_nf_url: mock_server.url(),
                intercept_listen: LOOPBACK.to_string(),
                peer_listen: LOOPBACK.to_string(),
                advertised_endpoint: None,
                registry_url: registry_url.clone(),
                key_store,
                credential_store,
                association_store: work.path().join(format!("nf-{}.assoc.jsonl", nf.name)),
                trusted_roots,
                routes,
                cache: config.cache.clone(),
                request_timeout_secs: config.request_timeout_secs,
                handshake_timeout_secs: config.request_timeout_secs,
                issuer: Some(did_of(&nf.ipmf)),
                credentials: nf
                    .grants
                    .iter()
                    .map(|g| CredentialWant {
                        kind: CredentialKind::AuthZ,
                        claims: Claims::from([
                            ("producer".to_string(), g.producer.clone()),
                            ("service".to_string(), g.service.clone()),
                        ]),
                        issuer: g.issuer.as_deref().map(&did_of),
                    })
                    .collect(),
            };
            let sidecar = launch(sidecar_config.clone(), deps.clone())
                .await
                .map_err(|e| fail(format!("sidecar: {e}")))?;
            tracing::info!(nf = %nf.name, did = %did, intercept = %sidecar.intercept_url(), "NF up");
            nfs.insert(
                nf.name.clone(),
                RunningNf {
                    spec: nf.clone(),
                    did,
                    mock,
                    sidecar,
                    sidecar_config,
                    mock_server,
                },
            );
        }

        // Every sidecar is serving before anyone asks for credentials.
        let topology = Self {
            config,
            registry,
            vdr,
            clock,
            registry_server,
            ipmfs,
            nfs,
            work,
        };
        topology.check_ready().await?;
        for nf in topology.nfs.values() {
            for g in &nf.spec.grants {
                let issuer = g.issuer.clone().unwrap_or_else(|| nf.spec.ipmf.clone());
                let want = CredentialWant {
                    kind: CredentialKind::AuthZ,
                    claims: Claims::from([
                        ("producer".to_string(), g.producer.clone()),
                        ("service".to_string(), g.service.clone()),
                    ]),
                    issuer: Some(topology.ipmfs[&issuer].did().clone()),
                };
                let held = nf
                    .sidecar
                    .sidecar
                    .wallet()
                    .read()
                    .expect("wallet lock poisoned")
                    .all()
                    .iter()
                    .any(|c| {
                        c.kind == want.kind
                            && Some(&c.issuer) == want.issuer.as_ref()
                            && want.claims.iter().all(|(k, v)| c.claims.get(k) == Some(v))
                    });
                if held {
                    continue;
                }
                nf.sidecar
                    .sidecar
                    .obtain(
                        want.issuer.as_ref().expect("issuer set"),
                        nfid_core::protocols::Wanted::new(want.kind, want.claims.clone()),
                    )
                    .await
                    .map_err(|e| LaunchError::Credentials {
                        name: nf.spec.name.clone(),
                        issuer,
                        what: format!("AuthZ for {} {}", g.producer, g.service),
                        detail: e.to_string(),
                    })?;
            }
        }
        Ok(topology)
    }

    async fn check_ready(&self) -> Result<(), LaunchError> {
        let client = reqwest::Client::new();
        for nf in self.nfs.values() {
            let url = format!("{}{STATS_PATH}", nf.intercept_url());
            let ok = client
                .get(&url)
                .send()
                .await
                .map(|r| r.status().is_success())
                .unwrap_or(false);
            if !ok {
                return Err(nf_err(&nf.spec.name)(
                    "sidecar does not answer its stats endpoint".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn nf(&self, name: &str) -> Option<&RunningNf> {
        self.nfs.get(name)
    }

    pub fn nfs(&self) -> impl Iterator<Item = &RunningNf> {
        self.nfs.values()
    }

    pub fn ipmf(&self, name: &str) -> Option<&RunningIpmf> {
        self.ipmfs.get(name)
    }

    pub fn ipmfs(&self) -> impl Iterator<Item = &RunningIpmf> {
        self.ipmfs.values()
    }

    pub fn registry_url(&self) -> String {
        self.registry_server.url()
    }

    pub fn work_dir(&self) -> &Path {
        self.work.path()
    }

    /// Handshakes initiated by all sidecars so far.
    pub fn handshakes(&self) -> u64 {
        self.nfs
            .values()
            .map(|n| n.sidecar.sidecar.stats().handshakes_initiated)
            .sum()
    }

    /// Envelopes sent or received by all sidecars so far.
    pub fn envelopes(&self) -> u64 {
        self.nfs
            .values()
            .map(|n| n.sidecar.sidecar.transcript().len() as u64)
            .sum()
    }

    pub fn reset_mock_counts(&self) {
        for nf in self.nfs.values() {
            nf.mock.reset_counts();
        }
    }

    /// Revokes every AuthZ credential `holder` has for calling `producer`, the
    /// way an operator would with `ipmf revoke`. Returns the revoked ids.
    pub async fn revoke_grants(
        &self,
        holder: &str,
        producer: &str,
    ) -> Result<Vec<String>, RevokeError> {
        let holder_nf = self
            .nf(holder)
            .ok_or_else(|| RevokeError::UnknownNf(holder.to_string()))?;
        let producer_type = &self
            .nf(producer)
            .ok_or_else(|| RevokeError::UnknownNf(producer.to_string()))?
            .spec
            .nf_type;
        let targets: Vec<(String, Did)> = holder_nf
            .sidecar
            .sidecar
            .wallet()
            .read()
            .expect("wallet lock poisoned")
            .all()
            .iter()
            .filter(|c| {
                c.kind == CredentialKind::AuthZ && c.claims.get("producer") == Some(producer_type)
            })
            .map(|c| (c.credential_id.clone(), c.issuer.clone()))
            .collect();
        if targets.is_empty() {
            return Err(RevokeError::NothingToRevoke {
                holder: holder.to_string(),
                producer: producer.to_string(),
            });
        }
        for (id, issuer) in &targets {
            let ipmf = self
                .ipmfs
                .values()
                .find(|i| i.did() == issuer)
                .ok_or_else(|| RevokeError::ForeignIssuer(issuer.clone()))?;
            ipmf_admin::revoke(&ipmf.config_path, id).await?;
            tracing::info!(credential = %id, ipmf = %ipmf.name, holder, producer, "revoked");
        }
        Ok(targets.into_iter().map(|(id, _)| id).collect())
    }

    pub async fn shutdown(self) {
        for (_, nf) in self.nfs {
            nf.sidecar.shutdown().await;
            nf.mock_server.shutdown().await;
        }
        for (_, ipmf) in self.ipmfs {
            ipmf.node.shutdown().await;
        }
        self.registry_server.shutdown().await;
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RevokeError {
    #[error("no NF named {0}")]
    UnknownNf(String),
    #[error("{holder} holds no AuthZ credential for {producer}")]
    NothingToRevoke { holder: String, producer: String },
    #[error("credential issuer {0} is not an IPMF of this topology")]
    ForeignIssuer(Did),
    #[error(transparent)]
    Admin(#[from] AdminError),
}
