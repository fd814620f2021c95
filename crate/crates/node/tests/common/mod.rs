#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use nfid_core::clock::{system_clock, SharedClock};
use nfid_core::credentials::{Claims, CredentialKind};
use nfid_core::identity::Did;
use nfid_core::ipmf::{Grant, IpmfConfig, PolicyRule, RuleMatch};
use nfid_core::protocols::{Wallet, CLAIM_NF_TYPE};
use nfid_core::testkit::{claims, keys_for};
use nfid_core::vdr::{Registry, VdrClient};
use nfid_node::ipmf_node::{launch_ipmf, IpmfNode};
use nfid_node::keystore::StoredKeys;
use nfid_node::mock_nf::{Behavior, MockNf, MockNfConfig, CALLER_HEADER};
use nfid_node::server::{spawn, ServerHandle};
use nfid_node::sidecar::{launch, CacheConfig, CredentialWant, RouteRule, RunningSidecar, SidecarConfig, SidecarDeps};
use nfid_node::transport::HttpTransport;
use nfid_node::vdr_http::{router, HttpVdrClient};
use serde_json::json;

/// A grant `consumer` may hold for calling `producer`.
pub struct Permit {
    pub consumer: &'static str,
    pub producer: &'static str,
    pub service: &'static str,
    pub ops: &'static str,
}

pub fn authz_rule(p: &Permit) -> PolicyRule {
    PolicyRule {
        matcher: RuleMatch {
            nf_type: Some(p.consumer.to_string()),
            ..Default::default()
        },
        grant: Grant {
            kind: CredentialKind::AuthZ,
            claims: claims(&[("producer", p.producer), ("service", p.service), ("ops", p.ops)]),
            validity_secs: Some(3600),
        },
    }
}

/// Registry and a root IPMF that issues directly, both over HTTP.
pub struct Net {
    pub registry: Arc<Registry>,
    pub registry_server: Option<ServerHandle>,
    pub registry_url: String,
    pub vdr: Arc<dyn VdrClient>,
    pub ipmf: IpmfNode,
    pub clock: SharedClock,
    pub dir: tempfile::TempDir,
}

impl Net {
    pub async fn start(permits: &[Permit]) -> Self {
        let clock = system_clock();
        let registry = Arc::new(Registry::with_clock(clock.clone()));
        let server = spawn("127.0.0.1:0", router(registry.clone())).await.unwrap();
        let registry_url = server.url();
        let vdr: Arc<dyn VdrClient> = Arc::new(HttpVdrClient::new(&registry_url).unwrap());
        let mut config = IpmfConfig::root("ipmf", keys_for(&format!("ipmf/{}", uuid::Uuid::new_v4())));
        config.allow_direct_issuance = true;
        config.issuance_policy = permits.iter().map(authz_rule).collect();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let ipmf = launch_ipmf(config, vdr.clone(), clock.clone(), listener).await.unwrap();
        Self {
            registry,
            registry_server: Some(server),
            registry_url,
            vdr,
            ipmf,
            clock,
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn root(&self) -> Did {
        self.ipmf.service.did().clone()
    }

    pub fn deps(&self) -> SidecarDeps {
        SidecarDeps {
            vdr: self.vdr.clone(),
            transport: Arc::new(HttpTransport::new()),
            clock: self.clock.clone(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Creates keys for an NF and ships it with a bootstrap AuthN credential.
    pub fn provision(&self, name: &str, nf_type: &str) -> Did {
        let stored = StoredKeys::generate().unwrap();
        stored.save(self.path(&format!("{name}.keys.json"))).unwrap();
        let vc = self
            .ipmf
            .service
            .issue_direct(&stored.did, CredentialKind::AuthN, claims(&[(CLAIM_NF_TYPE, nf_type)]), None)
            .unwrap();
        let mut wallet = Wallet::open(self.path(&format!("{name}.wallet.json"))).unwrap();
        wallet.add(vc).unwrap();
        stored.did
    }

    pub fn sidecar_config(&self, name: &str, nf_type: &str, nf_url: &str, routes: Vec<RouteRule>, wants: Vec<Claims>) -> SidecarConfig {
        SidecarConfig {
            name: name.to_string(),
            nf_type: nf_type.to_string(),
            local_nf_url: nf_url.to_string(),
            intercept_listen: free_addr(),
            peer_listen: free_addr(),
            advertised_endpoint: None,
            registry_url: self.registry_url.clone(),
            key_store: self.path(&format!("{name}.keys.json")),
            credential_store: self.path(&format!("{name}.wallet.json")),
            association_store: self.path(&format!("{name}.assoc.jsonl")),
            trusted_roots: BTreeSet::from([self.root()]),
            routes,
            cache: CacheConfig::default(),
            request_timeout_secs: 5,
            handshake_timeout_secs: 5,
            issuer: Some(self.root()),
            credentials: wants
                .into_iter()
                .map(|claims| CredentialWant {
                    kind: CredentialKind::AuthZ,
                    claims,
                    issuer: None,
                })
                .collect(),
        }
    }

    pub async fn stop_registry(&mut self) {
        if let Some(s) = self.registry_server.take() {
            s.shutdown().await;
        }
    }
}

/// A free loopback address; bound and released so the port can be reused across restarts.
pub fn free_addr() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

pub async fn mock(name: &str, behaviors: Vec<Behavior>) -> (Arc<MockNf>, ServerHandle) {
    let nf = MockNf::new(MockNfConfig {
        name: name.to_string(),
        behaviors,
        ..Default::default()
    });
    let server = spawn("127.0.0.1:0", nf.clone().router()).await.unwrap();
    (nf, server)
}

pub fn behavior(method: &str, path: &str, status: u16, body: serde_json::Value) -> Behavior {
    Behavior {
        method: method.into(),
        path: path.into(),
        status,
        body,
    }
}

pub const SM_CONTEXTS: &str = "/nsmf-pdusession/v1/sm-contexts";

pub fn smf_behaviors() -> Vec<Behavior> {
    vec![
        behavior("POST", SM_CONTEXTS, 201, json!({ "smContextRef": "ctx-1", "secret": "PLAINTEXT-RESPONSE-MARKER" })),
        behavior("GET", SM_CONTEXTS, 200, json!({ "contexts": ["ctx-1"] })),
        behavior("DELETE", SM_CONTEXTS, 204, serde_json::Value::Null),
    ]
}

/// An AMF consumer and an SMF producer, each behind a sidecar.
pub struct Pair {
    pub net: Net,
    pub smf_nf: Arc<MockNf>,
    pub smf_server: ServerHandle,
    pub smf_config: SidecarConfig,
    pub smf: Option<RunningSidecar>,
    pub amf_config: SidecarConfig,
    pub amf: Option<RunningSidecar>,
}

impl Pair {
    /// `ops` is the AMF's grant on the SMF's `nsmf-pdusession` service.
    pub async fn start(ops: &'static str) -> Self {
        Self::start_with(ops, |_, _| {}).await
    }

    pub async fn start_with(ops: &'static str, tweak: impl FnOnce(&mut SidecarConfig, &mut SidecarConfig)) -> Self {
        let net = Net::start(&[Permit {
            consumer: "AMF",
            producer: "SMF",
            service: "nsmf-pdusession",
            ops,
        }])
        .await;
        let smf_did = net.provision("smf", "SMF");
        net.provision("amf", "AMF");
        let (smf_nf, smf_server) = mock("SMF", smf_behaviors()).await;
        let mut smf_config = net.sidecar_config("smf", "SMF", &smf_server.url(), vec![], vec![]);
        let mut amf_config = net.sidecar_config(
            "amf",
            "AMF",
            "http://127.0.0.1:9",
            vec![RouteRule::new("/nsmf-pdusession/", smf_did)],
            vec![claims(&[("producer", "SMF")])],
        );
        tweak(&mut amf_config, &mut smf_config);
        let smf = launch(smf_config.clone(), net.deps()).await.unwrap();
        let amf = launch(amf_config.clone(), net.deps()).await.unwrap();
        amf.sidecar.obtain_credentials().await.unwrap();
        Self {
            net,
            smf_nf,
            smf_server,
            smf_config,
            smf: Some(smf),
            amf_config,
            amf: Some(amf),
        }
    }

    pub fn amf(&self) -> &RunningSidecar {
        self.amf.as_ref().unwrap()
    }

    pub fn smf(&self) -> &RunningSidecar {
        self.smf.as_ref().unwrap()
    }

    pub async fn restart(&mut self) {
        self.amf.take().unwrap().shutdown().await;
        self.smf.take().unwrap().shutdown().await;
        self.smf = Some(launch(self.smf_config.clone(), self.net.deps()).await.unwrap());
        self.amf = Some(launch(self.amf_config.clone(), self.net.deps()).await.unwrap());
    }
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().timeout(Duration::from_secs(20)).build().unwrap()
}

/// Sends a call as the AMF would, through its sidecar.
pub async fn call(base: &str, method: &str, path: &str, body: Option<serde_json::Value>) -> (u16, serde_json::Value) {
    let mut req = client()
        .request(reqwest::Method::from_bytes(method.as_bytes()).unwrap(), format!("{base}{path}"))
        .header(CALLER_HEADER, "AMF");
    if let Some(b) = body {
        req = req.json(&b);
    }
    let resp = req.send().await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.bytes().await.unwrap();
    let value = if bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}
