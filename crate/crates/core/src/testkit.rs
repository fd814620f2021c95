//! Fixtures shared by tests, the harness and examples: deterministic keys, issuer
//! hierarchies and an in-process network of agents.

use std::sync::Arc;
use std::time::Duration;

use crate::canonical::sha256;
use crate::clock::{SharedClock, Timestamp};
use crate::credentials::{
    child_chain, issue_credential, issue_delegation, Claims, CredentialKind, CredentialRequest, RightSet, Signer,
    TrustPolicy, VerifiableCredential,
};
use crate::identity::{
    create_registry_did, generate_keypair, self_sign, CachingResolver, Did, DidDocument, KeyPair, ResolutionCache,
    DEFAULT_CACHE_MAX_AGE,
};
use crate::ipmf::{IpmfConfig, IpmfService, IssuanceLog, PolicyRule};
use crate::protocols::{
    shared_wallet, Agent, LocalIdentity, LoopbackTransport, MessageHandler, SecureChannel, SharedIdentity,
    SharedWallet, Verifier, Wallet,
};
use crate::vdr::{CreateRevocationRegistry, Registry, VdrClient, VdrSource};

/// Deterministic key pair for a label.
pub fn keys_for(label: &str) -> KeyPair {
    generate_keypair(Some(&sha256(label.as_bytes()))).expect("32-byte seed")
}

pub fn claims(pairs: &[(&str, &str)]) -> Claims {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Registers a fresh registry DID for `keys` and returns its document.
pub async fn register(vdr: &dyn VdrClient, keys: &KeyPair, endpoint: Option<&str>) -> DidDocument {
    let (_, doc) = create_registry_did(keys, endpoint);
    vdr.register(doc.clone(), self_sign(&doc, keys))
        .await
        .expect("fresh DID registers");
    doc
}

/// A linear chain of issuers, root first; `chain` proves the rights of the last one.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub issuers: Vec<Signer>,
    pub chain: Vec<VerifiableCredential>,
    pub registry_ids: Vec<String>,
}

impl Hierarchy {
    pub fn root(&self) -> &Did {
        &self.issuers[0].did
    }

    pub fn leaf(&self) -> &Signer {
        self.issuers.last().expect("at least a root")
    }

    pub fn depth(&self) -> usize {
        self.chain.len()
    }

    /// Issues a credential from the leaf issuer, embedding the chain.
    pub fn issue(&self, kind: CredentialKind, subject: &Did, claims: Claims, now: Timestamp) -> VerifiableCredential {
        let request = CredentialRequest::new(kind, subject.clone(), claims)
            .validity(Duration::from_secs(3600))
            .revocable_in(self.registry_ids.last().expect("registry per issuer").clone())
            .chain(self.chain.clone());
        issue_credential(self.leaf(), request, now).expect("hierarchy leaf holds every right")
    }
}

/// Builds a hierarchy with `depth` delegation links, each granting all rights.
pub async fn build_hierarchy(vdr: &dyn VdrClient, label: &str, depth: usize, now: Timestamp) -> Hierarchy {
    let mut issuers = Vec::new();
    let mut registry_ids = Vec::new();
    let mut chain: Vec<VerifiableCredential> = Vec::new();
    for level in 0..=depth {
        let keys = keys_for(&format!("{label}/ipmf/{level}/{}", uuid::Uuid::new_v4()));
        let doc = register(vdr, &keys, None).await;
        let signer = Signer::new(doc.id.clone(), keys);
        let request = CreateRevocationRegistry::new(signer.did.clone());
        let sig = signer.keys.sign(&request.signing_bytes()).to_vec();
        registry_ids.push(vdr.create_revocation_registry(request, sig).await.expect("registry"));
        if let Some(parent) = issuers.last() {
            let del = issue_delegation(
                parent,
                &signer.did,
                &RightSet::all(),
                &chain,
                Some(Duration::from_secs(3600)),
                registry_ids.get(level - 1).cloned(),
                now,
            )
            .expect("parent holds all rights");
            chain = child_chain(&del);
        }
        issuers.push(signer);
    }
    Hierarchy {
        issuers,
        chain,
        registry_ids,
    }
}

/// A registered NF-like party with a wallet.
#[derive(Clone)]
pub struct Party {
    pub identity: SharedIdentity,
    pub wallet: SharedWallet,
    pub endpoint: String,
}

impl Party {
    pub fn did(&self) -> Did {
        self.identity.did()
    }

    pub fn document(&self) -> DidDocument {
        self.identity.snapshot().document
    }

    pub fn signer(&self) -> Signer {
        self.identity.snapshot().signer()
    }
}

/// An in-memory registry plus loopback transport connecting any number of agents.
pub struct TestNet {
    pub registry: Arc<Registry>,
    pub vdr: Arc<dyn VdrClient>,
    pub transport: Arc<LoopbackTransport>,
    pub clock: SharedClock,
}

impl TestNet {
    pub fn new(clock: SharedClock) -> Self {
        let registry = Arc::new(Registry::with_clock(clock.clone()));
        Self {
            vdr: registry.clone(),
            registry,
            transport: LoopbackTransport::new(),
            clock,
        }
    }

    pub fn source(&self) -> VdrSource {
        VdrSource(self.vdr.clone())
    }

    /// A resolver with its own cache.
    pub fn resolver(&self) -> Arc<CachingResolver> {
        Arc::new(CachingResolver::new(
            Arc::new(self.source()),
            Arc::new(ResolutionCache::new(DEFAULT_CACHE_MAX_AGE, self.clock.clone())),
        ))
    }

    pub fn verifier(&self, policy: TrustPolicy) -> Arc<Verifier> {
        Arc::new(Verifier {
            policy,
            resolver: self.resolver(),
            revocation: Arc::new(self.source()),
            clock: self.clock.clone(),
        })
    }

    /// Registers a new party reachable at `loop://<name>`.
    pub async fn party(&self, name: &str) -> Party {
        let keys = keys_for(&format!("{name}/{}", uuid::Uuid::new_v4()));
        let endpoint = format!("loop://{name}");
        let doc = register(self.vdr.as_ref(), &keys, Some(&endpoint)).await;
        Party {
            identity: SharedIdentity::new(LocalIdentity::new(keys, doc)),
            wallet: shared_wallet(Wallet::new()),
            endpoint,
        }
    }

    pub fn channel(&self, party: &Party) -> Arc<SecureChannel> {
        Arc::new(SecureChannel::new(party.identity.clone(), self.resolver(), self.transport.clone()))
    }

    pub fn serve(&self, endpoint: &str, identity: SharedIdentity, handler: Arc<dyn MessageHandler>) {
        let agent = Agent::new(identity, self.resolver(), handler);
        self.transport.register(endpoint, Arc::new(agent));
    }

    /// Starts a root IPMF reachable at `loop://<name>`.
    pub async fn root_ipmf(&self, name: &str, allow_direct: bool, rules: Vec<PolicyRule>) -> Arc<IpmfService> {
        let mut config = IpmfConfig::root(name, keys_for(&format!("{name}/{}", uuid::Uuid::new_v4())));
        config.allow_direct_issuance = allow_direct;
        config.issuance_policy = rules;
        self.start_ipmf(config).await
    }

    /// Starts a child of `parent` holding `rights`.
    pub async fn child_ipmf(
        &self,
        parent: &IpmfService,
        name: &str,
        rights: RightSet,
        rules: Vec<PolicyRule>,
    ) -> Arc<IpmfService> {
        let mut config = IpmfConfig::root(name, keys_for(&format!("{name}/{}", uuid::Uuid::new_v4())));
        let del = parent.delegate_to_child(&config.did, rights).expect("delegation within rights");
        config.parent_chain = child_chain(&del);
        config.issuance_policy = rules;
        self.start_ipmf(config).await
    }

    pub async fn start_ipmf(&self, mut config: IpmfConfig) -> Arc<IpmfService> {
        let endpoint = format!("loop://{}", config.name);
        config.endpoint = Some(endpoint.clone());
        let service = Arc::new(
            IpmfService::start(config, self.vdr.clone(), self.resolver(), self.clock.clone(), IssuanceLog::in_memory())
                .await
                .expect("IPMF starts"),
        );
        self.serve(&endpoint, service.identity().clone(), service.clone());
        service
    }
}
