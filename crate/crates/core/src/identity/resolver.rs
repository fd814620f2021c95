use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use async_trait::async_trait;

use super::{extract_document, Did, DidDocument};
use crate::clock::{SharedClock, Timestamp};

pub const DEFAULT_CACHE_MAX_AGE: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown DID {0}")]
    UnknownDid(String),
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("malformed DID {0}")]
    MalformedDid(String),
}

/// Where registry-anchored documents come from (the registry itself or a client for it).
#[async_trait]
pub trait DocumentSource: Send + Sync {
    async fn fetch_document(&self, did: &Did) -> Result<DidDocument, ResolveError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePolicy {
    CacheOk,
    ForceFresh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedDocument {
    pub document: DidDocument,
    pub fetched_at: Timestamp,
}

/// DID-document cache; concurrent readers, serialized writers.
#[derive(Debug)]
pub struct ResolutionCache {
    entries: RwLock<HashMap<Did, CachedDocument>>,
    max_age: Duration,
    clock: SharedClock,
}

impl ResolutionCache {
    pub fn new(max_age: Duration, clock: SharedClock) -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            max_age,
            clock,
        }
    }

    pub fn max_age(&self) -> Duration {
        self.max_age
    }

    /// Returns the entry only if it is not older than `max_age`.
    pub fn get_fresh(&self, did: &Did) -> Option<DidDocument> {
        let now = self.clock.now();
        let entries = self.entries.read().expect("cache lock poisoned");
        entries
            .get(did)
            .filter(|e| now.since(e.fetched_at) <= self.max_age && e.fetched_at <= now)
            .map(|e| e.document.clone())
    }

    /// Returns the entry regardless of age.
    pub fn get_any(&self, did: &Did) -> Option<CachedDocument> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(did)
            .cloned()
    }

    pub fn insert(&self, document: DidDocument) {
        let fetched_at = self.clock.now();
        self.entries.write().expect("cache lock poisoned").insert(
            document.id.clone(),
            CachedDocument {
                document,
                fetched_at,
            },
        );
    }

    pub fn invalidate(&self, did: &Did) {
        self.entries.write().expect("cache lock poisoned").remove(did);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Resolves a DID: peer DIDs locally, registry DIDs through `source` honoring `policy`.
pub async fn resolve(
    did: &Did,
    source: &dyn DocumentSource,
    cache: &ResolutionCache,
    policy: CachePolicy,
) -> Result<DidDocument, ResolveError> {
    if did.is_peer() {
        return extract_document(&did.to_string())
            .map_err(|_| ResolveError::MalformedDid(did.to_string()));
    }
    if policy == CachePolicy::CacheOk {
        if let Some(doc) = cache.get_fresh(did) {
            return Ok(doc);
        }
    }
    let doc = source.fetch_document(did).await?;
    if doc.id != *did {
        return Err(ResolveError::UnknownDid(did.to_string()));
    }
    cache.insert(doc.clone());
    Ok(doc)
}

/// Resolution handle passed around by verifiers and the envelope layer.
#[async_trait]
pub trait DidResolver: Send + Sync {
    async fn resolve(&self, did: &Did, policy: CachePolicy) -> Result<DidDocument, ResolveError>;
}

/// A [`DocumentSource`] fronted by a [`ResolutionCache`].
#[derive(Clone)]
pub struct CachingResolver {
    source: Arc<dyn DocumentSource>,
    cache: Arc<ResolutionCache>,
}

impl CachingResolver {
    pub fn new(source: Arc<dyn DocumentSource>, cache: Arc<ResolutionCache>) -> Self {
        Self { source, cache }
    }

    pub fn cache(&self) -> &Arc<ResolutionCache> {
        &self.cache
    }

    pub fn source(&self) -> &Arc<dyn DocumentSource> {
        &self.source
    }
}

impl std::fmt::Debug for CachingResolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CachingResolver").field("cache", &self.cache).finish()
    }
}

#[async_trait]
impl DidResolver for CachingResolver {
    async fn resolve(&self, did: &Did, policy: CachePolicy) -> Result<DidDocument, ResolveError> {
        resolve(did, self.source.as_ref(), &self.cache, policy).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::identity::{create_peer_did, create_registry_did, generate_keypair, rotate_document};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    #[derive(Default)]
    struct ScriptedSource {
        docs: Mutex<HashMap<Did, DidDocument>>,
        calls: AtomicUsize,
        down: std::sync::atomic::AtomicBool,
    }

    #[async_trait]
    impl DocumentSource for ScriptedSource {
        async fn fetch_document(&self, did: &Did) -> Result<DidDocument, ResolveError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.down.load(Ordering::SeqCst) {
                return Err(ResolveError::Unreachable("down".into()));
            }
            self.docs
                .lock()
                .unwrap()
                .get(did)
                .cloned()
                .ok_or_else(|| ResolveError::UnknownDid(did.to_string()))
        }
    }

    fn setup() -> (ScriptedSource, ResolutionCache, ManualClock) {
        let clock = ManualClock::new(Timestamp(1_000_000));
        let cache = ResolutionCache::new(DEFAULT_CACHE_MAX_AGE, Arc::new(clock.clone()));
        (ScriptedSource::default(), cache, clock)
    }

    #[tokio::test]
    async fn peer_dids_never_touch_the_registry() {
        let (source, cache, _) = setup();
        let (did, doc) = create_peer_did(&generate_keypair(None).unwrap());
        let got = resolve(&did, &source, &cache, CachePolicy::ForceFresh).await.unwrap();
        assert_eq!(got, doc);
        assert_eq!(source.calls.load(Ordering::SeqCst), 0);
    }

    #[tokio::test]
    async fn cache_hit_within_max_age() {
        let (source, cache, clock) = setup();
        let (did, doc) = create_registry_did(&generate_keypair(None).unwrap(), None);
        source.docs.lock().unwrap().insert(did.clone(), doc);
        resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap();
        clock.advance(Duration::from_secs(299));
        resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap();
        assert_eq!(source.calls.load(Ordering::SeqCst), 1);
        clock.advance(Duration::from_secs(2));
        resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap();
        assert_eq!(source.calls.load(Ordering::SeqCst), 2);
    }

    #[tokio::test]
    async fn force_fresh_sees_rotation_cache_ok_may_not() {
        let (source, cache, clock) = setup();
        let k1 = generate_keypair(None).unwrap();
        let k2 = generate_keypair(None).unwrap();
        let (did, v1) = create_registry_did(&k1, None);
        source.docs.lock().unwrap().insert(did.clone(), v1.clone());
        assert_eq!(resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap().version, 1);

        let v2 = rotate_document(&v1, &k2, &k1).unwrap().document;
        source.docs.lock().unwrap().insert(did.clone(), v2);
        clock.advance(Duration::from_secs(10));
        assert_eq!(resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap().version, 1);
        assert_eq!(resolve(&did, &source, &cache, CachePolicy::ForceFresh).await.unwrap().version, 2);
        // The forced fetch refreshed the cache as well.
        assert_eq!(resolve(&did, &source, &cache, CachePolicy::CacheOk).await.unwrap().version, 2);
    }

    #[tokio::test]
    async fn errors_are_propagated() {
        let (source, cache, _) = setup();
        let (did, _) = create_registry_did(&generate_keypair(None).unwrap(), None);
        assert!(matches!(
            resolve(&did, &source, &cache, CachePolicy::CacheOk).await,
            Err(ResolveError::UnknownDid(_))
        ));
        source.down.store(true, Ordering::SeqCst);
        assert!(matches!(
            resolve(&did, &source, &cache, CachePolicy::CacheOk).await,
            Err(ResolveError::Unreachable(_))
        ));
    }

    #[test]
    fn cache_never_serves_expired_entries() {
        let (_, cache, clock) = setup();
        let (_, doc) = create_registry_did(&generate_keypair(None).unwrap(), None);
        cache.insert(doc.clone());
        for step in [0u64, 100, 200, 299, 300, 301, 5000] {
            clock.set(Timestamp(1_000_000 + step as i64 * 1000));
            let hit = cache.get_fresh(&doc.id);
            assert_eq!(hit.is_some(), step <= 300, "age {step}s");
        }
        assert!(cache.get_any(&doc.id).is_some());
    }
}
