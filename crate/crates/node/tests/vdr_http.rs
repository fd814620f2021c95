use std::sync::Arc;

use nfid_core::identity::{create_registry_did, rotate_document, self_sign, Did};
use nfid_core::testkit::keys_for;
use nfid_core::vdr::{CreateRevocationRegistry, Registry, RevocationStatus, RevokeRequest, VdrClient, VdrError};
use nfid_node::server::spawn;
use nfid_node::vdr_http::{router, HttpVdrClient};

async fn serve() -> (Arc<Registry>, HttpVdrClient, nfid_node::server::ServerHandle) {
    let registry = Arc::new(Registry::in_memory());
    let server = spawn("127.0.0.1:0", router(registry.clone())).await.unwrap();
    let client = HttpVdrClient::new(&server.url()).unwrap();
    (registry, client, server)
}

#[tokio::test]
async fn documents_round_trip_and_match_the_registry() {
    let (registry, client, _server) = serve().await;
    let keys = keys_for("vdr-http/a");
    let (did, doc) = create_registry_did(&keys, Some("http://a.example/envelope"));
    client.register(doc.clone(), self_sign(&doc, &keys)).await.unwrap();

    let (over_http, version) = client.resolve_did(&did).await.unwrap();
    assert_eq!((over_http.clone(), version), registry.resolve_did(&did).unwrap());
    assert_eq!(version, 1);

    let next = keys_for("vdr-http/a2");
    let update = rotate_document(&over_http, &next, &keys).unwrap();
    client.update(update.clone()).await.unwrap();
    let (latest, version) = client.resolve_did(&did).await.unwrap();
    assert_eq!(version, 2);
    assert_eq!(latest.signing_key, next.signing_public());
    assert_eq!(client.history(&did).await.unwrap(), registry.history(&did).unwrap());
    assert_eq!(client.history(&did).await.unwrap().len(), 2);

    // Replaying the same update is a version gap.
    assert!(matches!(client.update(update).await, Err(VdrError::VersionGap { .. })));
}

#[tokio::test]
async fn errors_keep_their_kind_over_http() {
    let (_registry, client, _server) = serve().await;
    let keys = keys_for("vdr-http/b");
    let (did, doc) = create_registry_did(&keys, None);

    let unknown = Did::registry(&keys_for("vdr-http/nobody").signing_public());
    assert!(matches!(client.resolve_did(&unknown).await, Err(VdrError::UnknownDid(_))));

    let forged = self_sign(&doc, &keys_for("vdr-http/other"));
    assert_eq!(client.register(doc.clone(), forged).await, Err(VdrError::BadSignature));

    client.register(doc.clone(), self_sign(&doc, &keys)).await.unwrap();
    assert!(matches!(
        client.register(doc.clone(), self_sign(&doc, &keys)).await,
        Err(VdrError::AlreadyRegistered(_))
    ));

    let mut tampered = rotate_document(&doc, &keys_for("vdr-http/b2"), &keys).unwrap();
    tampered.document.prev_version_hash = Some([7u8; 32]);
    tampered.signature = keys.sign(&tampered.document.canonical_bytes()).to_vec();
    assert_eq!(client.update(tampered).await, Err(VdrError::HashMismatch));
    assert_eq!(client.resolve_did(&did).await.unwrap().1, 1);
}

#[tokio::test]
async fn revocation_over_http() {
    let (registry, client, _server) = serve().await;
    let keys = keys_for("vdr-http/issuer");
    let (issuer, doc) = create_registry_did(&keys, None);
    client.register(doc.clone(), self_sign(&doc, &keys)).await.unwrap();

    let request = CreateRevocationRegistry::new(issuer.clone());
    let expected_id = request.registry_id();
    let id = client
        .create_revocation_registry(request.clone(), keys.sign(&request.signing_bytes()).to_vec())
        .await
        .unwrap();
    assert_eq!(id, expected_id);
    assert!(matches!(
        client.create_revocation_registry(request.clone(), keys.sign(&request.signing_bytes()).to_vec()).await,
        Err(VdrError::RegistryExists(_))
    ));

    assert_eq!(client.check_status(&id, "urn:cred:1").await.unwrap(), RevocationStatus::Active);

    let revoke = RevokeRequest {
        registry_id: id.clone(),
        credential_id: "urn:cred:1".into(),
    };
    let outsider = keys_for("vdr-http/outsider");
    assert!(matches!(
        client.revoke(revoke.clone(), outsider.sign(&revoke.signing_bytes()).to_vec()).await,
        Err(VdrError::BadSignature | VdrError::NotIssuer)
    ));
    client.revoke(revoke.clone(), keys.sign(&revoke.signing_bytes()).to_vec()).await.unwrap();
    assert_eq!(client.check_status(&id, "urn:cred:1").await.unwrap(), RevocationStatus::Revoked);
    assert_eq!(registry.check_status(&id, "urn:cred:1").unwrap(), RevocationStatus::Revoked);
    assert_eq!(client.check_status(&id, "urn:cred:2").await.unwrap(), RevocationStatus::Active);

    assert!(matches!(
        client.check_status("no-such-registry", "urn:cred:1").await,
        Err(VdrError::UnknownRegistry(_))
    ));
}

#[tokio::test]
async fn unreachable_registry_is_reported() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let client = HttpVdrClient::new(&format!("http://{addr}")).unwrap();
    let did = Did::registry(&keys_for("vdr-http/c").signing_public());
    assert!(matches!(client.resolve_did(&did).await, Err(VdrError::Unreachable(_))));
}
