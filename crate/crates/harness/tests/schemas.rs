//! Published schemas accept what the code emits and the wire document matches the encoder.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use jsonschema::{Resource, Validator};
use nfid_core::clock::{ManualClock, SharedClock, Timestamp};
use nfid_core::credentials::{build_presentation, CredentialKind, FailureCode, Signer};
use nfid_core::envelope::{encode_wire, pack, Envelope, ProtectedHeader, ProtocolMessage};
use nfid_core::identity::{create_peer_did, generate_keypair};
use nfid_core::protocols::{
    ack, deny, message, Denial, DenyReason, IssueBody, OfferBody, PresentRequestBody,
    PresentationBody, RequestBody, ISSUE, OFFER, PRESENTATION, PRESENT_REQUEST, REGISTERED_TYPES,
    REHANDSHAKE, REQUEST, TUNNEL_REQUEST, TUNNEL_RESPONSE,
};
use nfid_core::testkit::{build_hierarchy, claims, keys_for, register, TestNet};
use nfid_harness::script::Script;
use nfid_harness::{benchmark, Topology, TopologyConfig};
use nfid_node::sidecar::{RehandshakeBody, TunnelRequest, TunnelResponse};
use serde_json::Value;

const T0: Timestamp = Timestamp(1_700_000_000_000);
const SCHEMAS: [&str; 5] = [
    "credential",
    "presentation",
    "protocol-message",
    "envelope",
    "bench-report",
];

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(name: &str) -> Value {
    let path = repo().join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap()
}

fn validator(name: &str) -> Validator {
    let mut options = jsonschema::options();
    for other in SCHEMAS {
        options.with_resource(
            format!("urn:nfid:schema:{other}"),
            Resource::from_contents(load(other)).unwrap(),
        );
    }
    options.build(&load(name)).unwrap()
}

fn assert_valid(v: &Validator, instance: &Value) {
    let errors: Vec<String> = v
        .iter_errors(instance)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{errors:#?}\n{instance}");
}

#[tokio::test]
async fn credentials_presentations_and_messages_conform() {
    let clock: SharedClock = Arc::new(ManualClock::new(T0));
    let net = TestNet::new(clock);
    let h = build_hierarchy(net.vdr.as_ref(), "schemas", 3, T0).await;
    let keys = keys_for("schemas/holder");
    let holder = Signer::new(register(net.vdr.as_ref(), &keys, None).await.id, keys);
    let vc = h.issue(
        CredentialKind::AuthZ,
        &holder.did,
        claims(&[("producer", "SMF"), ("ops", "GET")]),
        T0,
    );
    let vp = build_presentation(&holder, vec![vc.clone()], [9; 32], T0).unwrap();

    let credential = validator("credential");
    assert_valid(&credential, &serde_json::to_value(&vc).unwrap());
    for link in &vc.delegation_chain {
        assert_valid(&credential, &serde_json::to_value(link).unwrap());
    }
    assert_valid(
        &validator("presentation"),
        &serde_json::to_value(&vp).unwrap(),
    );

    let mut padded = serde_json::to_value(&vc).unwrap();
    padded["proof"] = Value::String(format!("{}==", padded["proof"].as_str().unwrap()));
    assert!(!credential.is_valid(&padded));
    let mut no_proof = serde_json::to_value(&vc).unwrap();
    no_proof.as_object_mut().unwrap().remove("proof");
    assert!(!credential.is_valid(&no_proof));
    let mut bad_kind = serde_json::to_value(&vc).unwrap();
    bad_kind["kind"] = "Admin".into();
    assert!(!credential.is_valid(&bad_kind));

    let t = "thread-1";
    let messages = vec![
        message(
            OFFER,
            t,
            &OfferBody {
                kind: CredentialKind::AuthN,
                challenge: [1; 32],
            },
        ),
        message(
            REQUEST,
            t,
            &RequestBody {
                kind: CredentialKind::AuthZ,
                claims: claims(&[("service", "x")]),
                presentation: None,
            },
        ),
        message(
            REQUEST,
            t,
            &RequestBody {
                kind: CredentialKind::AuthN,
                claims: Default::default(),
                presentation: Some(vp.clone()),
            },
        ),
        message(
            ISSUE,
            t,
            &IssueBody {
                credential: vc.clone(),
            },
        ),
        message(
            PRESENT_REQUEST,
            t,
            &PresentRequestBody {
                challenge: [2; 32],
                requested_kinds: vec![CredentialKind::AuthN, CredentialKind::AuthZ],
            },
        ),
        message(
            PRESENTATION,
            t,
            &PresentationBody {
                presentation: vp.clone(),
            },
        ),
        ack(t),
        deny(
            t,
            &Denial::new(DenyReason::Authorization, "revoked")
                .with_failures(vec![FailureCode::Revoked]),
        ),
        message(
            TUNNEL_REQUEST,
            t,
            &TunnelRequest {
                correlation_id: "c1".into(),
                method: "GET".into(),
                path: "/nudm-sdm/v2/x?y=1".into(),
                headers: vec![("accept".into(), "application/json".into())],
                body: b"{}".to_vec(),
            },
        ),
        message(
            TUNNEL_RESPONSE,
            t,
            &TunnelResponse::error("c1", 502, "stale_recipient_key", "rotate"),
        ),
        message(
            REHANDSHAKE,
            t,
            &RehandshakeBody {
                correlation_id: "c1".into(),
            },
        ),
    ];
    let schema = validator("protocol-message");
    let mut seen: Vec<&str> = messages.iter().map(|m| m.msg_type.as_str()).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(
        seen.len(),
        REGISTERED_TYPES.len(),
        "every registered type is exercised"
    );
    for m in &messages {
        assert_valid(&schema, &serde_json::to_value(m).unwrap());
    }
    // A body shaped for another type is rejected.
    let wrong = ProtocolMessage::new(OFFER, t, serde_json::json!({ "credential": vc }));
    assert!(!schema.is_valid(&serde_json::to_value(wrong).unwrap()));
    let unknown = ProtocolMessage::new("acl/9.9/unknown", t, serde_json::json!({}));
    assert!(!schema.is_valid(&serde_json::to_value(unknown).unwrap()));
}

#[test]
fn envelopes_conform() {
    let a = generate_keypair(None).unwrap();
    let b = generate_keypair(None).unwrap();
    let (a_did, _) = create_peer_did(&a);
    let (_, b_doc) = create_peer_did(&b);
    let schema = validator("envelope");
    for size in [0usize, 1, 1000] {
        let msg = ProtocolMessage::new(
            "acl/1.0/ack",
            "t",
            serde_json::json!({ "pad": "x".repeat(size) }),
        );
        let env = pack(&msg, &a, &a_did, &b_doc);
        assert_valid(&schema, &serde_json::to_value(&env).unwrap());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn bench_reports_conform() {
    let mut script = Script::bundled();
    script.steps.truncate(4);
    let topology = Topology::launch(TopologyConfig::bundled()).await.unwrap();
    let report = benchmark(&topology, &script, 2).await.unwrap();
    topology.shutdown().await;
    let schema = validator("bench-report");
    let value = serde_json::to_value(&report).unwrap();
    assert_valid(&schema, &value);
    let mut missing = value.clone();
    missing.as_object_mut().unwrap().remove("overheadPercent");
    assert!(!schema.is_valid(&missing));
}

fn documented_example() -> (String, String) {
    let doc = std::fs::read_to_string(repo().join("docs/wire-format.md")).unwrap();
    let section = doc
        .split("## Example frame")
        .nth(1)
        .expect("example section");
    let prefix = section
        .split("length prefix is `")
        .nth(1)
        .unwrap()
        .split('`')
        .next()
        .unwrap();
    let body = section
        .split("```json\n")
        .nth(1)
        .unwrap()
        .split("\n```")
        .next()
        .unwrap();
    (prefix.to_string(), body.to_string())
}

#[test]
fn wire_document_matches_the_encoder() {
    let sender = create_peer_did(&generate_keypair(Some(&[1; 32])).unwrap()).0;
    let recipient = create_peer_did(&generate_keypair(Some(&[2; 32])).unwrap()).0;
    let env = Envelope {
        protected_header: ProtectedHeader {
            sender,
            recipient,
            recipient_key_version: 1,
            content_encryption: "XC20P".into(),
            nonce: [7; 24],
        },
        wrapped_key: vec![0xaa; 48],
        ciphertext: b"hello".to_vec(),
        auth_tag: vec![0x55; 16],
    };
    let wire = encode_wire(&env);
    let (prefix, body) = documented_example();
    let hex: String = wire[..4].iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, prefix);
    assert_eq!(std::str::from_utf8(&wire[4..]).unwrap(), body);
    assert_eq!(
        u32::from_str_radix(&prefix, 16).unwrap() as usize,
        body.len()
    );
    assert_valid(
        &validator("envelope"),
        &serde_json::from_str(&body).unwrap(),
    );
}
