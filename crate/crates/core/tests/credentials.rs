use std::sync::Arc;
use std::time::Duration;

use nfid_core::clock::{ManualClock, SharedClock, Timestamp};
use nfid_core::credentials::{
    build_presentation, child_chain, issue_credential, issue_delegation, verify_presentation, CredentialKind,
    CredentialRequest, FailureCode, Right, RightSet, Signer, TrustPolicy, VerifiableCredential,
    VerifiablePresentation,
};
use nfid_core::identity::{generate_keypair, Did};
use nfid_core::protocols::fresh_challenge;
use nfid_core::testkit::{build_hierarchy, claims, keys_for, register, Hierarchy, TestNet};
use nfid_core::vdr::RevokeRequest;
use proptest::prelude::*;

const T0: Timestamp = Timestamp(1_700_000_000_000);

fn net() -> (TestNet, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(T0));
    let shared: SharedClock = clock.clone();
    (TestNet::new(shared), clock)
}

async fn holder(net: &TestNet, label: &str) -> Signer {
    let keys = keys_for(&format!("holder/{label}/{}", uuid::Uuid::new_v4()));
    let doc = register(net.vdr.as_ref(), &keys, None).await;
    Signer::new(doc.id, keys)
}

async fn verify(net: &TestNet, vp: &VerifiablePresentation, challenge: &[u8; 32], roots: &[Did]) -> Vec<FailureCode> {
    let policy = TrustPolicy::trusting(roots.iter().cloned());
    let verdict = verify_presentation(
        vp,
        challenge,
        &policy,
        net.resolver().as_ref(),
        &net.source(),
        net.clock.now(),
    )
    .await
    .expect("no infrastructure failure");
    assert_eq!(verdict.ok, verdict.failures.is_empty());
    let mut f = verdict.failures;
    f.sort();
    f
}

fn resign(vp: &mut VerifiablePresentation, holder: &Signer) {
    vp.proof = holder.keys.sign(&vp.signing_bytes()).to_vec();
}

struct Fixture {
    net: TestNet,
    hierarchy: Hierarchy,
    holder: Signer,
    vp: VerifiablePresentation,
    challenge: [u8; 32],
}

async fn fixture(depth: usize) -> Fixture {
    let (net, _) = net();
    let hierarchy = build_hierarchy(net.vdr.as_ref(), "fx", depth, T0).await;
    let holder = holder(&net, "nf").await;
    let authn = hierarchy.issue(CredentialKind::AuthN, &holder.did, claims(&[("nf_type", "AMF")]), T0);
    let authz = hierarchy.issue(
        CredentialKind::AuthZ,
        &holder.did,
        claims(&[("producer", "SMF"), ("service", "nsmf-pdusession"), ("ops", "*")]),
        T0,
    );
    let challenge = fresh_challenge();
    let vp = build_presentation(&holder, vec![authn, authz], challenge, T0).unwrap();
    Fixture {
        net,
        hierarchy,
        holder,
        vp,
        challenge,
    }
}

#[tokio::test]
async fn combined_authn_authz_presentation_verifies() {
    for depth in 0..=3 {
        let fx = fixture(depth).await;
        let root = fx.hierarchy.root().clone();
        assert_eq!(verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await, vec![]);
        assert!(fx.vp.credentials.iter().all(|c| c.delegation_chain.len() == depth));
    }
}

#[tokio::test]
async fn challenge_freshness() {
    let fx = fixture(1).await;
    let other = fresh_challenge();
    let root = fx.hierarchy.root().clone();
    assert_eq!(
        verify(&fx.net, &fx.vp, &other, &[root]).await,
        vec![FailureCode::ChallengeMismatch]
    );
}

#[tokio::test]
async fn flipped_vc_proof_is_bad_vc_signature() {
    let mut fx = fixture(0).await;
    fx.vp.credentials[0].proof[10] ^= 0x01;
    resign(&mut fx.vp, &fx.holder);
    let root = fx.hierarchy.root().clone();
    assert_eq!(
        verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await,
        vec![FailureCode::BadVcSignature]
    );
}

#[tokio::test]
async fn flipped_vp_proof_is_bad_vp_signature() {
    let mut fx = fixture(2).await;
    fx.vp.proof[0] ^= 0x80;
    let root = fx.hierarchy.root().clone();
    assert_eq!(
        verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await,
        vec![FailureCode::BadVpSignature]
    );
}

#[tokio::test]
async fn revoke_then_verify() {
    let fx = fixture(1).await;
    let root = fx.hierarchy.root().clone();
    assert_eq!(verify(&fx.net, &fx.vp, &fx.challenge, &[root.clone()]).await, vec![]);
    let authz = &fx.vp.credentials[1];
    let r = authz.revocation.clone().unwrap();
    let req = RevokeRequest {
        registry_id: r.registry_id,
        credential_id: r.credential_id,
    };
    let sig = fx.hierarchy.leaf().keys.sign(&req.signing_bytes()).to_vec();
    fx.net.vdr.revoke(req, sig).await.unwrap();
    assert_eq!(
        verify(&fx.net, &fx.vp, &fx.challenge, &[root.clone()]).await,
        vec![FailureCode::Revoked]
    );

    // Without a revocation requirement the revoked credential is accepted.
    let mut policy = TrustPolicy::trusting([root]);
    policy.require_revocation_check = false;
    let verdict = verify_presentation(&fx.vp, &fx.challenge, &policy, fx.net.resolver().as_ref(), &fx.net.source(), T0)
        .await
        .unwrap();
    assert!(verdict.ok);
}

#[tokio::test]
async fn expiry_is_reported_independently() {
    let (net, clock) = net();
    let h = build_hierarchy(net.vdr.as_ref(), "exp", 1, T0).await;
    let nf = holder(&net, "exp").await;
    let short = issue_credential(
        h.leaf(),
        CredentialRequest::new(CredentialKind::AuthN, nf.did.clone(), claims(&[("nf_type", "UDM")]))
            .validity(Duration::from_secs(60))
            .chain(h.chain.clone()),
        T0,
    )
    .unwrap();
    let challenge = fresh_challenge();
    let vp = build_presentation(&nf, vec![short], challenge, T0).unwrap();
    let root = h.root().clone();
    assert_eq!(verify(&net, &vp, &challenge, &[root.clone()]).await, vec![]);

    // Within the 30 s skew tolerance the credential is still accepted.
    clock.advance(Duration::from_secs(80));
    assert_eq!(verify(&net, &vp, &challenge, &[root.clone()]).await, vec![]);
    clock.advance(Duration::from_secs(11));
    assert_eq!(verify(&net, &vp, &challenge, &[root]).await, vec![FailureCode::Expired]);

    // Expired and untrusted at the same time: both are reported.
    let stranger = generate_keypair(None).unwrap();
    let stranger = nfid_core::identity::create_peer_did(&stranger).0;
    let f = verify(&net, &vp, &challenge, &[stranger]).await;
    assert!(f.contains(&FailureCode::Expired));
    assert!(f.contains(&FailureCode::ChainUntrusted));
}

/// Rebuilds the chain after replacing link `i` with `forged`, re-signing every later link
/// with its legitimate issuer so that only link `i` is wrong.
fn splice(h: &Hierarchy, i: usize, forged: VerifiableCredential) -> Vec<VerifiableCredential> {
    let mut chain: Vec<VerifiableCredential> = h.chain[..i].to_vec();
    chain.push(forged);
    for j in i + 1..h.chain.len() {
        let original = &h.chain[j];
        let del = issue_delegation(
            &h.issuers[j],
            &original.subject,
            &original.rights().unwrap(),
            &chain,
            Some(Duration::from_secs(3600)),
            None,
            T0,
        );
        // issue_delegation checks authority using the forged link too; build by hand if needed.
        let del = del.unwrap_or_else(|_| {
            let mut d = original.clone();
            d.delegation_chain = chain.clone();
            d.proof = h.issuers[j].keys.sign(&d.signing_bytes()).to_vec();
            d
        });
        chain.push(del);
    }
    chain
}

fn reissue(h: &Hierarchy, vc: &VerifiableCredential, chain: Vec<VerifiableCredential>) -> VerifiableCredential {
    let mut out = vc.clone();
    out.delegation_chain = chain;
    out.proof = h.leaf().keys.sign(&out.signing_bytes()).to_vec();
    out
}

#[tokio::test]
async fn depth_three_middle_link_signed_by_wrong_key() {
    let (net, _) = net();
    let h = build_hierarchy(net.vdr.as_ref(), "mid", 3, T0).await;
    let nf = holder(&net, "mid").await;
    let vc = h.issue(CredentialKind::AuthN, &nf.did, claims(&[("nf_type", "AMF")]), T0);
    let mut forged = h.chain[1].clone();
    forged.proof = generate_keypair(None).unwrap().sign(&forged.signing_bytes()).to_vec();
    let vc = reissue(&h, &vc, splice(&h, 1, forged));
    let challenge = fresh_challenge();
    let vp = build_presentation(&nf, vec![vc], challenge, T0).unwrap();
    assert_eq!(
        verify(&net, &vp, &challenge, &[h.root().clone()]).await,
        vec![FailureCode::ChainBroken]
    );
}

#[tokio::test]
async fn escalated_link_breaks_chain() {
    let (net, _) = net();
    let root_keys = keys_for("esc/root");
    let root_doc = register(net.vdr.as_ref(), &root_keys, None).await;
    let root = Signer::new(root_doc.id.clone(), root_keys);
    let mid_keys = keys_for("esc/mid");
    let mid = Signer::new(register(net.vdr.as_ref(), &mid_keys, None).await.id, mid_keys);
    let leaf_keys = keys_for("esc/leaf");
    let leaf = Signer::new(register(net.vdr.as_ref(), &leaf_keys, None).await.id, leaf_keys);
    let narrow: RightSet = [Right::IssueAuthn, Right::Delegate].into_iter().collect();
    let d1 = issue_delegation(&root, &mid.did, &narrow, &[], None, None, T0).unwrap();
    // The library refuses the escalation, so forge it by hand.
    assert!(issue_delegation(&mid, &leaf.did, &RightSet::all(), &child_chain(&d1), None, None, T0).is_err());
    let mut d2 = d1.clone();
    d2.credential_id = "forged".into();
    d2.issuer = mid.did.clone();
    d2.subject = leaf.did.clone();
    d2.claims = claims(&[("rights", "delegate,issue_authn,issue_authz")]);
    d2.delegation_chain = vec![d1.clone()];
    d2.proof = mid.keys.sign(&d2.signing_bytes()).to_vec();
    let nf = holder(&net, "esc").await;
    let mut vc = issue_credential(
        &root,
        CredentialRequest::new(CredentialKind::AuthZ, nf.did.clone(), claims(&[("producer", "*")])),
        T0,
    )
    .unwrap();
    vc.issuer = leaf.did.clone();
    vc.delegation_chain = vec![d1, d2];
    vc.proof = leaf.keys.sign(&vc.signing_bytes()).to_vec();
    let challenge = fresh_challenge();
    let vp = build_presentation(&nf, vec![vc], challenge, T0).unwrap();
    assert_eq!(
        verify(&net, &vp, &challenge, &[root.did.clone()]).await,
        vec![FailureCode::ChainBroken]
    );
}

#[tokio::test]
async fn three_conditions_toggle_independently() {
    // 1) issuer material: VC proof made with a key that is not the issuer's.
    let mut fx = fixture(1).await;
    let root = fx.hierarchy.root().clone();
    let imposter = generate_keypair(None).unwrap();
    fx.vp.credentials[0].proof = imposter.sign(&fx.vp.credentials[0].signing_bytes()).to_vec();
    resign(&mut fx.vp, &fx.holder);
    assert_eq!(verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await, vec![FailureCode::BadVcSignature]);

    // 2) holder proof: VP signed by someone else.
    let mut fx = fixture(1).await;
    let root = fx.hierarchy.root().clone();
    fx.vp.proof = imposter.sign(&fx.vp.signing_bytes()).to_vec();
    assert_eq!(verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await, vec![FailureCode::BadVpSignature]);

    // 3) revocation.
    let fx = fixture(1).await;
    let root = fx.hierarchy.root().clone();
    let r = fx.vp.credentials[0].revocation.clone().unwrap();
    let req = RevokeRequest {
        registry_id: r.registry_id,
        credential_id: r.credential_id,
    };
    let sig = fx.hierarchy.leaf().keys.sign(&req.signing_bytes()).to_vec();
    fx.net.vdr.revoke(req, sig).await.unwrap();
    assert_eq!(verify(&fx.net, &fx.vp, &fx.challenge, &[root]).await, vec![FailureCode::Revoked]);
}

#[tokio::test]
async fn revocation_outage_is_an_error_not_a_verdict() {
    use nfid_core::vdr::{RevocationStatus, RevocationStatusSource, VdrError};
    struct Down;
    #[async_trait::async_trait]
    impl RevocationStatusSource for Down {
        async fn status(&self, _: &str, _: &str) -> Result<RevocationStatus, VdrError> {
            Err(VdrError::Unreachable("down".into()))
        }
    }
    let fx = fixture(0).await;
    let policy = TrustPolicy::trusting([fx.hierarchy.root().clone()]);
    let res = verify_presentation(&fx.vp, &fx.challenge, &policy, fx.net.resolver().as_ref(), &Down, T0).await;
    assert!(matches!(res, Err(nfid_core::credentials::VerifyError::Revocation(_))));
}

#[tokio::test]
async fn foreign_subject_cannot_be_presented() {
    let fx = fixture(0).await;
    let other = holder(&fx.net, "other").await;
    let err = build_presentation(&other, fx.vp.credentials.clone(), fx.challenge, T0).unwrap_err();
    assert_eq!(err, nfid_core::credentials::CredentialError::SubjectMismatch);
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

/// Field of the presentation to corrupt.
#[derive(Debug, Clone)]
enum Site {
    VcProof,
    VcClaim,
    VcCredentialId,
    VcIssuedAt,
    VpProof,
    Challenge,
    ChainLinkProof,
}

fn sites() -> impl Strategy<Value = Site> {
    prop_oneof![
        Just(Site::VcProof),
        Just(Site::VcClaim),
        Just(Site::VcCredentialId),
        Just(Site::VcIssuedAt),
        Just(Site::VpProof),
        Just(Site::Challenge),
        Just(Site::ChainLinkProof),
    ]
}

fn flip_char(s: &mut String, at: usize) {
    let mut bytes = s.clone().into_bytes();
    let i = at % bytes.len();
    bytes[i] = if bytes[i] == b'x' { b'y' } else { b'x' };
    *s = String::from_utf8(bytes).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_always_verifies(depth in 0usize..=5, nf_type in "[A-Z]{3,4}", slice in "[a-z]{2,6}") {
        let rt = runtime();
        let failures = rt.block_on(async {
            let (net, _) = net();
            let h = build_hierarchy(net.vdr.as_ref(), "rt", depth, T0).await;
            let nf = holder(&net, "rt").await;
            let vc = h.issue(CredentialKind::AuthN, &nf.did, claims(&[("nf_type", &nf_type), ("slice", &slice)]), T0);
            let challenge = fresh_challenge();
            let vp = build_presentation(&nf, vec![vc], challenge, T0).unwrap();
            verify(&net, &vp, &challenge, &[h.root().clone()]).await
        });
        prop_assert!(failures.is_empty(), "{:?}", failures);
    }

    #[test]
    fn any_single_mutation_is_rejected(depth in 1usize..=3, site in sites(), at in 0usize..4096, bit in 0u8..8) {
        let rt = runtime();
        let failures = rt.block_on(async {
            let fx = fixture(depth).await;
            let mut vp = fx.vp.clone();
            let vc = &mut vp.credentials[(at / 7) % 2];
            let mask = 1u8 << bit;
            match site {
                Site::VcProof => { let n = vc.proof.len(); vc.proof[at % n] ^= mask; }
                Site::VcClaim => { let v = vc.claims.values_mut().next().unwrap(); flip_char(v, at); }
                Site::VcCredentialId => flip_char(&mut vc.credential_id, at),
                Site::VcIssuedAt => vc.issued_at = Timestamp(vc.issued_at.0 ^ (1i64 << (bit as i64))),
                Site::VpProof => { let n = vp.proof.len(); vp.proof[at % n] ^= mask; }
                Site::Challenge => vp.challenge[at % 32] ^= mask,
                Site::ChainLinkProof => {
                    let link = &mut vc.delegation_chain[at % depth];
                    let n = link.proof.len();
                    link.proof[at % n] ^= mask;
                }
            }
            verify(&fx.net, &vp, &fx.challenge, &[fx.hierarchy.root().clone()]).await
        });
        prop_assert!(!failures.is_empty());
    }

    #[test]
    fn verified_chains_are_monotone(mask in proptest::collection::vec(1u8..8, 1..=5)) {
        // Each level keeps a random non-empty subset of its parent's rights.
        let rt = runtime();
        rt.block_on(async {
            let (net, _) = net();
            let mut signer = {
                let k = keys_for(&format!("mono/root/{}", uuid::Uuid::new_v4()));
                Signer::new(register(net.vdr.as_ref(), &k, None).await.id, k)
            };
            let root = signer.did.clone();
            let mut chain: Vec<VerifiableCredential> = Vec::new();
            let mut rights = RightSet::all();
            for m in &mask {
                let wanted: RightSet = Right::ALL
                    .into_iter()
                    .enumerate()
                    .filter(|(i, r)| m & (1 << i) != 0 && rights.contains(*r))
                    .map(|(_, r)| r)
                    .collect();
                let k = keys_for(&format!("mono/{}", uuid::Uuid::new_v4()));
                let child = Signer::new(register(net.vdr.as_ref(), &k, None).await.id, k);
                match issue_delegation(&signer, &child.did, &wanted, &chain, None, None, T0) {
                    Ok(del) => {
                        chain = child_chain(&del);
                        rights = wanted;
                        signer = child;
                    }
                    Err(_) => break,
                }
            }
            let kind = if rights.contains(Right::IssueAuthn) { CredentialKind::AuthN } else { CredentialKind::AuthZ };
            let nf = holder(&net, "mono").await;
            let vc = issue_credential(&signer, CredentialRequest::new(kind, nf.did.clone(), claims(&[("k", "v")])).chain(chain.clone()), T0).unwrap();
            let challenge = fresh_challenge();
            let vp = build_presentation(&nf, vec![vc], challenge, T0).unwrap();
            assert_eq!(verify(&net, &vp, &challenge, &[root]).await, vec![]);
            for pair in chain.windows(2) {
                assert!(pair[1].rights().unwrap().is_subset(&pair[0].rights().unwrap()));
            }
        });
    }
}
