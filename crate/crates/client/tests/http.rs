use std::sync::Arc;
use std::thread;

use anonkey_client::{cmd_auth, cmd_init, cmd_prove, AuthService, ClientError, HttpAuthService, NoteStatus, UserStore};
use anonkey_core::cert::{CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::MockSource;
use anonkey_core::zkp::{setup, verify, BackendKind, Proof, RelationConfig, SetupMode};
use anonkey_core::{HashProfile, KemProfile, Lambda};
use anonkey_server::http::{as_router, AsState};
use anonkey_server::AuthServer;
use rand::rngs::OsRng;
use rand::SeedableRng;

fn spawn_http(router: axum::Router) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{addr}")
}

#[test]
fn commands_against_the_rest_api() {
    let relation = RelationConfig::new(HashProfile::Algebraic, KemProfile::X25519Hpke, Lambda::L256, 3);
    let crs = setup(BackendKind::Groth16, &relation, SetupMode::Test { seed: 2 }).unwrap();
    let ca = CertificateAuthority::from_secret_bytes(&[3; 32]);
    let ck = SubjectSigningKey::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(4));
    let cert = ca.issue("http-user", &ck.verifying_key());
    let auth = Arc::new(AuthServer::in_memory(relation.hash_profile, 3, ca.verifying_key()).unwrap());
    let base = spawn_http(as_router(AsState::new(auth.clone(), &crs, Arc::new(Vec::new))));
    let service = HttpAuthService::new(&base).unwrap();

    let remote = service.config().unwrap();
    assert_eq!(remote.relation, relation);
    assert_eq!(remote.fingerprint, crs.fingerprint());

    let tmp = tempfile::tempdir().unwrap();
    let mut store = UserStore::create(tmp.path(), b"pw", 1000).unwrap();
    let entropy = MockSource::new(12);
    let a = cmd_init(&mut store, relation.lambda, relation.kem_profile, relation.hash_profile, &entropy).unwrap();
    let b = cmd_init(&mut store, relation.lambda, relation.kem_profile, relation.hash_profile, &entropy).unwrap();
    let root = cmd_auth(&mut store, &a.id, &cert, &ck, &service).unwrap();
    assert_eq!(root, auth.root());

    // Duplicate commitment: the AS's reason code comes back verbatim.
    let dup = anonkey_core::cert::sign(&a.commitment.0 .0, &ck);
    match service.register(&cert, a.commitment, &dup) {
        Err(anonkey_client::ServiceError::Rejected { error, .. }) => assert_eq!(error, "duplicate"),
        other => panic!("unexpected {other:?}"),
    }
    let stranger = SubjectSigningKey::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(5));
    let err = cmd_auth(&mut store, &b.id, &cert, &stranger, &service).unwrap_err();
    assert!(matches!(err, ClientError::AuthRejected { ref error, .. } if error == "unauthorized"));
    assert_eq!(store.get(&b.id).unwrap().status, NoteStatus::Created);

    let bundle = cmd_prove(&store, &a.id, 16, &service, &mut OsRng).unwrap();
    assert_eq!(bundle.statement.root, auth.root());
    assert!(verify(&crs.verification_key, &bundle.statement, &Proof::from_bytes(&bundle.proof).unwrap()).is_accept());
    // Second proof reuses the cached keys.
    assert!(store.cached_blob("pk.bin").is_some());
    cmd_prove(&store, &a.id, 16, &service, &mut OsRng).unwrap();

    let dead = HttpAuthService::new("http://127.0.0.1:9").unwrap();
    let err = cmd_auth(&mut store, &b.id, &cert, &ck, &dead).unwrap_err();
    assert!(matches!(err, ClientError::AuthUnavailable(_)));
    assert_eq!(store.get(&b.id).unwrap().status, NoteStatus::Created);
}
