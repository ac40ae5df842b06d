mod common;

use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anonkey_core::cert::{sign, CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::MockSource;
use anonkey_core::kem::{decap, EncapsulatedKey};
use anonkey_core::merkle::TreeView;
use anonkey_core::note::user_init;
use anonkey_core::zkp::{instance_for, prove, BackendKind, SetupMode, VerificationKey};
use anonkey_core::MerkleTree;
use anonkey_server::config::ServerConfig;
use anonkey_server::http::{as_router, pvs_router, AsState, ConfigResponse, NullifiersResponse, RegisterResponse};
use anonkey_server::listener::{serve_tunnel, TunnelOptions};
use anonkey_server::pvs::{Health, HttpRegistry, RegistrySource};
use anonkey_server::{open_auth_server, open_pvs, server_setup, DataDir, RootsSnapshot};
use anonkey_tunnel::transport::DropAfter;
use anonkey_tunnel::{request_key, KeyRequest, KeyResponse, RejectCode, StreamTransport};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

struct Deployment {
    _tmp: tempfile::TempDir,
    dir: DataDir,
    ca: CertificateAuthority,
}

fn deploy(backend: BackendKind, depth: u32, mock_seed: u64) -> Deployment {
    let tmp = tempfile::tempdir().unwrap();
    let dir = DataDir::new(tmp.path());
    let ca = CertificateAuthority::from_secret_bytes(&[9; 32]);
    let mut cfg = ServerConfig::new(common::relation(depth), backend, &ca.verifying_key());
    cfg.pvs.entropy = anonkey_core::entropy::EntropyKind::Mock;
    cfg.pvs.mock_seed = mock_seed;
    server_setup(&dir, &cfg, SetupMode::Test { seed: 3 }, false).unwrap();
    Deployment { _tmp: tmp, dir, ca }
}

#[test]
fn registry_persists_and_failed_registrations_leave_bytes_identical() {
    let d = deploy(BackendKind::Mock, 2, 0);
    let ck = SubjectSigningKey::generate(&mut ChaCha20Rng::seed_from_u64(1));
    let cert = d.ca.issue("u1", &ck.verifying_key());
    let users = MockSource::new(4);
    let notes: Vec<_> = (0..5)
        .map(|_| user_init(anonkey_core::Lambda::L256, anonkey_core::KemProfile::X25519Hpke, &users).unwrap())
        .collect();
    let root = {
        let (_, auth, _) = open_auth_server(&d.dir).unwrap();
        for n in &notes[..4] {
            let c = n.commitment(anonkey_core::HashProfile::Algebraic);
            auth.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
        }
        let before = std::fs::read(d.dir.registry()).unwrap();
        let c = notes[4].commitment(anonkey_core::HashProfile::Algebraic);
        assert!(auth.register(&cert, c, &sign(&c.0 .0, &ck)).is_err(), "depth 2 holds four leaves");
        let c0 = notes[0].commitment(anonkey_core::HashProfile::Algebraic);
        assert!(auth.register(&cert, c0, &sign(&c.0 .0, &ck)).is_err());
        assert_eq!(std::fs::read(d.dir.registry()).unwrap(), before);
        auth.root()
    };
    let (_, auth, _) = open_auth_server(&d.dir).unwrap();
    assert_eq!(auth.root(), root);
    assert_eq!(auth.fetch_old_roots().len(), 4);
    assert_eq!(auth.snapshot().audit.len(), 4);
}

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
fn rest_endpoints() {
    let d = deploy(BackendKind::Mock, 3, 0);
    let (_, auth, crs) = open_auth_server(&d.dir).unwrap();
    let auth = Arc::new(auth);
    let nullifier_dir = d.dir.clone();
    let state = AsState::new(
        auth.clone(),
        &crs,
        Arc::new(move || anonkey_server::nullifiers::read_all(&nullifier_dir).unwrap_or_default()),
    );
    let base = spawn_http(as_router(state));
    let http = reqwest::blocking::Client::new();

    let ck = SubjectSigningKey::generate(&mut ChaCha20Rng::seed_from_u64(1));
    let cert = d.ca.issue("rest-user", &ck.verifying_key());
    let c = anonkey_core::HashProfile::Algebraic.hash(b"some commitment");
    let body = json!({
        "certificate": hex::encode(cert.to_bytes()),
        "commitment": c.to_hex(),
        "signature": hex::encode(sign(&c.0, &ck).0),
    });
    let resp = http.post(format!("{base}/v1/register")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 200);
    let r: RegisterResponse = resp.json().unwrap();
    assert!(r.accepted);
    assert_eq!(r.new_root, Some(auth.root()));

    let resp = http.post(format!("{base}/v1/register")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 409);
    let r: RegisterResponse = resp.json().unwrap();
    assert!(!r.accepted);
    assert_eq!(r.error.as_deref(), Some("duplicate"));

    let other = anonkey_core::HashProfile::Algebraic.hash(b"other");
    let mut forged = body.clone();
    forged["commitment"] = json!(other.to_hex());
    let resp = http.post(format!("{base}/v1/register")).json(&forged).send().unwrap();
    assert_eq!(resp.status(), 403);

    let view: TreeView = http.get(format!("{base}/v1/tree")).send().unwrap().json().unwrap();
    assert_eq!(view.next_free, 1);
    let tree = MerkleTree::from_view(&view).unwrap();
    let snap = http.get(format!("{base}/v1/tree/snapshot")).send().unwrap().bytes().unwrap();
    assert_eq!(MerkleTree::from_snapshot(&snap).unwrap().get_root(), tree.get_root());

    let roots: RootsSnapshot = http.get(format!("{base}/v1/old-roots")).send().unwrap().json().unwrap();
    assert_eq!(roots.old_roots.len(), 1);
    assert_eq!(roots.root, tree.get_root());
    assert_eq!(HttpRegistry::new(&base).fetch().unwrap(), roots);

    let vk = http.get(format!("{base}/v1/vk")).send().unwrap().bytes().unwrap();
    assert_eq!(VerificationKey::from_bytes(&vk).unwrap().fingerprint(), crs.fingerprint());
    let cfg: ConfigResponse = http.get(format!("{base}/v1/config")).send().unwrap().json().unwrap();
    assert_eq!(cfg.relation, *crs.config());
    assert_eq!(cfg.fingerprint, crs.fingerprint());
    let n: NullifiersResponse = http.get(format!("{base}/v1/nullifiers")).send().unwrap().json().unwrap();
    assert!(n.nullifiers.is_empty());
}

fn tunnel_request(addr: std::net::SocketAddr, req: &KeyRequest) -> KeyResponse {
    let stream = std::net::TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
    request_key(StreamTransport::new(stream), req).unwrap()
}

#[test]
fn tunnel_sessions_against_a_deployment() {
    let seed = 21;
    let d = deploy(BackendKind::Groth16, 3, seed);
    let (_, auth, crs) = open_auth_server(&d.dir).unwrap();
    let (_, pvs) = open_pvs(&d.dir, None).unwrap();
    let pvs = Arc::new(pvs);

    let ck = SubjectSigningKey::generate(&mut ChaCha20Rng::seed_from_u64(1));
    let cert = d.ca.issue("tunnel-user", &ck.verifying_key());
    let users = MockSource::new(8);
    let notes: Vec<_> = (0..2)
        .map(|_| user_init(anonkey_core::Lambda::L256, anonkey_core::KemProfile::X25519Hpke, &users).unwrap())
        .collect();
    for n in &notes {
        let c = n.commitment(anonkey_core::HashProfile::Algebraic);
        auth.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
    }
    pvs.sync_registry().unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    {
        let pvs = pvs.clone();
        thread::spawn(move || serve_tunnel(listener, pvs, TunnelOptions::default()));
    }
    let pvs_http = spawn_http(pvs_router(pvs.clone()));

    let request = |note: &anonkey_core::Note, t: u32| {
        let (x, w) = instance_for(note, &auth.fetch_tree()).unwrap();
        KeyRequest {
            statement: x,
            proof: prove(&crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap().to_bytes(),
            t,
            pk: note.public_key().clone(),
        }
    };

    // Dropped after SELECT, LENGTH and the first chunk: nothing is spent.
    let req0 = request(&notes[0], 48);
    assert!(req0.to_bytes().len() > 250, "envelope spans several chunks");
    {
        let stream = std::net::TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let r = request_key(DropAfter::new(StreamTransport::new(stream), 3), &req0);
        assert!(r.is_err());
    }
    thread::sleep(Duration::from_millis(200));
    assert!(pvs.nullifiers().is_empty());

    let KeyResponse::Delivered(bytes) = tunnel_request(addr, &req0) else {
        panic!("expected a key")
    };
    let key = decap(&EncapsulatedKey::from_bytes(&bytes), notes[0].secret_key()).unwrap();
    let mut oracle = vec![0u8; 48];
    rand::RngCore::fill_bytes(&mut ChaCha20Rng::seed_from_u64(seed), &mut oracle);
    assert_eq!(*key, oracle);

    match tunnel_request(addr, &req0) {
        KeyResponse::Rejected(r) => assert_eq!(r.code, RejectCode::NullifierSpent),
        other => panic!("replay got {other:?}"),
    }
    match tunnel_request(addr, &request(&notes[1], 1 << 20)) {
        KeyResponse::Rejected(r) => assert_eq!(r.code, RejectCode::KeySizeOutOfRange),
        other => panic!("oversized t got {other:?}"),
    }

    let health: Health = reqwest::blocking::get(format!("{pvs_http}/v1/health")).unwrap().json().unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.nullifiers, 1);
    let n: NullifiersResponse = reqwest::blocking::get(format!("{pvs_http}/v1/nullifiers"))
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(n.nullifiers, vec![req0.statement.nullifier.0]);

    // Redemption log holds the nullifier and root, never the commitment.
    let log = std::fs::read_to_string(d.dir.redemptions()).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains(&req0.statement.nullifier.0.to_hex()));
    for note in &notes {
        assert!(!log.contains(&note.commitment(anonkey_core::HashProfile::Algebraic).0.to_hex()));
    }
    let reopened = anonkey_server::NullifierList::open(&d.dir).unwrap();
    assert!(reopened.contains(&req0.statement.nullifier));
}
