//! A real deployment on loopback: AS over HTTP, PVS over a TCP tunnel,
//! users driving the client commands with their own note stores.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anonkey_client::{cmd_auth, cmd_init, cmd_prove, cmd_request_key, HttpAuthService, RequestOutcome, UserStore};
use anonkey_core::cert::{CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::{EntropyKind, MockSource};
use anonkey_core::zkp::{BackendKind, SetupMode};
use anonkey_server::http::{as_router, serve_blocking, AsState};
use anonkey_server::listener::{serve_tunnel, TunnelOptions};
use anonkey_server::pvs::HttpRegistry;
use anonkey_server::{open_auth_server, open_pvs, server_setup, DataDir, ProofValidationServer, ServerConfig};
use anonkey_tunnel::StreamTransport;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::stack::relation;

#[derive(Debug, Clone, Copy)]
pub struct DeploymentOptions {
    pub backend: BackendKind,
    pub depth: u32,
    pub users: usize,
    pub t: u32,
    pub seed: u64,
}

pub struct Deployment {
    /// Keeps the data directory alive.
    pub tmp: tempfile::TempDir,
    pub dir: DataDir,
    pub as_url: String,
    pub tunnel: SocketAddr,
    pub pvs: Arc<ProofValidationServer>,
    pub ca: CertificateAuthority,
    pub mock_seed: u64,
}

/// Sets up a fresh data directory and starts both servers in background threads.
pub fn deploy(backend: BackendKind, depth: u32, seed: u64) -> Deployment {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = DataDir::new(tmp.path().join("server"));
    let ca = CertificateAuthority::generate(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut cfg = ServerConfig::new(relation(depth), backend, &ca.verifying_key());
    cfg.pvs.entropy = EntropyKind::Mock;
    cfg.pvs.mock_seed = seed;
    server_setup(&dir, &cfg, SetupMode::Test { seed }, false).expect("server setup");

    let (_, auth, crs) = open_auth_server(&dir).expect("open AS");
    let nullifier_dir = dir.clone();
    let state = AsState::new(
        Arc::new(auth),
        &crs,
        Arc::new(move || anonkey_server::nullifiers::read_all(&nullifier_dir).unwrap_or_default()),
    );
    let http = TcpListener::bind("127.0.0.1:0").expect("bind AS");
    let as_url = format!("http://{}", http.local_addr().unwrap());
    thread::spawn(move || serve_blocking(http, as_router(state)));

    let (_, pvs) = open_pvs(&dir, Some(Box::new(HttpRegistry::new(&as_url)))).expect("open PVS");
    let pvs = Arc::new(pvs);
    let tunnel = TcpListener::bind("127.0.0.1:0").expect("bind tunnel");
    let tunnel_addr = tunnel.local_addr().unwrap();
    {
        let pvs = pvs.clone();
        thread::spawn(move || serve_tunnel(tunnel, pvs, TunnelOptions::default()));
    }
    Deployment {
        tmp,
        dir,
        as_url,
        tunnel: tunnel_addr,
        pvs,
        ca,
        mock_seed: seed,
    }
}

#[derive(Debug, Default)]
pub struct EndToEndReport {
    pub users: usize,
    pub redeemed: usize,
    /// Keys equal to the expected slice of the seeded entropy stream.
    pub oracle_matches: usize,
    pub failures: Vec<String>,
}

impl EndToEndReport {
    pub fn all_ok(&self) -> bool {
        self.failures.is_empty() && self.redeemed == self.users && self.oracle_matches == self.users
    }
}

/// Every user creates a note, registers it, proves and redeems one key.
/// Redemptions run one after another, so user `k`'s key is bytes
/// `k*t .. (k+1)*t` of the mock entropy stream.
pub fn run_end_to_end(opts: &DeploymentOptions) -> (Deployment, EndToEndReport) {
    let d = deploy(opts.backend, opts.depth, opts.seed);
    let service = HttpAuthService::new(&d.as_url).expect("http client");
    let user_entropy = MockSource::new(opts.seed.wrapping_add(100));
    let mut prover_rng = ChaCha20Rng::seed_from_u64(opts.seed.wrapping_add(200));
    let mut report = EndToEndReport { users: opts.users, ..Default::default() };
    let rel = relation(opts.depth);

    let mut stream = vec![0u8; opts.users * opts.t as usize];
    ChaCha20Rng::seed_from_u64(d.mock_seed).fill_bytes(&mut stream);

    for k in 0..opts.users {
        let outcome = (|| -> Result<Vec<u8>, String> {
            let home = d.tmp.path().join(format!("user-{k}"));
            let mut store = UserStore::create(&home, b"bench", 1000).map_err(|e| e.to_string())?;
            let ck = SubjectSigningKey::generate(&mut prover_rng);
            let cert = d.ca.issue(&format!("user-{k}"), &ck.verifying_key());
            let rec = cmd_init(&mut store, rel.lambda, rel.kem_profile, rel.hash_profile, &user_entropy)
                .map_err(|e| e.to_string())?;
            cmd_auth(&mut store, &rec.id, &cert, &ck, &service).map_err(|e| e.to_string())?;
            d.pvs.sync_registry()?;
            let bundle = cmd_prove(&store, &rec.id, opts.t, &service, &mut prover_rng).map_err(|e| e.to_string())?;
            let conn = TcpStream::connect(d.tunnel).map_err(|e| e.to_string())?;
            conn.set_read_timeout(Some(Duration::from_secs(60))).ok();
            match cmd_request_key(Some(&mut store), &bundle, StreamTransport::new(conn)).map_err(|e| e.to_string())? {
                RequestOutcome::Key(key) => Ok(key.to_vec()),
                RequestOutcome::Sealed(_) => Err("key came back sealed".into()),
            }
        })();
        match outcome {
            Ok(key) => {
                report.redeemed += 1;
                let t = opts.t as usize;
                if key == stream[k * t..(k + 1) * t] {
                    report.oracle_matches += 1;
                } else {
                    report.failures.push(format!("user {k}: key differs from the entropy oracle"));
                }
            }
            Err(e) => report.failures.push(format!("user {k}: {e}")),
        }
    }
    (d, report)
}
