#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use anonkey_client::{AuthService, ClientError, RemoteConfig, ServiceError, UserStore};
use anonkey_core::cert::{Certificate, CertificateAuthority, Signature, SubjectSigningKey};
use anonkey_core::entropy::{EntropySource, MockSource};
use anonkey_core::zkp::{setup, BackendKind, Crs, ProvingKey, RelationConfig, SetupMode, VerificationKey};
use anonkey_core::{Commitment, Digest, HashProfile, KemProfile, Lambda, MerkleTree};
use anonkey_server::pvs::InProcessRegistry;
use anonkey_server::{AuthServer, NullifierList, ProofValidationServer, RegisterError};
use anonkey_tunnel::{pipe, PipeEnd, ReaderSession, SessionReport};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const MAX_T: u32 = 4096;

/// AS reached through a function call, counting every request.
pub struct InProcessAuth {
    pub auth: Arc<AuthServer>,
    pk: Vec<u8>,
    vk: Vec<u8>,
    config: RemoteConfig,
    pub calls: AtomicUsize,
    pub offline: AtomicBool,
}

impl InProcessAuth {
    fn enter(&self) -> Result<(), ServiceError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.offline.load(Ordering::SeqCst) {
            return Err(ServiceError::Unavailable("connection refused".into()));
        }
        Ok(())
    }
}

impl AuthService for InProcessAuth {
    fn register(&self, cert: &Certificate, c: Commitment, sig: &Signature) -> Result<Digest, ServiceError> {
        self.enter()?;
        self.auth.register(cert, c, sig).map_err(|e| {
            let code = match e {
                RegisterError::Unauthorized(_) => "unauthorized",
                RegisterError::Full { .. } => "tree-full",
                RegisterError::Duplicate(_) => "duplicate",
                RegisterError::InvalidCommitment(_) => "invalid-commitment",
                RegisterError::Storage(_) => "storage",
            };
            ServiceError::Rejected { error: code.into(), reason: Some(e.to_string()) }
        })
    }

    fn tree(&self) -> Result<MerkleTree, ServiceError> {
        self.enter()?;
        Ok(self.auth.fetch_tree())
    }

    fn config(&self) -> Result<RemoteConfig, ServiceError> {
        self.enter()?;
        Ok(self.config.clone())
    }

    fn proving_key(&self) -> Result<ProvingKey, ServiceError> {
        self.enter()?;
        Ok(ProvingKey::from_bytes(&self.pk).unwrap())
    }

    fn verification_key(&self) -> Result<VerificationKey, ServiceError> {
        self.enter()?;
        Ok(VerificationKey::from_bytes(&self.vk).unwrap())
    }
}

pub struct World {
    pub relation: RelationConfig,
    pub crs: Crs,
    pub ca: CertificateAuthority,
    pub cert: Certificate,
    pub ck: SubjectSigningKey,
    pub auth: Arc<InProcessAuth>,
    pub pvs: Arc<ProofValidationServer>,
    pub entropy_seed: u64,
    pub users: MockSource,
}

pub fn world(backend: BackendKind, depth: u32, entropy_seed: u64) -> World {
    let relation = RelationConfig::new(HashProfile::Algebraic, KemProfile::X25519Hpke, Lambda::L256, depth);
    let crs = setup(backend, &relation, SetupMode::Test { seed: 11 }).unwrap();
    let ca = CertificateAuthority::from_secret_bytes(&[5; 32]);
    let ck = SubjectSigningKey::generate(&mut ChaCha20Rng::seed_from_u64(6));
    let cert = ca.issue("alice", &ck.verifying_key());
    let server = Arc::new(AuthServer::in_memory(relation.hash_profile, depth, ca.verifying_key()).unwrap());
    let pvs = Arc::new(ProofValidationServer::new(
        VerificationKey::from_bytes(&crs.verification_key.to_bytes()).unwrap(),
        Box::new(InProcessRegistry(server.clone())),
        NullifierList::in_memory(),
        Arc::new(MockSource::new(entropy_seed)) as Arc<dyn EntropySource>,
        MAX_T,
    ));
    let auth = Arc::new(InProcessAuth {
        auth: server,
        pk: crs.proving_key.to_bytes(),
        vk: crs.verification_key.to_bytes(),
        config: RemoteConfig { relation, backend, fingerprint: crs.fingerprint() },
        calls: AtomicUsize::new(0),
        offline: AtomicBool::new(false),
    });
    World { relation, crs, ca, cert, ck, auth, pvs, entropy_seed, users: MockSource::new(500 + entropy_seed) }
}

impl World {
    pub fn store(&self, dir: &Path) -> UserStore {
        UserStore::create(dir, b"correct horse", 1000).unwrap()
    }

    pub fn init(&self, store: &mut UserStore) -> String {
        anonkey_client::cmd_init(store, self.relation.lambda, self.relation.kem_profile, self.relation.hash_profile, &self.users)
            .unwrap()
            .id
    }

    pub fn auth(&self, store: &mut UserStore, id: &str) -> Result<Digest, ClientError> {
        anonkey_client::cmd_auth(store, id, &self.cert, &self.ck, self.auth.as_ref())
    }

    /// Starts one reader-side session on its own thread; returns the card end.
    pub fn pvs_session(&self) -> (PipeEnd, thread::JoinHandle<SessionReport>) {
        let (reader, card) = pipe();
        let pvs = self.pvs.clone();
        let handle = thread::spawn(move || ReaderSession::new(reader).run(pvs.as_ref()).unwrap());
        (card, handle)
    }
}

/// Bytes `skip..skip + len` of the ChaCha20 stream for `seed`.
pub fn chacha_stream(seed: u64, skip: usize, len: usize) -> Vec<u8> {
    let mut all = vec![0u8; skip + len];
    rand::RngCore::fill_bytes(&mut ChaCha20Rng::seed_from_u64(seed), &mut all);
    all.split_off(skip)
}
