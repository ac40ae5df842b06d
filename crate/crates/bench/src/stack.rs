//! An AS, a PVS and a supply of users wired together in one process.

use std::sync::Arc;
use std::thread;

use anonkey_core::cert::{sign, Certificate, CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::{EntropySource, MockSource};
use anonkey_core::note::user_init;
use anonkey_core::zkp::{instance_for, prove, setup, BackendKind, Crs, Proof, RelationConfig, SetupMode, Statement, VerificationKey};
use anonkey_core::{HashProfile, KemProfile, Lambda, Note};
use anonkey_server::pvs::InProcessRegistry;
use anonkey_server::{AuthServer, NullifierList, ProofValidationServer};
use anonkey_tunnel::{
    pipe, request_key, FrameTransport, KeyRequest, KeyResponse, RateLimited, ReaderSession, SessionReport, TunnelError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const DEFAULT_MAX_T: u32 = 65536;

pub fn relation(depth: u32) -> RelationConfig {
    RelationConfig::new(HashProfile::Algebraic, KemProfile::X25519Hpke, Lambda::L256, depth)
}

pub struct Stack {
    pub relation: RelationConfig,
    pub crs: Arc<Crs>,
    pub cert: Certificate,
    pub ck: SubjectSigningKey,
    pub auth: Arc<AuthServer>,
    pub pvs: Arc<ProofValidationServer>,
    pub users: MockSource,
    rng: std::sync::Mutex<ChaCha20Rng>,
}

impl Stack {
    /// Fresh CRS, AS and PVS. Everything random derives from `seed`.
    pub fn new(backend: BackendKind, depth: u32, entropy: Arc<dyn EntropySource>, seed: u64) -> Self {
        let relation = relation(depth);
        let crs = Arc::new(setup(backend, &relation, SetupMode::Test { seed }).expect("setup"));
        Self::with_crs(crs, entropy, seed)
    }

    /// New AS and PVS around an existing CRS.
    pub fn with_crs(crs: Arc<Crs>, entropy: Arc<dyn EntropySource>, seed: u64) -> Self {
        let relation = *crs.config();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
        let ca = CertificateAuthority::generate(&mut rng);
        let ck = SubjectSigningKey::generate(&mut rng);
        let cert = ca.issue("bench-user", &ck.verifying_key());
        let auth = Arc::new(AuthServer::in_memory(relation.hash_profile, relation.depth, ca.verifying_key()).expect("tree"));
        let pvs = Arc::new(ProofValidationServer::new(
            VerificationKey::from_bytes(&crs.verification_key.to_bytes()).expect("vk"),
            Box::new(InProcessRegistry(auth.clone())),
            NullifierList::in_memory(),
            entropy,
            DEFAULT_MAX_T,
        ));
        Self {
            relation,
            crs,
            cert,
            ck,
            auth,
            pvs,
            users: MockSource::new(seed.wrapping_add(1)),
            rng: std::sync::Mutex::new(rng),
        }
    }

    pub fn new_note(&self) -> Note {
        user_init(self.relation.lambda, self.relation.kem_profile, &self.users).expect("user_init")
    }

    pub fn register(&self, note: &Note) {
        let c = note.commitment(self.relation.hash_profile);
        self.auth.register(&self.cert, c, &sign(&c.0 .0, &self.ck)).expect("register");
    }

    /// Registers a fresh note and brings the PVS up to date.
    pub fn registered_note(&self) -> Note {
        let n = self.new_note();
        self.register(&n);
        self.pvs.sync_registry().expect("sync");
        n
    }

    /// Proof against the AS's current tree, with seeded prover randomness.
    pub fn prove(&self, note: &Note) -> (Statement, Proof) {
        let (x, w) = instance_for(note, &self.auth.fetch_tree()).expect("instance");
        let mut rng = self.rng.lock().unwrap();
        let proof = prove(&self.crs.proving_key, &x, &w, &mut *rng).expect("prove");
        (x, proof)
    }

    pub fn request(&self, note: &Note, t: u32) -> KeyRequest {
        let (statement, proof) = self.prove(note);
        KeyRequest {
            statement,
            proof: proof.to_bytes(),
            t,
            pk: note.public_key().clone(),
        }
    }

    /// One full tunnel session. `rate` throttles the link in bytes per second.
    pub fn session(&self, req: &KeyRequest, rate: Option<u64>) -> (SessionReport, KeyResponse) {
        let (reader, card) = pipe();
        let req = req.clone();
        let card_side = thread::spawn(move || request_key(card, &req));
        let report = match rate {
            Some(r) => run_reader(RateLimited::new(reader, r), &self.pvs),
            None => run_reader(reader, &self.pvs),
        }
        .expect("reader session");
        let response = card_side.join().expect("card thread").expect("card session");
        (report, response)
    }
}

fn run_reader<T: FrameTransport>(t: T, pvs: &ProofValidationServer) -> Result<SessionReport, TunnelError> {
    ReaderSession::new(t).run(pvs)
}
