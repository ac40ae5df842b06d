#![allow(dead_code)]

use std::sync::Arc;

use anonkey_core::cert::{sign, Certificate, CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::{EntropySource, MockSource};
use anonkey_core::kem::KemProfile;
use anonkey_core::note::user_init;
use anonkey_core::zkp::{instance_for, prove, setup, BackendKind, Crs, RelationConfig, SetupMode, Statement};
use anonkey_core::{HashProfile, Lambda, Note};
use anonkey_server::pvs::InProcessRegistry;
use anonkey_server::{AuthServer, NullifierList, ProofValidationServer};
use anonkey_tunnel::KeyRequest;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct Fixture {
    pub relation: RelationConfig,
    pub crs: Crs,
    pub ca: CertificateAuthority,
    pub cert: Certificate,
    pub ck: SubjectSigningKey,
    pub auth: Arc<AuthServer>,
    pub pvs: Arc<ProofValidationServer>,
    pub users: MockSource,
}

pub fn relation(depth: u32) -> RelationConfig {
    RelationConfig::new(HashProfile::Algebraic, KemProfile::X25519Hpke, Lambda::L256, depth)
}

pub fn fixture(backend: BackendKind, depth: u32, entropy_seed: u64) -> Fixture {
    let relation = relation(depth);
    let crs = setup(backend, &relation, SetupMode::Test { seed: 1 }).unwrap();
    let ca = CertificateAuthority::from_secret_bytes(&[7; 32]);
    let ck = SubjectSigningKey::generate(&mut ChaCha20Rng::seed_from_u64(2));
    let cert = ca.issue("tester", &ck.verifying_key());
    let auth = Arc::new(AuthServer::in_memory(relation.hash_profile, depth, ca.verifying_key()).unwrap());
    let pvs = Arc::new(ProofValidationServer::new(
        anonkey_core::zkp::VerificationKey::from_bytes(&crs.verification_key.to_bytes()).unwrap(),
        Box::new(InProcessRegistry(auth.clone())),
        NullifierList::in_memory(),
        Arc::new(MockSource::new(entropy_seed)) as Arc<dyn EntropySource>,
        65536,
    ));
    Fixture {
        relation,
        crs,
        ca,
        cert,
        ck,
        auth,
        pvs,
        users: MockSource::new(1000 + entropy_seed),
    }
}

impl Fixture {
    pub fn new_user(&self) -> Note {
        user_init(self.relation.lambda, self.relation.kem_profile, &self.users).unwrap()
    }

    pub fn register(&self, note: &Note) {
        let c = note.commitment(self.relation.hash_profile);
        self.auth.register(&self.cert, c, &sign(&c.0 .0, &self.ck)).unwrap();
    }

    /// Proof against the AS's current tree.
    pub fn prove(&self, note: &Note) -> (Statement, Vec<u8>) {
        let (x, w) = instance_for(note, &self.auth.fetch_tree()).unwrap();
        let proof = prove(&self.crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
        (x, proof.to_bytes())
    }

    pub fn request(&self, note: &Note, t: u32) -> KeyRequest {
        let (statement, proof) = self.prove(note);
        KeyRequest {
            statement,
            proof,
            t,
            pk: note.public_key().clone(),
        }
    }
}
