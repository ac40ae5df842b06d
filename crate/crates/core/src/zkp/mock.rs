//! Keyed-hash stand-in for a proving system.
//!
//! A "proof" is HMAC-SHA256 over the fingerprint and statement under a key
//! shared by both CRS halves. It checks the witness natively before tagging,
//! so protocol flows behave as with a real backend, but it hides nothing and
//! anyone holding the verification key can forge. Never deploy it.

use hmac::{Hmac, Mac};
use rand::RngCore;
use rand_core::CryptoRngCore;
use sha2::Sha256;

use super::{
    BackendKind, Crs, KeyMaterial, ProofBackend, ProvingKey, RejectReason, RelationConfig, SetupMode, Statement,
    VerificationKey, Verdict, Witness, ZkpError,
};

pub struct MockBackend;

fn mac(key: &[u8], fingerprint: &[u8], x: &Statement) -> Hmac<Sha256> {
    let mut m = Hmac::<Sha256>::new_from_slice(key).expect("HMAC takes any key length");
    m.update(fingerprint);
    m.update(&x.to_bytes());
    m
}

impl ProofBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn setup(&self, config: &RelationConfig, mode: SetupMode) -> Result<Crs, ZkpError> {
        log::warn!("mock proving backend selected: proofs are NOT zero-knowledge and are forgeable");
        let mut rng = mode.rng();
        let mut setup_id = [0u8; 32];
        rng.fill_bytes(&mut setup_id);
        let mut secret = vec![0u8; 32];
        rng.fill_bytes(&mut secret);
        let material = KeyMaterial {
            backend: BackendKind::Mock,
            config: *config,
            fingerprint: config.fingerprint(BackendKind::Mock),
            setup_id,
            body: secret,
        };
        Ok(Crs {
            proving_key: ProvingKey::new(material.clone()),
            verification_key: VerificationKey::new(material),
        })
    }

    fn prove_checked(
        &self,
        pk: &ProvingKey,
        x: &Statement,
        _: &Witness,
        _: &mut dyn CryptoRngCore,
    ) -> Result<Vec<u8>, ZkpError> {
        let m = &pk.material;
        Ok(mac(&m.body, &m.fingerprint.0, x).finalize().into_bytes().to_vec())
    }

    fn verify_body(&self, vk: &VerificationKey, x: &Statement, body: &[u8]) -> Verdict {
        let m = &vk.material;
        match mac(&m.body, &m.fingerprint.0, x).verify_slice(body) {
            Ok(()) => Verdict::Accept,
            Err(_) => Verdict::Reject(RejectReason::Invalid),
        }
    }
}
