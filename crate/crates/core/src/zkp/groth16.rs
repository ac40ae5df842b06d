//! Groth16 over BN254.

use std::sync::OnceLock;

use ark_bn254::Bn254;
use ark_groth16::{Groth16, PreparedVerifyingKey};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use ark_snark::SNARK;
use rand::RngCore;
use rand_core::CryptoRngCore;

use super::circuit::{public_inputs, MembershipCircuit};
use super::{
    BackendKind, Crs, KeyMaterial, ProofBackend, ProvingKey, RejectReason, RelationConfig, SetupMode, Statement,
    VerificationKey, Verdict, Witness, ZkpError,
};

/// Compressed size of a proof: two G1 points and one G2 point.
pub const PROOF_LEN: usize = 128;

/// Parsed key halves, filled on first use.
#[derive(Default)]
pub(crate) struct KeyCache {
    pk: OnceLock<Result<ark_groth16::ProvingKey<Bn254>, String>>,
    pvk: OnceLock<Result<PreparedVerifyingKey<Bn254>, String>>,
}

pub struct Groth16Backend;

fn parsed_pk(pk: &ProvingKey) -> Result<&ark_groth16::ProvingKey<Bn254>, ZkpError> {
    pk.cache
        .pk
        .get_or_init(|| {
            // Proving keys are local and large; skip subgroup checks.
            ark_groth16::ProvingKey::deserialize_uncompressed_unchecked(&pk.material.body[..]).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| ZkpError::Serialization(e.clone()))
}

fn parsed_pvk(vk: &VerificationKey) -> Result<&PreparedVerifyingKey<Bn254>, String> {
    vk.cache
        .pvk
        .get_or_init(|| {
            let vk = ark_groth16::VerifyingKey::<Bn254>::deserialize_compressed(&vk.material.body[..])
                .map_err(|e| e.to_string())?;
            Groth16::<Bn254>::process_vk(&vk).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(Clone::clone)
}

impl ProofBackend for Groth16Backend {
    fn kind(&self) -> BackendKind {
        BackendKind::Groth16
    }

    fn setup(&self, config: &RelationConfig, mode: SetupMode) -> Result<Crs, ZkpError> {
        let mut rng = mode.rng();
        let mut setup_id = [0u8; 32];
        rng.fill_bytes(&mut setup_id);
        let (pk, vk) = Groth16::<Bn254>::circuit_specific_setup(MembershipCircuit::blank(*config), &mut rng)
            .map_err(|e| ZkpError::Synthesis(e.to_string()))?;

        let mut pk_body = Vec::new();
        pk.serialize_uncompressed(&mut pk_body)
            .map_err(|e| ZkpError::Serialization(e.to_string()))?;
        let mut vk_body = Vec::new();
        vk.serialize_compressed(&mut vk_body)
            .map_err(|e| ZkpError::Serialization(e.to_string()))?;

        let material = |body| KeyMaterial {
            backend: BackendKind::Groth16,
            config: *config,
            fingerprint: config.fingerprint(BackendKind::Groth16),
            setup_id,
            body,
        };
        let proving_key = ProvingKey::new(material(pk_body));
        let _ = proving_key.cache.pk.set(Ok(pk));
        let verification_key = VerificationKey::new(material(vk_body));
        Ok(Crs {
            proving_key,
            verification_key,
        })
    }

    fn prove_checked(
        &self,
        pk: &ProvingKey,
        x: &Statement,
        w: &Witness,
        mut rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<u8>, ZkpError> {
        let key = parsed_pk(pk)?;
        let circuit = MembershipCircuit::new(pk.material.config, *x, w.clone());
        let proof = Groth16::<Bn254>::prove(key, circuit, &mut rng).map_err(|e| ZkpError::Synthesis(e.to_string()))?;
        let mut out = Vec::with_capacity(PROOF_LEN);
        proof
            .serialize_compressed(&mut out)
            .map_err(|e| ZkpError::Serialization(e.to_string()))?;
        Ok(out)
    }

    fn verify_body(&self, vk: &VerificationKey, x: &Statement, body: &[u8]) -> Verdict {
        let pvk = match parsed_pvk(vk) {
            Ok(p) => p,
            Err(e) => {
                log::error!("unusable verification key: {e}");
                return Verdict::Reject(RejectReason::Malformed(format!("verification key: {e}")));
            }
        };
        let Some(inputs) = public_inputs(vk.material.config.hash_profile, x) else {
            return Verdict::Reject(RejectReason::BadStatement);
        };
        if body.len() != PROOF_LEN {
            return Verdict::Reject(RejectReason::Malformed(format!(
                "proof body is {} bytes, expected {PROOF_LEN}",
                body.len()
            )));
        }
        let proof = match ark_groth16::Proof::<Bn254>::deserialize_compressed(body) {
            Ok(p) => p,
            Err(e) => return Verdict::Reject(RejectReason::Malformed(e.to_string())),
        };
        match Groth16::<Bn254>::verify_with_processed_vk(pvk, &inputs, &proof) {
            Ok(true) => Verdict::Accept,
            Ok(false) => Verdict::Reject(RejectReason::Invalid),
            Err(e) => Verdict::Reject(RejectReason::Malformed(e.to_string())),
        }
    }
}
