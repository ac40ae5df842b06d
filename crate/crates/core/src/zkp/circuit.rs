//! R1CS encoding of the membership relation over BN254.
//!
//! The byte strings `rho`, `pk` and `sk` are private `UInt8` witnesses; the
//! length prefixes of `encode` are constants fixed by the configuration. The
//! hash is generic over [`HashGadget`] so both profiles share one circuit.
//!
//! Public inputs, in order: the nullifier, then the root. Under the algebraic
//! profile each digest is one field element. Under SHA-256 each digest is two
//! field elements holding its big-endian high and low 16 bytes.

use ark_bn254::Fr;
use ark_crypto_primitives::crh::sha256::constraints::{DigestVar, Sha256Gadget};
use ark_crypto_primitives::sponge::constraints::CryptographicSpongeVar;
use ark_crypto_primitives::sponge::poseidon::constraints::PoseidonSpongeVar;
use ark_ff::PrimeField;
use ark_r1cs_std::prelude::*;
use ark_r1cs_std::fields::fp::FpVar;
use ark_relations::r1cs::{
    ConstraintSynthesizer, ConstraintSystem, ConstraintSystemRef, OptimizationGoal, SynthesisError, SynthesisMode,
};
use zeroize::Zeroizing;

use super::{RelationConfig, Statement, Witness, ZkpError};
use crate::hash::{algebraic, Digest, HashProfile, BYTES_TAG, CHUNK_BYTES, NODE_TAG};
use crate::merkle::ValidationList;
use crate::note::{Commitment, Nullifier};

/// Packs big-endian bytes into one field element (at most 31 bytes).
fn pack_be(bytes: &[UInt8<Fr>]) -> Result<FpVar<Fr>, SynthesisError> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for b in bytes.iter().rev() {
        bits.extend(b.to_bits_le()?);
    }
    Boolean::le_bits_to_fp(&bits)
}

fn len_prefix(len: usize) -> Vec<UInt8<Fr>> {
    UInt8::constant_vec(&(len as u32).to_be_bytes())
}

/// The hash `H` as seen from inside the circuit.
pub trait HashGadget {
    type Digest: Clone + CondSelectGadget<Fr>;
    /// How a digest appears among the public inputs.
    type Public;

    fn hash_bytes(cs: &ConstraintSystemRef<Fr>, data: &[UInt8<Fr>]) -> Result<Self::Digest, SynthesisError>;
    fn hash_node(cs: &ConstraintSystemRef<Fr>, l: &Self::Digest, r: &Self::Digest)
        -> Result<Self::Digest, SynthesisError>;
    fn witness_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<Self::Digest, SynthesisError>;
    fn input_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<Self::Public, SynthesisError>;
    fn enforce_public(d: &Self::Digest, p: &Self::Public) -> Result<(), SynthesisError>;
    fn value(d: &Self::Digest) -> Result<Digest, SynthesisError>;
}

pub struct PoseidonGadget;

impl PoseidonGadget {
    fn sponge(cs: &ConstraintSystemRef<Fr>, elements: &[FpVar<Fr>]) -> Result<FpVar<Fr>, SynthesisError> {
        let mut sponge = PoseidonSpongeVar::new(cs.clone(), algebraic::poseidon_config());
        sponge.absorb(&elements.to_vec())?;
        Ok(sponge.squeeze_field_elements(1)?.remove(0))
    }
}

impl HashGadget for PoseidonGadget {
    type Digest = FpVar<Fr>;
    type Public = FpVar<Fr>;

    fn hash_bytes(cs: &ConstraintSystemRef<Fr>, data: &[UInt8<Fr>]) -> Result<FpVar<Fr>, SynthesisError> {
        let mut elements = vec![
            FpVar::constant(Fr::from(BYTES_TAG)),
            FpVar::constant(Fr::from(data.len() as u64)),
        ];
        for chunk in data.chunks(CHUNK_BYTES) {
            elements.push(pack_be(chunk)?);
        }
        Self::sponge(cs, &elements)
    }

    fn hash_node(cs: &ConstraintSystemRef<Fr>, l: &FpVar<Fr>, r: &FpVar<Fr>) -> Result<FpVar<Fr>, SynthesisError> {
        Self::sponge(cs, &[FpVar::constant(Fr::from(NODE_TAG)), l.clone(), r.clone()])
    }

    fn witness_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<FpVar<Fr>, SynthesisError> {
        FpVar::new_witness(cs.clone(), || Ok(Fr::from_be_bytes_mod_order(&d.0)))
    }

    fn input_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<FpVar<Fr>, SynthesisError> {
        FpVar::new_input(cs.clone(), || Ok(Fr::from_be_bytes_mod_order(&d.0)))
    }

    fn enforce_public(d: &FpVar<Fr>, p: &FpVar<Fr>) -> Result<(), SynthesisError> {
        d.enforce_equal(p)
    }

    fn value(d: &FpVar<Fr>) -> Result<Digest, SynthesisError> {
        Ok(algebraic::field_to_digest(&d.value()?))
    }
}

pub struct Sha256HashGadget;

impl HashGadget for Sha256HashGadget {
    type Digest = DigestVar<Fr>;
    type Public = [FpVar<Fr>; 2];

    fn hash_bytes(_: &ConstraintSystemRef<Fr>, data: &[UInt8<Fr>]) -> Result<DigestVar<Fr>, SynthesisError> {
        Sha256Gadget::digest(data)
    }

    fn hash_node(
        _: &ConstraintSystemRef<Fr>,
        l: &DigestVar<Fr>,
        r: &DigestVar<Fr>,
    ) -> Result<DigestVar<Fr>, SynthesisError> {
        let mut data = l.0.clone();
        data.extend_from_slice(&r.0);
        Sha256Gadget::digest(&data)
    }

    fn witness_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<DigestVar<Fr>, SynthesisError> {
        Ok(DigestVar(UInt8::new_witness_vec(cs.clone(), &d.0)?))
    }

    fn input_digest(cs: &ConstraintSystemRef<Fr>, d: &Digest) -> Result<[FpVar<Fr>; 2], SynthesisError> {
        let [hi, lo] = split_digest(d);
        Ok([
            FpVar::new_input(cs.clone(), || Ok(hi))?,
            FpVar::new_input(cs.clone(), || Ok(lo))?,
        ])
    }

    fn enforce_public(d: &DigestVar<Fr>, p: &[FpVar<Fr>; 2]) -> Result<(), SynthesisError> {
        pack_be(&d.0[..16])?.enforce_equal(&p[0])?;
        pack_be(&d.0[16..])?.enforce_equal(&p[1])
    }

    fn value(d: &DigestVar<Fr>) -> Result<Digest, SynthesisError> {
        Ok(Digest(d.value()?))
    }
}

fn split_digest(d: &Digest) -> [Fr; 2] {
    [
        Fr::from_be_bytes_mod_order(&d.0[..16]),
        Fr::from_be_bytes_mod_order(&d.0[16..]),
    ]
}

/// Public-input vector for `x`, or `None` if a digest is not encodable
/// under the profile.
pub fn public_inputs(profile: HashProfile, x: &Statement) -> Option<Vec<Fr>> {
    match profile {
        HashProfile::Algebraic => Some(vec![
            algebraic::digest_to_field(&x.nullifier.0).ok()?,
            algebraic::digest_to_field(&x.root).ok()?,
        ]),
        HashProfile::Sha256 => {
            let mut v = split_digest(&x.nullifier.0).to_vec();
            v.extend(split_digest(&x.root));
            Some(v)
        }
    }
}

pub struct MembershipCircuit {
    pub config: RelationConfig,
    pub statement: Statement,
    pub witness: Witness,
}

impl MembershipCircuit {
    pub fn new(config: RelationConfig, statement: Statement, witness: Witness) -> Self {
        Self {
            config,
            statement,
            witness,
        }
    }

    /// Correctly shaped placeholder values, used for setup and counting.
    pub fn blank(config: RelationConfig) -> Self {
        let zero = config.hash_profile.empty_leaf();
        Self {
            config,
            statement: Statement::new(Nullifier(zero), zero),
            witness: Witness {
                rho: Zeroizing::new(vec![0; config.lambda.bytes()]),
                pk: vec![0; config.kem_profile.public_key_len()],
                sk: Zeroizing::new(vec![0; config.kem_profile.secret_key_len()]),
                commitment: Commitment(zero),
                leaf_index: 0,
                validation_list: ValidationList {
                    siblings: vec![zero; config.depth as usize],
                },
            },
        }
    }

    fn synthesize<G: HashGadget>(self, cs: ConstraintSystemRef<Fr>) -> Result<(), SynthesisError> {
        let depth = self.config.depth as usize;
        let w = &self.witness;
        if w.validation_list.len() != depth {
            return Err(SynthesisError::Unsatisfiable);
        }

        let n_pub = G::input_digest(&cs, &self.statement.nullifier.0)?;
        let root_pub = G::input_digest(&cs, &self.statement.root)?;

        let rho = UInt8::new_witness_vec(cs.clone(), &w.rho)?;
        let pk = UInt8::new_witness_vec(cs.clone(), &w.pk)?;
        let sk = UInt8::new_witness_vec(cs.clone(), &w.sk)?;

        let mut c_pre = len_prefix(sk.len());
        c_pre.extend_from_slice(&sk);
        c_pre.extend(len_prefix(rho.len()));
        c_pre.extend_from_slice(&rho);
        let commitment = G::hash_bytes(&cs, &c_pre)?;

        let mut n_pre = len_prefix(pk.len());
        n_pre.extend_from_slice(&pk);
        n_pre.extend(len_prefix(rho.len()));
        n_pre.extend_from_slice(&rho);
        let nullifier = G::hash_bytes(&cs, &n_pre)?;
        G::enforce_public(&nullifier, &n_pub)?;

        let index = FpVar::new_witness(cs.clone(), || Ok(Fr::from(w.leaf_index)))?;
        let mut bits = Vec::with_capacity(depth);
        for k in 0..depth {
            bits.push(Boolean::new_witness(cs.clone(), || Ok((w.leaf_index >> k) & 1 == 1))?);
        }
        Boolean::le_bits_to_fp(&bits)?.enforce_equal(&index)?;

        let mut acc = commitment;
        for (bit, sibling) in bits.iter().zip(&w.validation_list.siblings) {
            let sib = G::witness_digest(&cs, sibling)?;
            let left = G::Digest::conditionally_select(bit, &sib, &acc)?;
            let right = G::Digest::conditionally_select(bit, &acc, &sib)?;
            acc = G::hash_node(&cs, &left, &right)?;
        }
        G::enforce_public(&acc, &root_pub)
    }
}

impl ConstraintSynthesizer<Fr> for MembershipCircuit {
    fn generate_constraints(self, cs: ConstraintSystemRef<Fr>) -> Result<(), SynthesisError> {
        match self.config.hash_profile {
            HashProfile::Algebraic => self.synthesize::<PoseidonGadget>(cs),
            HashProfile::Sha256 => self.synthesize::<Sha256HashGadget>(cs),
        }
    }
}

/// Number of R1CS constraints for `config`.
pub fn constraint_count(config: &RelationConfig) -> Result<usize, ZkpError> {
    config.validate()?;
    let cs = ConstraintSystem::<Fr>::new_ref();
    cs.set_optimization_goal(OptimizationGoal::Constraints);
    cs.set_mode(SynthesisMode::Setup);
    MembershipCircuit::blank(*config)
        .generate_constraints(cs.clone())
        .map_err(|e| ZkpError::Synthesis(e.to_string()))?;
    Ok(cs.num_constraints())
}

/// Synthesizes the circuit with a concrete assignment and reports whether
/// every constraint holds. Skips the native pre-check that `prove` performs.
pub fn is_satisfied(config: &RelationConfig, x: &Statement, w: &Witness) -> Result<bool, ZkpError> {
    let cs = ConstraintSystem::<Fr>::new_ref();
    MembershipCircuit::new(*config, *x, w.clone())
        .generate_constraints(cs.clone())
        .map_err(|e| ZkpError::Synthesis(e.to_string()))?;
    cs.is_satisfied().map_err(|e| ZkpError::Synthesis(e.to_string()))
}

/// Runs the in-circuit byte hash on witness bytes and reads back the digest.
pub fn hash_in_circuit(profile: HashProfile, data: &[u8]) -> Result<Digest, ZkpError> {
    fn run<G: HashGadget>(data: &[u8]) -> Result<Digest, SynthesisError> {
        let cs = ConstraintSystem::<Fr>::new_ref();
        let bytes = UInt8::new_witness_vec(cs.clone(), data)?;
        let d = G::hash_bytes(&cs, &bytes)?;
        G::value(&d)
    }
    match profile {
        HashProfile::Algebraic => run::<PoseidonGadget>(data),
        HashProfile::Sha256 => run::<Sha256HashGadget>(data),
    }
    .map_err(|e| ZkpError::Synthesis(e.to_string()))
}

/// Runs the in-circuit node hash on witness digests.
pub fn hash_node_in_circuit(profile: HashProfile, l: &Digest, r: &Digest) -> Result<Digest, ZkpError> {
    fn run<G: HashGadget>(l: &Digest, r: &Digest) -> Result<Digest, SynthesisError> {
        let cs = ConstraintSystem::<Fr>::new_ref();
        let lv = G::witness_digest(&cs, l)?;
        let rv = G::witness_digest(&cs, r)?;
        G::value(&G::hash_node(&cs, &lv, &rv)?)
    }
    match profile {
        HashProfile::Algebraic => run::<PoseidonGadget>(l, r),
        HashProfile::Sha256 => run::<Sha256HashGadget>(l, r),
    }
    .map_err(|e| ZkpError::Synthesis(e.to_string()))
}
