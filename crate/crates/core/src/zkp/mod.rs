//! Membership-proof relation and proving backends.
//!
//! The relation: public `x = (N, root)`, private `w = (rho, pk, sk, C, i, val)`
//! such that
//!
//! ```text
//! C = H(encode(sk) ∥ encode(rho))
//! N = H(encode(pk) ∥ encode(rho))
//! is_leaf_of_tree(C, i, val, root)
//! ```
//!
//! Backends implement [`ProofBackend`]. [`Groth16Backend`] is the real one;
//! [`MockBackend`] is a keyed-hash stand-in for plumbing tests and is neither
//! zero-knowledge nor sound against anyone holding the verification key.

pub mod circuit;
mod groth16;
mod mock;

use std::fmt;
use std::fs;
use std::path::Path;

use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use zeroize::Zeroizing;

use crate::config::Lambda;
use crate::encoding::{encode, DecodeError, Record, RecordWriter};
use crate::hash::{Digest, HashProfile};
use crate::kem::KemProfile;
use crate::merkle::{is_leaf_of_tree, MerkleError, MerkleTree, ValidationList};
use crate::note::{commitment_preimage, nullifier_preimage, Commitment, Note, Nullifier};

pub use groth16::Groth16Backend;
pub use mock::MockBackend;

/// Bumped whenever the circuit or any encoding it depends on changes.
pub const RELATION_VERSION: u8 = 1;

const STATEMENT_VERSION: u8 = 1;
const PROOF_VERSION: u8 = 1;
const KEY_VERSION: u8 = 1;

const TAG_NULLIFIER: u8 = 0x01;
const TAG_ROOT: u8 = 0x02;

const TAG_BACKEND: u8 = 0x01;
const TAG_FINGERPRINT: u8 = 0x02;
const TAG_BODY: u8 = 0x03;
const TAG_HASH: u8 = 0x04;
const TAG_KEM: u8 = 0x05;
const TAG_LAMBDA: u8 = 0x06;
const TAG_DEPTH: u8 = 0x07;
const TAG_SETUP_ID: u8 = 0x08;
const TAG_ROLE: u8 = 0x09;

pub const PROVING_KEY_FILE: &str = "proving.key";
pub const VERIFICATION_KEY_FILE: &str = "verification.key";
pub const FINGERPRINT_FILE: &str = "fingerprint.hex";

/// Which relation instance a CRS is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationConfig {
    pub hash_profile: HashProfile,
    pub kem_profile: KemProfile,
    pub lambda: Lambda,
    pub depth: u32,
}

impl RelationConfig {
    pub fn new(hash_profile: HashProfile, kem_profile: KemProfile, lambda: Lambda, depth: u32) -> Self {
        Self {
            hash_profile,
            kem_profile,
            lambda,
            depth,
        }
    }

    pub fn validate(&self) -> Result<(), ZkpError> {
        if !(1..=crate::merkle::MAX_DEPTH).contains(&self.depth) {
            return Err(ZkpError::UnsupportedConfig(format!("depth {} outside 1..=32", self.depth)));
        }
        Ok(())
    }

    /// Binds a key or proof to this configuration under `backend`.
    pub fn fingerprint(&self, backend: BackendKind) -> Digest {
        let mut h = Sha256::new();
        h.update(encode(b"anonkey/membership"));
        h.update([
            RELATION_VERSION,
            backend.id(),
            self.hash_profile.id(),
            self.kem_profile.id(),
        ]);
        h.update(self.lambda.bits().to_be_bytes());
        h.update(self.depth.to_be_bytes());
        Digest(h.finalize().into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Groth16,
    Mock,
}

impl BackendKind {
    pub fn id(self) -> u8 {
        match self {
            BackendKind::Groth16 => 1,
            BackendKind::Mock => 0xee,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(BackendKind::Groth16),
            0xee => Some(BackendKind::Mock),
            _ => None,
        }
    }

    pub fn backend(self) -> &'static dyn ProofBackend {
        match self {
            BackendKind::Groth16 => &Groth16Backend,
            BackendKind::Mock => &MockBackend,
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Groth16 => "groth16",
            BackendKind::Mock => "mock",
        })
    }
}

/// Which part of the relation a witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clause {
    /// Lengths or encodings do not fit the relation configuration.
    Shape,
    Commitment,
    Nullifier,
    Membership,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::Shape => "shape",
            Clause::Commitment => "commitment",
            Clause::Nullifier => "nullifier",
            Clause::Membership => "membership",
        })
    }
}

#[derive(Debug, Error)]
pub enum ZkpError {
    #[error("unsupported relation configuration: {0}")]
    UnsupportedConfig(String),
    #[error("witness does not satisfy the {0} clause")]
    Unsatisfied(Clause),
    #[error("key fingerprint {found} does not match configuration {expected}")]
    FingerprintMismatch { expected: Digest, found: Digest },
    #[error("proving and verification keys come from different setup runs")]
    SetupMismatch,
    #[error("key belongs to backend {found}, expected {expected}")]
    BackendMismatch { expected: BackendKind, found: BackendKind },
    #[error("malformed encoding: {0}")]
    Malformed(#[from] DecodeError),
    #[error("constraint synthesis failed: {0}")]
    Synthesis(String),
    #[error("key serialization failed: {0}")]
    Serialization(String),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How toxic waste is sampled during setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetupMode {
    Production,
    /// Fixed seed: anyone knowing it can forge proofs. Tests only.
    Test { seed: u64 },
}

impl SetupMode {
    pub(crate) fn rng(self) -> rand_chacha::ChaCha20Rng {
        use rand::SeedableRng;
        match self {
            SetupMode::Production => rand_chacha::ChaCha20Rng::from_entropy(),
            SetupMode::Test { seed } => {
                log::warn!("setup in TEST mode with fixed seed {seed}: the resulting CRS is NOT secure");
                rand_chacha::ChaCha20Rng::seed_from_u64(seed)
            }
        }
    }
}

/// Public statement `x = (N, root)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Statement {
    pub nullifier: Nullifier,
    pub root: Digest,
}

impl Statement {
    pub fn new(nullifier: Nullifier, root: Digest) -> Self {
        Self { nullifier, root }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        RecordWriter::new(STATEMENT_VERSION)
            .field(TAG_NULLIFIER, &self.nullifier.0 .0)
            .field(TAG_ROOT, &self.root.0)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let rec = Record::parse(bytes, STATEMENT_VERSION)?;
        rec.expect_only(&[TAG_NULLIFIER, TAG_ROOT])?;
        Ok(Self {
            nullifier: Nullifier(Digest(rec.get_array(TAG_NULLIFIER)?)),
            root: Digest(rec.get_array(TAG_ROOT)?),
        })
    }
}

/// Private witness `w = (rho, pk, sk, C, i, val)` with keys in canonical
/// byte form.
#[derive(Clone)]
pub struct Witness {
    pub rho: Zeroizing<Vec<u8>>,
    pub pk: Vec<u8>,
    pub sk: Zeroizing<Vec<u8>>,
    pub commitment: Commitment,
    pub leaf_index: u64,
    pub validation_list: ValidationList,
}

impl fmt::Debug for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Witness")
            .field("commitment", &self.commitment)
            .field("leaf_index", &self.leaf_index)
            .finish_non_exhaustive()
    }
}

impl Witness {
    pub fn new(note: &Note, commitment: Commitment, leaf_index: u64, validation_list: ValidationList) -> Self {
        Self {
            rho: Zeroizing::new(note.rho().to_vec()),
            pk: note.public_key().canonical_bytes(),
            sk: note.secret_key().canonical_bytes(),
            commitment,
            leaf_index,
            validation_list,
        }
    }
}

/// Builds the statement and witness for `note` against the current state of
/// `tree`.
pub fn instance_for(note: &Note, tree: &MerkleTree) -> Result<(Statement, Witness), ZkpError> {
    let profile = tree.profile();
    let commitment = note.commitment(profile);
    let index = tree.get_index_of(&commitment.0)?;
    let val = tree.validation_list(index)?;
    let x = Statement::new(note.nullifier(profile), tree.get_root());
    Ok((x, Witness::new(note, commitment, index, val)))
}

/// Evaluates the relation natively, reporting the first violated clause.
pub fn check_relation(config: &RelationConfig, x: &Statement, w: &Witness) -> Result<(), Clause> {
    let h = config.hash_profile;
    let shape_ok = w.rho.len() == config.lambda.bytes()
        && w.pk.len() == config.kem_profile.public_key_len()
        && w.sk.len() == config.kem_profile.secret_key_len()
        && w.validation_list.len() == config.depth as usize
        && w.leaf_index < (1u64 << config.depth)
        && h.validate(&x.nullifier.0).is_ok()
        && h.validate(&x.root).is_ok()
        && h.validate(&w.commitment.0).is_ok()
        && w.validation_list.siblings.iter().all(|s| h.validate(s).is_ok());
    if !shape_ok {
        return Err(Clause::Shape);
    }
    if h.hash(&commitment_preimage(&w.sk, &w.rho)) != w.commitment.0 {
        return Err(Clause::Commitment);
    }
    if h.hash(&nullifier_preimage(&w.pk, &w.rho)) != x.nullifier.0 {
        return Err(Clause::Nullifier);
    }
    if !is_leaf_of_tree(h, &w.commitment.0, w.leaf_index, &w.validation_list, &x.root) {
        return Err(Clause::Membership);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub backend: BackendKind,
    pub fingerprint: Digest,
    pub body: Vec<u8>,
}

impl Proof {
    pub fn to_bytes(&self) -> Vec<u8> {
        RecordWriter::new(PROOF_VERSION)
            .field(TAG_BACKEND, &[self.backend.id()])
            .field(TAG_FINGERPRINT, &self.fingerprint.0)
            .field(TAG_BODY, &self.body)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let rec = Record::parse(bytes, PROOF_VERSION)?;
        rec.expect_only(&[TAG_BACKEND, TAG_FINGERPRINT, TAG_BODY])?;
        Ok(Self {
            backend: parse_backend(&rec)?,
            fingerprint: Digest(rec.get_array(TAG_FINGERPRINT)?),
            body: rec.get(TAG_BODY)?.to_vec(),
        })
    }
}

fn parse_backend(rec: &Record<'_>) -> Result<BackendKind, DecodeError> {
    let id = rec.get_u8(TAG_BACKEND)?;
    BackendKind::from_id(id).ok_or(DecodeError::InvalidField {
        tag: TAG_BACKEND,
        reason: format!("unknown backend {id}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyRole {
    Proving,
    Verification,
}

/// Header and opaque body shared by both key halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub backend: BackendKind,
    pub config: RelationConfig,
    pub fingerprint: Digest,
    /// Random per setup run; both halves of one CRS carry the same value.
    pub setup_id: [u8; 32],
    pub body: Vec<u8>,
}

impl KeyMaterial {
    fn to_bytes(&self, role: KeyRole) -> Vec<u8> {
        RecordWriter::new(KEY_VERSION)
            .field(TAG_ROLE, &[role as u8])
            .field(TAG_BACKEND, &[self.backend.id()])
            .field(TAG_HASH, &[self.config.hash_profile.id()])
            .field(TAG_KEM, &[self.config.kem_profile.id()])
            .field(TAG_LAMBDA, &self.config.lambda.bits().to_be_bytes())
            .field(TAG_DEPTH, &self.config.depth.to_be_bytes())
            .field(TAG_FINGERPRINT, &self.fingerprint.0)
            .field(TAG_SETUP_ID, &self.setup_id)
            .field(TAG_BODY, &self.body)
            .finish()
    }

    fn from_bytes(bytes: &[u8], role: KeyRole) -> Result<Self, ZkpError> {
        let rec = Record::parse(bytes, KEY_VERSION)?;
        rec.expect_only(&[
            TAG_ROLE,
            TAG_BACKEND,
            TAG_HASH,
            TAG_KEM,
            TAG_LAMBDA,
            TAG_DEPTH,
            TAG_FINGERPRINT,
            TAG_SETUP_ID,
            TAG_BODY,
        ])?;
        if rec.get_u8(TAG_ROLE)? != role as u8 {
            return Err(DecodeError::InvalidField {
                tag: TAG_ROLE,
                reason: format!("expected a {role:?} key"),
            }
            .into());
        }
        let invalid = |tag, reason: &str| DecodeError::InvalidField {
            tag,
            reason: reason.to_owned(),
        };
        let hash_profile =
            HashProfile::from_id(rec.get_u8(TAG_HASH)?).ok_or_else(|| invalid(TAG_HASH, "unknown hash profile"))?;
        let kem_profile =
            KemProfile::from_id(rec.get_u8(TAG_KEM)?).ok_or_else(|| invalid(TAG_KEM, "unknown KEM profile"))?;
        let lambda_bits = rec.get_u32(TAG_LAMBDA)?;
        let lambda = Lambda::new(lambda_bits).map_err(|e| invalid(TAG_LAMBDA, &e.to_string()))?;
        let depth = rec.get_u32(TAG_DEPTH)?;
        let key = Self {
            backend: parse_backend(&rec)?,
            config: RelationConfig::new(hash_profile, kem_profile, lambda, depth),
            fingerprint: Digest(rec.get_array(TAG_FINGERPRINT)?),
            setup_id: rec.get_array(TAG_SETUP_ID)?,
            body: rec.get(TAG_BODY)?.to_vec(),
        };
        key.config.validate()?;
        key.check_fingerprint()?;
        Ok(key)
    }

    fn check_fingerprint(&self) -> Result<(), ZkpError> {
        let expected = self.config.fingerprint(self.backend);
        if expected != self.fingerprint {
            return Err(ZkpError::FingerprintMismatch {
                expected,
                found: self.fingerprint,
            });
        }
        Ok(())
    }
}

pub struct ProvingKey {
    pub material: KeyMaterial,
    cache: groth16::KeyCache,
}

pub struct VerificationKey {
    pub material: KeyMaterial,
    cache: groth16::KeyCache,
}

impl fmt::Debug for ProvingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProvingKey")
            .field("backend", &self.material.backend)
            .field("fingerprint", &self.material.fingerprint)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for VerificationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VerificationKey")
            .field("backend", &self.material.backend)
            .field("fingerprint", &self.material.fingerprint)
            .finish_non_exhaustive()
    }
}

impl ProvingKey {
    pub(crate) fn new(material: KeyMaterial) -> Self {
        Self {
            material,
            cache: Default::default(),
        }
    }

    pub fn config(&self) -> &RelationConfig {
        &self.material.config
    }

    pub fn backend(&self) -> BackendKind {
        self.material.backend
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.material.to_bytes(KeyRole::Proving)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ZkpError> {
        KeyMaterial::from_bytes(bytes, KeyRole::Proving).map(Self::new)
    }
}

impl VerificationKey {
    pub(crate) fn new(material: KeyMaterial) -> Self {
        Self {
            material,
            cache: Default::default(),
        }
    }

    pub fn config(&self) -> &RelationConfig {
        &self.material.config
    }

    pub fn fingerprint(&self) -> Digest {
        self.material.fingerprint
    }

    pub fn backend(&self) -> BackendKind {
        self.material.backend
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.material.to_bytes(KeyRole::Verification)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ZkpError> {
        KeyMaterial::from_bytes(bytes, KeyRole::Verification).map(Self::new)
    }
}

/// Common reference string: both key halves from one setup run.
#[derive(Debug)]
pub struct Crs {
    pub proving_key: ProvingKey,
    pub verification_key: VerificationKey,
}

impl Crs {
    pub fn fingerprint(&self) -> Digest {
        self.verification_key.material.fingerprint
    }

    pub fn config(&self) -> &RelationConfig {
        self.verification_key.config()
    }

    /// Writes the two key files and the fingerprint sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ZkpError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PROVING_KEY_FILE), self.proving_key.to_bytes())?;
        fs::write(dir.join(VERIFICATION_KEY_FILE), self.verification_key.to_bytes())?;
        fs::write(dir.join(FINGERPRINT_FILE), format!("{}\n", self.fingerprint()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ZkpError> {
        let pk = ProvingKey::from_bytes(&fs::read(dir.join(PROVING_KEY_FILE))?)?;
        let vk = VerificationKey::from_bytes(&fs::read(dir.join(VERIFICATION_KEY_FILE))?)?;
        let sidecar = fs::read_to_string(dir.join(FINGERPRINT_FILE))?;
        let sidecar = Digest::from_hex(sidecar.trim()).map_err(|e| DecodeError::InvalidField {
            tag: TAG_FINGERPRINT,
            reason: e.to_string(),
        })?;
        Self::from_parts(pk, vk, Some(sidecar))
    }

    pub fn from_parts(pk: ProvingKey, vk: VerificationKey, sidecar: Option<Digest>) -> Result<Self, ZkpError> {
        let fp = vk.material.fingerprint;
        for found in [Some(pk.material.fingerprint), sidecar].into_iter().flatten() {
            if found != fp {
                return Err(ZkpError::FingerprintMismatch { expected: fp, found });
            }
        }
        if pk.material.setup_id != vk.material.setup_id {
            return Err(ZkpError::SetupMismatch);
        }
        Ok(Self {
            proving_key: pk,
            verification_key: vk,
        })
    }
}

/// Why a proof was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    Malformed(String),
    BackendMismatch,
    FingerprintMismatch,
    /// Statement digests cannot be public inputs under this profile.
    BadStatement,
    Invalid,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Malformed(m) => write!(f, "malformed proof: {m}"),
            RejectReason::BackendMismatch => f.write_str("proof is for a different backend"),
            RejectReason::FingerprintMismatch => f.write_str("proof is for a different circuit"),
            RejectReason::BadStatement => f.write_str("statement is not encodable as public input"),
            RejectReason::Invalid => f.write_str("proof does not verify"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// The setup/prove/verify interface every proving system implements.
pub trait ProofBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn setup(&self, config: &RelationConfig, mode: SetupMode) -> Result<Crs, ZkpError>;

    /// Called only after the witness has passed [`check_relation`].
    fn prove_checked(
        &self,
        pk: &ProvingKey,
        x: &Statement,
        w: &Witness,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Vec<u8>, ZkpError>;

    /// Called only after backend and fingerprint have been matched.
    fn verify_body(&self, vk: &VerificationKey, x: &Statement, body: &[u8]) -> Verdict;
}

pub fn setup(backend: BackendKind, config: &RelationConfig, mode: SetupMode) -> Result<Crs, ZkpError> {
    config.validate()?;
    backend.backend().setup(config, mode)
}

pub fn prove(pk: &ProvingKey, x: &Statement, w: &Witness, rng: &mut dyn CryptoRngCore) -> Result<Proof, ZkpError> {
    let m = &pk.material;
    m.check_fingerprint()?;
    check_relation(&m.config, x, w).map_err(ZkpError::Unsatisfied)?;
    let body = m.backend.backend().prove_checked(pk, x, w, rng)?;
    Ok(Proof {
        backend: m.backend,
        fingerprint: m.fingerprint,
        body,
    })
}

pub fn verify(vk: &VerificationKey, x: &Statement, proof: &Proof) -> Verdict {
    let m = &vk.material;
    if proof.backend != m.backend {
        return Verdict::Reject(RejectReason::BackendMismatch);
    }
    if proof.fingerprint != m.fingerprint {
        return Verdict::Reject(RejectReason::FingerprintMismatch);
    }
    m.backend.backend().verify_body(vk, x, &proof.body)
}

/// Verifies wire bytes. Anything that does not parse is a rejection.
pub fn verify_bytes(vk: &VerificationKey, x: &Statement, proof: &[u8]) -> Verdict {
    match Proof::from_bytes(proof) {
        Ok(p) => verify(vk, x, &p),
        Err(e) => {
            log::debug!("rejecting unparseable proof: {e}");
            Verdict::Reject(RejectReason::Malformed(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::MockSource;
    use crate::note::user_init;

    pub(crate) fn fixture(config: &RelationConfig, users: usize, prover: usize) -> (Statement, Witness, MerkleTree) {
        let src = MockSource::new(77);
        let mut tree = MerkleTree::empty_tree(config.hash_profile, config.depth).unwrap();
        let notes: Vec<Note> = (0..users)
            .map(|_| user_init(config.lambda, config.kem_profile, &src).unwrap())
            .collect();
        for n in &notes {
            tree.add_leaf(n.commitment(config.hash_profile).0).unwrap();
        }
        let (x, w) = instance_for(&notes[prover], &tree).unwrap();
        (x, w, tree)
    }

    fn cfg(h: HashProfile) -> RelationConfig {
        RelationConfig::new(h, KemProfile::X25519Hpke, Lambda::L256, 4)
    }

    #[test]
    fn honest_instance_satisfies_relation() {
        for h in [HashProfile::Sha256, HashProfile::Algebraic] {
            let (x, w, _) = fixture(&cfg(h), 3, 1);
            assert_eq!(check_relation(&cfg(h), &x, &w), Ok(()));
        }
    }

    #[test]
    fn each_clause_is_reported() {
        let c = cfg(HashProfile::Algebraic);
        let (x, w, _) = fixture(&c, 3, 2);

        let mut bad = w.clone();
        bad.rho.pop();
        assert_eq!(check_relation(&c, &x, &bad), Err(Clause::Shape));

        let mut bad = w.clone();
        bad.sk[0] ^= 1;
        assert_eq!(check_relation(&c, &x, &bad), Err(Clause::Commitment));

        let mut bad_x = x;
        bad_x.nullifier = Nullifier(HashProfile::Algebraic.hash(b"other"));
        assert_eq!(check_relation(&c, &bad_x, &w), Err(Clause::Nullifier));

        let mut bad = w.clone();
        bad.leaf_index = 1;
        assert_eq!(check_relation(&c, &x, &bad), Err(Clause::Membership));
    }

    #[test]
    fn fingerprint_separates_configs() {
        let a = cfg(HashProfile::Algebraic);
        let mut b = a;
        b.depth = 5;
        let mut c = a;
        c.hash_profile = HashProfile::Sha256;
        let fps = [
            a.fingerprint(BackendKind::Groth16),
            b.fingerprint(BackendKind::Groth16),
            c.fingerprint(BackendKind::Groth16),
            a.fingerprint(BackendKind::Mock),
        ];
        for i in 0..fps.len() {
            for j in i + 1..fps.len() {
                assert_ne!(fps[i], fps[j]);
            }
        }
    }

    #[test]
    fn statement_and_proof_encodings() {
        let x = Statement::new(Nullifier(Digest([1; 32])), Digest([2; 32]));
        assert_eq!(Statement::from_bytes(&x.to_bytes()).unwrap(), x);
        let p = Proof {
            backend: BackendKind::Mock,
            fingerprint: Digest([3; 32]),
            body: vec![9; 32],
        };
        assert_eq!(Proof::from_bytes(&p.to_bytes()).unwrap(), p);
        assert!(Proof::from_bytes(&p.to_bytes()[..10]).is_err());
    }

    #[test]
    fn mock_backend_roundtrip_and_tamper() {
        let c = cfg(HashProfile::Sha256);
        let (x, w, _) = fixture(&c, 3, 0);
        let crs = setup(BackendKind::Mock, &c, SetupMode::Test { seed: 1 }).unwrap();
        let mut rng = rand::rngs::OsRng;
        let proof = prove(&crs.proving_key, &x, &w, &mut rng).unwrap();
        assert_eq!(verify(&crs.verification_key, &x, &proof), Verdict::Accept);
        let mut other = x;
        other.nullifier.0 .0[0] ^= 1;
        assert_eq!(
            verify(&crs.verification_key, &other, &proof),
            Verdict::Reject(RejectReason::Invalid)
        );
        let crs2 = setup(BackendKind::Mock, &c, SetupMode::Test { seed: 2 }).unwrap();
        assert!(!verify(&crs2.verification_key, &x, &proof).is_accept());
        assert!(matches!(
            verify_bytes(&crs.verification_key, &x, b"\x01junk"),
            Verdict::Reject(RejectReason::Malformed(_))
        ));
    }

    #[test]
    fn keys_roundtrip_and_bind_setup_run() {
        let c = cfg(HashProfile::Sha256);
        let a = setup(BackendKind::Mock, &c, SetupMode::Test { seed: 1 }).unwrap();
        let b = setup(BackendKind::Mock, &c, SetupMode::Test { seed: 2 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let loaded = Crs::load(dir.path()).unwrap();
        assert_eq!(loaded.proving_key.material, a.proving_key.material);
        let pk = ProvingKey::from_bytes(&a.proving_key.to_bytes()).unwrap();
        let vk = VerificationKey::from_bytes(&b.verification_key.to_bytes()).unwrap();
        assert!(matches!(Crs::from_parts(pk, vk, None), Err(ZkpError::SetupMismatch)));
        assert!(VerificationKey::from_bytes(&a.proving_key.to_bytes()).is_err());
    }
}
