//! The authentication server: certificate-checked registration of commitments.

use std::sync::{Arc, Mutex, RwLock};

use anonkey_core::cert::{verify_sign, CaVerifyingKey, Certificate, Signature};
use anonkey_core::encoding::{encode, DecodeError, Record, RecordWriter};
use anonkey_core::merkle::MerkleError;
use anonkey_core::{Commitment, Digest, HashProfile, MerkleTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{unix_now, write_atomic, DataDir};

const REGISTRY_VERSION: u8 = 1;
const TAG_TREE: u8 = 0x01;
const TAG_OLD_ROOTS: u8 = 0x02;
const TAG_AUDIT: u8 = 0x03;

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("authentication failed: {0}")]
    Unauthorized(&'static str),
    #[error("tree is full ({capacity} leaves)")]
    Full { capacity: u64 },
    #[error("commitment {0} is already registered")]
    Duplicate(Digest),
    #[error("invalid commitment: {0}")]
    InvalidCommitment(String),
    #[error("could not persist registry: {0}")]
    Storage(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub subject_id: String,
    pub commitment: Digest,
    pub timestamp: u64,
}

/// Everything the AS persists. Readers always see a whole snapshot.
#[derive(Debug, Clone)]
pub struct RegistryState {
    pub tree: MerkleTree,
    /// Roots in force before each successful registration, oldest first.
    pub old_roots: Vec<Digest>,
    pub audit: Vec<AuditRecord>,
}

impl RegistryState {
    pub fn new(tree: MerkleTree) -> Self {
        Self {
            tree,
            old_roots: Vec::new(),
            audit: Vec::new(),
        }
    }

    pub fn root(&self) -> Digest {
        self.tree.get_root()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let roots: Vec<u8> = self.old_roots.iter().flat_map(|r| r.0).collect();
        let mut audit = Vec::new();
        for rec in &self.audit {
            audit.extend_from_slice(&encode(rec.subject_id.as_bytes()));
            audit.extend_from_slice(&rec.commitment.0);
            audit.extend_from_slice(&rec.timestamp.to_be_bytes());
        }
        RecordWriter::new(REGISTRY_VERSION)
            .field(TAG_TREE, &self.tree.to_snapshot())
            .field(TAG_OLD_ROOTS, &roots)
            .field(TAG_AUDIT, &audit)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let invalid = |tag, reason: String| DecodeError::InvalidField { tag, reason };
        let rec = Record::parse(bytes, REGISTRY_VERSION)?;
        rec.expect_only(&[TAG_TREE, TAG_OLD_ROOTS, TAG_AUDIT])?;
        let tree = MerkleTree::from_snapshot(rec.get(TAG_TREE)?).map_err(|e| invalid(TAG_TREE, e.to_string()))?;

        let roots = rec.get(TAG_OLD_ROOTS)?;
        if roots.len() % 32 != 0 {
            return Err(invalid(TAG_OLD_ROOTS, "length is not a multiple of 32".into()));
        }
        let old_roots = roots.chunks(32).map(|c| Digest::from_slice(c).expect("32 bytes")).collect();

        let mut audit = Vec::new();
        let mut rest = rec.get(TAG_AUDIT)?;
        while !rest.is_empty() {
            let short = || invalid(TAG_AUDIT, "truncated audit record".into());
            let len = u32::from_be_bytes(rest.get(..4).ok_or_else(short)?.try_into().expect("4 bytes")) as usize;
            let body = rest.get(4..4 + len + 40).ok_or_else(short)?;
            let subject_id = String::from_utf8(body[..len].to_vec()).map_err(|_| invalid(TAG_AUDIT, "subject id is not UTF-8".into()))?;
            audit.push(AuditRecord {
                subject_id,
                commitment: Digest::from_slice(&body[len..len + 32]).expect("32 bytes"),
                timestamp: u64::from_be_bytes(body[len + 32..].try_into().expect("8 bytes")),
            });
            rest = &rest[4 + len + 40..];
        }
        if audit.len() as u64 != tree.next_free() {
            return Err(invalid(
                TAG_AUDIT,
                format!("{} audit records for {} leaves", audit.len(), tree.next_free()),
            ));
        }
        Ok(Self { tree, old_roots, audit })
    }

    /// Root accepted for proofs: the current one or any retained old root.
    pub fn root_is_known(&self, root: &Digest) -> bool {
        self.root() == *root || self.old_roots.contains(root)
    }
}

pub struct AuthServer {
    ca: CaVerifyingKey,
    retention: Option<usize>,
    dir: Option<DataDir>,
    state: RwLock<Arc<RegistryState>>,
    writer: Mutex<()>,
}

impl AuthServer {
    pub fn in_memory(profile: HashProfile, depth: u32, ca: CaVerifyingKey) -> Result<Self, MerkleError> {
        Ok(Self::from_state(
            RegistryState::new(MerkleTree::empty_tree(profile, depth)?),
            ca,
            None,
        ))
    }

    pub fn from_state(state: RegistryState, ca: CaVerifyingKey, dir: Option<DataDir>) -> Self {
        Self {
            ca,
            retention: None,
            dir,
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
        }
    }

    /// Loads the persisted registry from `dir`.
    pub fn open(dir: DataDir, ca: CaVerifyingKey) -> Result<Self, crate::ServerError> {
        let state = load_registry(&dir)?;
        Ok(Self::from_state(state, ca, Some(dir)))
    }

    pub fn with_retention(mut self, retention: Option<usize>) -> Self {
        self.retention = retention;
        self
    }

    pub fn snapshot(&self) -> Arc<RegistryState> {
        self.state.read().expect("registry lock poisoned").clone()
    }

    pub fn fetch_tree(&self) -> MerkleTree {
        self.snapshot().tree.clone()
    }

    pub fn fetch_old_roots(&self) -> Vec<Digest> {
        self.snapshot().old_roots.clone()
    }

    pub fn root(&self) -> Digest {
        self.snapshot().root()
    }

    /// Appends `c` if `sigma` is a valid signature over it under `cert`.
    ///
    /// All of old-root push, leaf append and audit record happen together or
    /// not at all; failures leave both memory and disk untouched.
    pub fn register(&self, cert: &Certificate, c: Commitment, sigma: &Signature) -> Result<Digest, RegisterError> {
        if !cert.issuer_signature_valid(&self.ca) {
            return Err(RegisterError::Unauthorized("certificate not issued by the configured CA"));
        }
        if !verify_sign(&self.ca, cert, &c.0 .0, sigma) {
            return Err(RegisterError::Unauthorized("signature does not match the commitment"));
        }

        let _guard = self.writer.lock().expect("registry writer poisoned");
        let current = self.snapshot();
        if current.tree.is_full() {
            return Err(RegisterError::Full {
                capacity: current.tree.capacity(),
            });
        }
        let mut next = (*current).clone();
        next.old_roots.push(current.root());
        match next.tree.add_leaf(c.0) {
            Ok(_) => {}
            Err(MerkleError::Duplicate(d)) => return Err(RegisterError::Duplicate(d)),
            Err(MerkleError::Full { capacity }) => return Err(RegisterError::Full { capacity }),
            Err(e) => return Err(RegisterError::InvalidCommitment(e.to_string())),
        }
        if let Some(keep) = self.retention {
            let excess = next.old_roots.len().saturating_sub(keep);
            next.old_roots.drain(..excess);
        }
        next.audit.push(AuditRecord {
            subject_id: cert.subject_id.clone(),
            commitment: c.0,
            timestamp: unix_now(),
        });
        if let Some(dir) = &self.dir {
            write_atomic(&dir.registry(), &next.to_bytes())?;
        }
        let root = next.root();
        log::info!(
            "registered commitment for {} at leaf {}; root {}",
            cert.subject_id,
            next.tree.next_free() - 1,
            root
        );
        *self.state.write().expect("registry lock poisoned") = Arc::new(next);
        Ok(root)
    }
}

pub fn load_registry(dir: &DataDir) -> Result<RegistryState, crate::ServerError> {
    let bytes = std::fs::read(dir.registry())?;
    RegistryState::from_bytes(&bytes).map_err(|e| crate::ServerError::Corrupt(format!("registry: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use anonkey_core::cert::{sign, CertificateAuthority, SubjectSigningKey};
    use rand::SeedableRng;

    fn identity(ca: &CertificateAuthority, id: &str, seed: u64) -> (Certificate, SubjectSigningKey) {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let ck = SubjectSigningKey::generate(&mut rng);
        (ca.issue(id, &ck.verifying_key()), ck)
    }

    fn commitment(i: u8) -> Commitment {
        Commitment(HashProfile::Sha256.hash(&[i]))
    }

    #[test]
    fn registration_pushes_old_root_then_appends() {
        let ca = CertificateAuthority::from_secret_bytes(&[1; 32]);
        let server = AuthServer::in_memory(HashProfile::Sha256, 2, ca.verifying_key()).unwrap();
        let (cert, ck) = identity(&ca, "alice", 1);
        let empty_root = server.root();
        let c = commitment(0);
        let root = server.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
        let s = server.snapshot();
        assert_eq!(s.old_roots, vec![empty_root]);
        assert_eq!(s.tree.next_free(), 1);
        assert_eq!(s.audit[0].subject_id, "alice");
        assert_eq!(root, s.root());
        assert!(s.root_is_known(&empty_root) && s.root_is_known(&root));
    }

    #[test]
    fn failures_leave_state_alone() {
        let ca = CertificateAuthority::from_secret_bytes(&[1; 32]);
        let rogue = CertificateAuthority::from_secret_bytes(&[2; 32]);
        let server = AuthServer::in_memory(HashProfile::Sha256, 2, ca.verifying_key()).unwrap();
        let (cert, ck) = identity(&ca, "alice", 1);
        let (rogue_cert, rogue_ck) = identity(&rogue, "mallory", 2);
        let c = commitment(0);

        let before = server.snapshot().to_bytes();
        let other = commitment(1);
        assert!(matches!(
            server.register(&cert, c, &sign(&other.0 .0, &ck)),
            Err(RegisterError::Unauthorized(_))
        ));
        assert!(matches!(
            server.register(&rogue_cert, c, &sign(&c.0 .0, &rogue_ck)),
            Err(RegisterError::Unauthorized(_))
        ));
        assert_eq!(server.snapshot().to_bytes(), before);

        server.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
        let before = server.snapshot().to_bytes();
        assert!(matches!(
            server.register(&cert, c, &sign(&c.0 .0, &ck)),
            Err(RegisterError::Duplicate(_))
        ));
        assert_eq!(server.snapshot().to_bytes(), before);
    }

    #[test]
    fn capacity_error_on_fifth_registration_at_depth_two() {
        let ca = CertificateAuthority::from_secret_bytes(&[1; 32]);
        let server = AuthServer::in_memory(HashProfile::Sha256, 2, ca.verifying_key()).unwrap();
        let (cert, ck) = identity(&ca, "bob", 3);
        for i in 0..4 {
            let c = commitment(i);
            server.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
        }
        let c = commitment(9);
        assert!(matches!(
            server.register(&cert, c, &sign(&c.0 .0, &ck)),
            Err(RegisterError::Full { capacity: 4 })
        ));
        assert_eq!(server.fetch_old_roots().len(), 4);
    }

    #[test]
    fn retention_caps_old_roots() {
        let ca = CertificateAuthority::from_secret_bytes(&[1; 32]);
        let server = AuthServer::in_memory(HashProfile::Sha256, 3, ca.verifying_key())
            .unwrap()
            .with_retention(Some(2));
        let (cert, ck) = identity(&ca, "carol", 4);
        let mut roots = vec![server.root()];
        for i in 0..5 {
            let c = commitment(i);
            roots.push(server.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap());
        }
        assert_eq!(server.fetch_old_roots(), roots[3..5].to_vec());
    }

    #[test]
    fn state_bytes_roundtrip() {
        let ca = CertificateAuthority::from_secret_bytes(&[1; 32]);
        let server = AuthServer::in_memory(HashProfile::Algebraic, 3, ca.verifying_key()).unwrap();
        let (cert, ck) = identity(&ca, "dave ✓", 5);
        for i in 0..3 {
            let c = Commitment(HashProfile::Algebraic.hash(&[i]));
            server.register(&cert, c, &sign(&c.0 .0, &ck)).unwrap();
        }
        let s = server.snapshot();
        let bytes = s.to_bytes();
        let back = RegistryState::from_bytes(&bytes).unwrap();
        assert_eq!(back.root(), s.root());
        assert_eq!(back.old_roots, s.old_roots);
        assert_eq!(back.audit, s.audit);
        assert!(RegistryState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
