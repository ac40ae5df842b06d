//! Notes and the two hashes derived from them.
//!
//! ```text
//! C = H(encode(sk) ∥ encode(rho))     registered with the AS
//! N = H(encode(pk) ∥ encode(rho))     revealed to the PVS
//! ```

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;
use zeroize::Zeroizing;

use crate::config::Lambda;
use crate::encoding::{encode_pair, DecodeError, Record, RecordWriter};
use crate::entropy::{EntropyError, EntropySource};
use crate::hash::{Digest, HashProfile};
use crate::kem::{self, KemError, KemProfile, KemPublicKey, KemSecretKey};

const NOTE_VERSION: u8 = 1;
const TAG_PROFILE: u8 = 0x01;
const TAG_RHO: u8 = 0x02;
const TAG_PK: u8 = 0x03;
const TAG_SK: u8 = 0x04;

#[derive(Debug, Error)]
pub enum NoteError {
    #[error("entropy source failed: {0}")]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Kem(#[from] KemError),
    #[error("malformed note: {0}")]
    Decode(#[from] DecodeError),
    #[error("inconsistent note: {0}")]
    Inconsistent(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment(pub Digest);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nullifier(pub Digest);

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for Nullifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The user's secret triple `(rho, pk, sk)`.
#[derive(Clone)]
pub struct Note {
    rho: Zeroizing<Vec<u8>>,
    pk: KemPublicKey,
    sk: KemSecretKey,
}

impl fmt::Debug for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Note")
            .field("lambda", &(self.rho.len() * 8))
            .field("pk", &self.pk)
            .finish_non_exhaustive()
    }
}

/// Creates a note with a fresh `rho` of λ bits and a fresh KEM key pair.
/// Both are drawn from `entropy`; a failing source yields no note at all.
pub fn user_init(lambda: Lambda, profile: KemProfile, entropy: &dyn EntropySource) -> Result<Note, NoteError> {
    let rho = entropy.generate(lambda.bytes())?;
    let seed = entropy.generate(32)?;
    let mut rng = ChaCha20Rng::from_seed(seed[..].try_into().expect("32 bytes"));
    let (pk, sk) = kem::keygen(profile, &mut rng)?;
    Ok(Note { rho, pk, sk })
}

pub fn derive_commitment(note: &Note, profile: HashProfile) -> Commitment {
    Commitment(profile.hash(&commitment_preimage(&note.sk.canonical_bytes(), &note.rho)))
}

pub fn derive_nullifier(note: &Note, profile: HashProfile) -> Nullifier {
    Nullifier(profile.hash(&nullifier_preimage(&note.pk.canonical_bytes(), &note.rho)))
}

/// `encode(sk) ∥ encode(rho)`.
pub fn commitment_preimage(sk: &[u8], rho: &[u8]) -> Zeroizing<Vec<u8>> {
    Zeroizing::new(encode_pair(sk, rho))
}

/// `encode(pk) ∥ encode(rho)`.
pub fn nullifier_preimage(pk: &[u8], rho: &[u8]) -> Zeroizing<Vec<u8>> {
    Zeroizing::new(encode_pair(pk, rho))
}

impl Note {
    pub fn from_parts(rho: Vec<u8>, sk: KemSecretKey) -> Result<Self, NoteError> {
        if Lambda::new(rho.len() as u32 * 8).is_err() {
            return Err(NoteError::Inconsistent("rho length is not a supported lambda"));
        }
        let pk = sk.public_key();
        Ok(Note {
            rho: Zeroizing::new(rho),
            pk,
            sk,
        })
    }

    pub fn rho(&self) -> &[u8] {
        &self.rho
    }

    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.rho.len() as u32 * 8).expect("validated on construction")
    }

    pub fn public_key(&self) -> &KemPublicKey {
        &self.pk
    }

    pub fn secret_key(&self) -> &KemSecretKey {
        &self.sk
    }

    pub fn kem_profile(&self) -> KemProfile {
        self.pk.profile()
    }

    pub fn commitment(&self, profile: HashProfile) -> Commitment {
        derive_commitment(self, profile)
    }

    pub fn nullifier(&self, profile: HashProfile) -> Nullifier {
        derive_nullifier(self, profile)
    }

    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(
            RecordWriter::new(NOTE_VERSION)
                .field(TAG_PROFILE, &[self.kem_profile().id()])
                .field(TAG_RHO, &self.rho)
                .field(TAG_PK, &self.pk.to_bytes())
                .field(TAG_SK, &self.sk.to_storage_bytes())
                .finish(),
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NoteError> {
        let rec = Record::parse(bytes, NOTE_VERSION)?;
        rec.expect_only(&[TAG_PROFILE, TAG_RHO, TAG_PK, TAG_SK])?;
        let profile_id = rec.get_u8(TAG_PROFILE)?;
        let profile = KemProfile::from_id(profile_id).ok_or(DecodeError::InvalidField {
            tag: TAG_PROFILE,
            reason: format!("unknown KEM profile {profile_id}"),
        })?;
        let sk = KemSecretKey::from_storage_bytes(profile, rec.get(TAG_SK)?)?;
        let pk = KemPublicKey::from_bytes(rec.get(TAG_PK)?)?;
        if pk != sk.public_key() {
            return Err(NoteError::Inconsistent("public key does not match secret key"));
        }
        let note = Note::from_parts(rec.get(TAG_RHO)?.to_vec(), sk)?;
        Ok(note)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::encode;
    use crate::entropy::MockSource;
    use std::collections::HashSet;

    struct DeadSource;
    impl EntropySource for DeadSource {
        fn kind(&self) -> crate::entropy::EntropyKind {
            crate::entropy::EntropyKind::External
        }
        fn fill(&self, _: &mut [u8]) -> Result<(), EntropyError> {
            Err(EntropyError::Unavailable("unplugged".into()))
        }
    }

    fn note(seed: u64) -> Note {
        user_init(Lambda::L256, KemProfile::X25519Hpke, &MockSource::new(seed)).unwrap()
    }

    #[test]
    fn user_init_lengths() {
        let n = note(1);
        assert_eq!(n.rho().len(), 32);
        let n128 = user_init(Lambda::L128, KemProfile::X25519Hpke, &MockSource::new(1)).unwrap();
        assert_eq!(n128.rho().len(), 16);
        assert_eq!(n.secret_key().public_key(), *n.public_key());
    }

    #[test]
    fn user_init_fails_without_entropy() {
        assert!(matches!(
            user_init(Lambda::L256, KemProfile::X25519Hpke, &DeadSource),
            Err(NoteError::Entropy(_))
        ));
    }

    #[test]
    fn thousand_notes_have_distinct_rho() {
        let src = crate::entropy::OsSource::new();
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let n = user_init(Lambda::L256, KemProfile::X25519Hpke, &src).unwrap();
            assert!(seen.insert(n.rho().to_vec()));
        }
    }

    #[test]
    fn derivations_match_external_recomputation() {
        for profile in [HashProfile::Sha256, HashProfile::Algebraic] {
            let n = note(3);
            let mut c_pre = encode(&n.secret_key().canonical_bytes());
            c_pre.extend(encode(n.rho()));
            let mut n_pre = encode(&n.public_key().canonical_bytes());
            n_pre.extend(encode(n.rho()));
            assert_eq!(n.commitment(profile).0, profile.hash(&c_pre));
            assert_eq!(n.nullifier(profile).0, profile.hash(&n_pre));
            assert_eq!(n.commitment(profile), n.commitment(profile));
            assert_ne!(n.commitment(profile).0, n.nullifier(profile).0);
        }
    }

    #[test]
    fn rho_alone_changes_commitment() {
        let base = note(4);
        for i in 0..100u8 {
            let mut rho = base.rho().to_vec();
            rho[(i % 32) as usize] ^= i.max(1);
            let other = Note::from_parts(rho, base.secret_key().clone()).unwrap();
            assert_ne!(
                other.commitment(HashProfile::Algebraic),
                base.commitment(HashProfile::Algebraic)
            );
        }
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let n = note(5);
        let bytes = n.to_bytes();
        assert_eq!(bytes[0], NOTE_VERSION);
        let back = Note::from_bytes(&bytes).unwrap();
        assert_eq!(back.rho(), n.rho());
        assert_eq!(back.commitment(HashProfile::Sha256), n.commitment(HashProfile::Sha256));

        let mut wrong_version = bytes.to_vec();
        wrong_version[0] = 9;
        assert!(matches!(Note::from_bytes(&wrong_version), Err(NoteError::Decode(_))));

        let other = note(6);
        let mismatched = RecordWriter::new(NOTE_VERSION)
            .field(TAG_PROFILE, &[1])
            .field(TAG_RHO, n.rho())
            .field(TAG_PK, &other.public_key().to_bytes())
            .field(TAG_SK, &n.secret_key().to_storage_bytes())
            .finish();
        assert!(matches!(Note::from_bytes(&mismatched), Err(NoteError::Inconsistent(_))));
    }
}
