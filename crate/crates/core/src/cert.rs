//! One-level test certificate scheme.
//!
//! A certificate is an Ed25519 signature by the CA over
//! `encode(subject_id) ∥ encode(subject_verify_key)`. The subject signs
//! commitments with the matching signing key (`ck`).

use ed25519_dalek::{Signer, Verifier};
use rand_core::CryptoRngCore;
use thiserror::Error;

use crate::encoding::{encode_pair, DecodeError, Record, RecordWriter};

const CERT_VERSION: u8 = 1;
const TAG_SUBJECT: u8 = 0x01;
const TAG_KEY: u8 = 0x02;
const TAG_ISSUER_SIG: u8 = 0x03;

pub const SIGNATURE_LEN: usize = 64;
pub const KEY_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("malformed certificate: {0}")]
    Malformed(#[from] DecodeError),
    #[error("invalid key: {0}")]
    InvalidKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Signature)
    }
}

/// The CA's signing key.
pub struct CertificateAuthority {
    key: ed25519_dalek::SigningKey,
}

/// The CA's public key, configured at the AS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaVerifyingKey(ed25519_dalek::VerifyingKey);

impl CertificateAuthority {
    pub fn generate(rng: &mut dyn CryptoRngCore) -> Self {
        Self {
            key: ed25519_dalek::SigningKey::generate(rng),
        }
    }

    pub fn from_secret_bytes(bytes: &[u8; KEY_LEN]) -> Self {
        Self {
            key: ed25519_dalek::SigningKey::from_bytes(bytes),
        }
    }

    pub fn secret_bytes(&self) -> [u8; KEY_LEN] {
        self.key.to_bytes()
    }

    pub fn verifying_key(&self) -> CaVerifyingKey {
        CaVerifyingKey(self.key.verifying_key())
    }

    pub fn issue(&self, subject_id: &str, subject_key: &SubjectVerifyingKey) -> Certificate {
        let tbs = to_be_signed(subject_id, &subject_key.to_bytes());
        Certificate {
            subject_id: subject_id.to_owned(),
            subject_key: subject_key.clone(),
            issuer_signature: Signature(self.key.sign(&tbs).to_bytes()),
        }
    }
}

impl CaVerifyingKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CertError::InvalidKey(format!("expected {KEY_LEN} bytes")))?;
        ed25519_dalek::VerifyingKey::from_bytes(&arr)
            .map(CaVerifyingKey)
            .map_err(|e| CertError::InvalidKey(e.to_string()))
    }

    pub fn to_bytes(&self) -> [u8; KEY_LEN] {
        self.0.to_bytes()
    }
}

/// A subject's signing key `ck`.
pub struct SubjectSigningKey(ed25519_dalek::SigningKey);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectVerifyingKey(ed25519_dalek::VerifyingKey);

impl SubjectSigningKey {
    pub fn generate(rng: &mut dyn CryptoRngCore) -> Self {
        Self(ed25519_dalek::SigningKey::generate(rng))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CertError::InvalidKey(format!("expected {KEY_LEN} bytes")))?;
        Ok(Self(ed25519_dalek::SigningKey::from_bytes(&arr)))
    }

    pub fn to_bytes(&self) -> [u8; KEY_LEN] {
        self.0.to_bytes()
    }

    pub fn verifying_key(&self) -> SubjectVerifyingKey {
        SubjectVerifyingKey(self.0.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(message, self)
    }
}

impl SubjectVerifyingKey {
    pub fn to_bytes(&self) -> [u8; KEY_LEN] {
        self.0.to_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub subject_key: SubjectVerifyingKey,
    pub issuer_signature: Signature,
}

fn to_be_signed(subject_id: &str, key: &[u8]) -> Vec<u8> {
    encode_pair(subject_id.as_bytes(), key)
}

impl Certificate {
    pub fn to_bytes(&self) -> Vec<u8> {
        RecordWriter::new(CERT_VERSION)
            .field(TAG_SUBJECT, self.subject_id.as_bytes())
            .field(TAG_KEY, &self.subject_key.to_bytes())
            .field(TAG_ISSUER_SIG, &self.issuer_signature.0)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let rec = Record::parse(bytes, CERT_VERSION)?;
        rec.expect_only(&[TAG_SUBJECT, TAG_KEY, TAG_ISSUER_SIG])?;
        let subject_id = String::from_utf8(rec.get(TAG_SUBJECT)?.to_vec()).map_err(|_| DecodeError::InvalidField {
            tag: TAG_SUBJECT,
            reason: "subject id is not UTF-8".into(),
        })?;
        let key_bytes = rec.get_array::<KEY_LEN>(TAG_KEY)?;
        let key = ed25519_dalek::VerifyingKey::from_bytes(&key_bytes).map_err(|e| DecodeError::InvalidField {
            tag: TAG_KEY,
            reason: e.to_string(),
        })?;
        let sig = rec.get_array::<SIGNATURE_LEN>(TAG_ISSUER_SIG)?;
        Ok(Certificate {
            subject_id,
            subject_key: SubjectVerifyingKey(key),
            issuer_signature: Signature(sig),
        })
    }

    pub fn issuer_signature_valid(&self, ca: &CaVerifyingKey) -> bool {
        let tbs = to_be_signed(&self.subject_id, &self.subject_key.to_bytes());
        let sig = ed25519_dalek::Signature::from_bytes(&self.issuer_signature.0);
        ca.0.verify_strict(&tbs, &sig).is_ok()
    }
}

pub fn sign(message: &[u8], ck: &SubjectSigningKey) -> Signature {
    Signature(ck.0.sign(message).to_bytes())
}

/// True iff the certificate chains to `ca` and `signature` is valid over
/// `message` under the certificate's subject key.
pub fn verify_sign(ca: &CaVerifyingKey, cert: &Certificate, message: &[u8], signature: &Signature) -> bool {
    if !cert.issuer_signature_valid(ca) {
        return false;
    }
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    cert.subject_key.0.verify(message, &sig).is_ok() && cert.subject_key.0.verify_strict(message, &sig).is_ok()
}

/// As [`verify_sign`] over wire bytes. A certificate that does not parse is an
/// error; a signature of the wrong length is simply invalid.
pub fn verify_sign_encoded(
    ca: &CaVerifyingKey,
    cert_bytes: &[u8],
    message: &[u8],
    signature: &[u8],
) -> Result<bool, CertError> {
    let cert = Certificate::from_bytes(cert_bytes)?;
    Ok(match Signature::from_slice(signature) {
        Some(sig) => verify_sign(ca, &cert, message, &sig),
        None => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        ca: CertificateAuthority,
        ck: SubjectSigningKey,
        cert: Certificate,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ca = CertificateAuthority::generate(&mut rng);
        let ck = SubjectSigningKey::generate(&mut rng);
        let cert = ca.issue("alice", &ck.verifying_key());
        Fixture { ca, ck, cert }
    }

    #[test]
    fn honest_signature_verifies() {
        let f = fixture();
        let msg = [3u8; 32];
        let sig = sign(&msg, &f.ck);
        assert!(verify_sign(&f.ca.verifying_key(), &f.cert, &msg, &sig));
        assert!(!verify_sign(&f.ca.verifying_key(), &f.cert, &[4u8; 32], &sig));
    }

    #[test]
    fn corrupted_issuer_signature_fails() {
        let f = fixture();
        let msg = b"commitment";
        let sig = sign(msg, &f.ck);
        for pos in 0..SIGNATURE_LEN {
            let mut cert = f.cert.clone();
            cert.issuer_signature.0[pos] ^= 0x01;
            assert!(!verify_sign(&f.ca.verifying_key(), &cert, msg, &sig), "byte {pos}");
        }
    }

    #[test]
    fn foreign_ca_or_key_fails() {
        let f = fixture();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let other_ca = CertificateAuthority::generate(&mut rng);
        let other_ck = SubjectSigningKey::generate(&mut rng);
        let msg = b"m";
        assert!(!verify_sign(&other_ca.verifying_key(), &f.cert, msg, &sign(msg, &f.ck)));
        assert!(!verify_sign(&f.ca.verifying_key(), &f.cert, msg, &sign(msg, &other_ck)));
    }

    #[test]
    fn single_byte_mutations_flip_to_false() {
        let f = fixture();
        let ca = f.ca.verifying_key();
        let msg = [0x5au8; 32];
        let sig = sign(&msg, &f.ck);
        for pos in (0..32).step_by(3) {
            let mut m = msg;
            m[pos] ^= 0x80;
            assert!(!verify_sign(&ca, &f.cert, &m, &sig));
        }
        for pos in (0..SIGNATURE_LEN).step_by(5) {
            let mut s = sig.clone();
            s.0[pos] ^= 0x04;
            assert!(!verify_sign(&ca, &f.cert, &msg, &s));
        }
    }

    #[test]
    fn encoded_paths() {
        let f = fixture();
        let ca = f.ca.verifying_key();
        let msg = b"c";
        let sig = sign(msg, &f.ck);
        let bytes = f.cert.to_bytes();
        assert_eq!(Certificate::from_bytes(&bytes).unwrap(), f.cert);
        assert!(verify_sign_encoded(&ca, &bytes, msg, &sig.0).unwrap());
        assert!(!verify_sign_encoded(&ca, &bytes, msg, &sig.0[..10]).unwrap());
        assert!(matches!(
            verify_sign_encoded(&ca, &bytes[..bytes.len() - 3], msg, &sig.0),
            Err(CertError::Malformed(_))
        ));
        assert!(matches!(
            verify_sign_encoded(&ca, b"", msg, &sig.0),
            Err(CertError::Malformed(_))
        ));
    }
}
