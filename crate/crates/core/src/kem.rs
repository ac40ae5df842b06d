//! Key encapsulation for delivered key material.
//!
//! Two profiles:
//!
//! * `dhkem-x25519`: HPKE base mode, DHKEM(X25519, HKDF-SHA256) with
//!   HKDF-SHA256 and ChaCha20-Poly1305. Up to 1024 bytes per encapsulation.
//! * `rsa-oaep`: RSA-2048 with OAEP/SHA-256. Up to 190 bytes per encapsulation.
//!
//! Input longer than one encapsulation is split into chunks. Each chunk is
//! bound to `(sequence, chunk count, total length)` through the AEAD
//! associated data (HPKE) or the OAEP label (RSA), so reordered, dropped or
//! spliced chunks fail to open.
//!
//! `EncapsulatedKey` layout: `version ∥ profile ∥ total u32 ∥ count u32`
//! followed by `count` records of `seq u32 ∥ len u32 ∥ bytes`.

use std::fmt;

use hpke::aead::ChaCha20Poly1305;
use hpke::kdf::HkdfSha256;
use hpke::kem::X25519HkdfSha256;
use hpke::{Deserializable, Kem as _, OpModeR, OpModeS, Serializable};
use rand_core::CryptoRngCore;
use rsa::pkcs1::{DecodeRsaPrivateKey, EncodeRsaPrivateKey};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::{BigUint, Oaep, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;
use zeroize::Zeroizing;

const FORMAT_VERSION: u8 = 1;
const HPKE_INFO: &[u8] = b"anonkey/key-delivery/v1";
const X25519_KEY_LEN: usize = 32;
const RSA_BITS: usize = 2048;
const RSA_MODULUS_LEN: usize = RSA_BITS / 8;
const RSA_EXPONENT: u64 = 65537;

#[derive(Debug, Error)]
pub enum KemError {
    #[error("key material must not be empty")]
    EmptyInput,
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
    #[error("key profile mismatch: ciphertext is {ciphertext}, key is {key}")]
    ProfileMismatch { ciphertext: KemProfile, key: KemProfile },
    #[error("decryption failed (wrong key or tampered ciphertext)")]
    DecryptionFailed,
    #[error("encapsulation failed: {0}")]
    Encapsulation(String),
    #[error("key generation failed: {0}")]
    KeyGen(String),
}

fn malformed(what: &'static str, reason: impl Into<String>) -> KemError {
    KemError::Malformed {
        what,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum KemProfile {
    #[default]
    #[serde(rename = "dhkem-x25519")]
    X25519Hpke,
    #[serde(rename = "rsa-oaep")]
    RsaOaep,
}

impl KemProfile {
    pub fn id(self) -> u8 {
        match self {
            KemProfile::X25519Hpke => 1,
            KemProfile::RsaOaep => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(KemProfile::X25519Hpke),
            2 => Some(KemProfile::RsaOaep),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KemProfile::X25519Hpke => "dhkem-x25519",
            KemProfile::RsaOaep => "rsa-oaep",
        }
    }

    /// Largest plaintext carried by one encapsulation.
    pub fn chunk_capacity(self) -> usize {
        match self {
            KemProfile::X25519Hpke => 1024,
            // k - 2·hLen - 2 for OAEP with SHA-256.
            KemProfile::RsaOaep => RSA_MODULUS_LEN - 2 * 32 - 2,
        }
    }

    /// Length of [`KemPublicKey::canonical_bytes`].
    pub fn public_key_len(self) -> usize {
        match self {
            KemProfile::X25519Hpke => X25519_KEY_LEN,
            KemProfile::RsaOaep => RSA_MODULUS_LEN,
        }
    }

    /// Length of [`KemSecretKey::canonical_bytes`].
    pub fn secret_key_len(self) -> usize {
        match self {
            KemProfile::X25519Hpke => X25519_KEY_LEN,
            KemProfile::RsaOaep => RSA_MODULUS_LEN,
        }
    }
}

impl fmt::Display for KemProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum KemPublicKey {
    X25519([u8; X25519_KEY_LEN]),
    Rsa(Box<RsaPublicKey>),
}

impl KemPublicKey {
    pub fn profile(&self) -> KemProfile {
        match self {
            KemPublicKey::X25519(_) => KemProfile::X25519Hpke,
            KemPublicKey::Rsa(_) => KemProfile::RsaOaep,
        }
    }

    /// Fixed-length bytes used as the `pk` operand of the nullifier.
    /// X25519: the 32-byte public key. RSA: the modulus, 256 bytes big-endian
    /// (the exponent is always 65537).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        match self {
            KemPublicKey::X25519(pk) => pk.to_vec(),
            KemPublicKey::Rsa(pk) => left_pad(&pk.n().to_bytes_be(), RSA_MODULUS_LEN),
        }
    }

    /// `profile id ∥ canonical bytes`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.profile().id()];
        out.extend(self.canonical_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KemError> {
        let (&id, body) = bytes
            .split_first()
            .ok_or_else(|| malformed("public key", "empty"))?;
        let profile =
            KemProfile::from_id(id).ok_or_else(|| malformed("public key", format!("unknown profile {id}")))?;
        Self::from_canonical(profile, body)
    }

    pub fn from_canonical(profile: KemProfile, body: &[u8]) -> Result<Self, KemError> {
        if body.len() != profile.public_key_len() {
            return Err(malformed("public key", format!("length {}", body.len())));
        }
        match profile {
            KemProfile::X25519Hpke => {
                <X25519HkdfSha256 as hpke::Kem>::PublicKey::from_bytes(body)
                    .map_err(|e| malformed("public key", e.to_string()))?;
                Ok(KemPublicKey::X25519(body.try_into().expect("length checked")))
            }
            KemProfile::RsaOaep => {
                let n = BigUint::from_bytes_be(body);
                let pk = RsaPublicKey::new(n, BigUint::from(RSA_EXPONENT))
                    .map_err(|e| malformed("public key", e.to_string()))?;
                if pk.size() != RSA_MODULUS_LEN {
                    return Err(malformed("public key", "modulus is not 2048 bits"));
                }
                Ok(KemPublicKey::Rsa(Box::new(pk)))
            }
        }
    }
}

impl fmt::Debug for KemPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KemPublicKey({}, {})", self.profile(), hex::encode(&self.canonical_bytes()[..8]))
    }
}

#[derive(Clone)]
pub enum KemSecretKey {
    X25519(Zeroizing<[u8; X25519_KEY_LEN]>),
    Rsa(Box<RsaPrivateKey>),
}

impl KemSecretKey {
    pub fn profile(&self) -> KemProfile {
        match self {
            KemSecretKey::X25519(_) => KemProfile::X25519Hpke,
            KemSecretKey::Rsa(_) => KemProfile::RsaOaep,
        }
    }

    /// Fixed-length bytes used as the `sk` operand of the commitment.
    /// X25519: the 32-byte scalar. RSA: the private exponent `d`, 256 bytes
    /// big-endian.
    pub fn canonical_bytes(&self) -> Zeroizing<Vec<u8>> {
        match self {
            KemSecretKey::X25519(sk) => Zeroizing::new(sk.to_vec()),
            KemSecretKey::Rsa(sk) => Zeroizing::new(left_pad(&sk.d().to_bytes_be(), RSA_MODULUS_LEN)),
        }
    }

    /// Storage form: the raw scalar for X25519, PKCS#1 DER for RSA.
    pub fn to_storage_bytes(&self) -> Zeroizing<Vec<u8>> {
        match self {
            KemSecretKey::X25519(sk) => Zeroizing::new(sk.to_vec()),
            KemSecretKey::Rsa(sk) => Zeroizing::new(
                sk.to_pkcs1_der()
                    .expect("in-memory RSA key always encodes")
                    .as_bytes()
                    .to_vec(),
            ),
        }
    }

    pub fn from_storage_bytes(profile: KemProfile, bytes: &[u8]) -> Result<Self, KemError> {
        match profile {
            KemProfile::X25519Hpke => {
                let arr: [u8; X25519_KEY_LEN] = bytes
                    .try_into()
                    .map_err(|_| malformed("secret key", format!("length {}", bytes.len())))?;
                <X25519HkdfSha256 as hpke::Kem>::PrivateKey::from_bytes(&arr)
                    .map_err(|e| malformed("secret key", e.to_string()))?;
                Ok(KemSecretKey::X25519(Zeroizing::new(arr)))
            }
            KemProfile::RsaOaep => {
                let sk = RsaPrivateKey::from_pkcs1_der(bytes).map_err(|e| malformed("secret key", e.to_string()))?;
                if sk.size() != RSA_MODULUS_LEN || sk.e() != &BigUint::from(RSA_EXPONENT) {
                    return Err(malformed("secret key", "expected RSA-2048 with e = 65537"));
                }
                Ok(KemSecretKey::Rsa(Box::new(sk)))
            }
        }
    }

    pub fn public_key(&self) -> KemPublicKey {
        match self {
            KemSecretKey::X25519(sk) => {
                let sk = <X25519HkdfSha256 as hpke::Kem>::PrivateKey::from_bytes(&sk[..])
                    .expect("stored scalar was validated");
                let pk = X25519HkdfSha256::sk_to_pk(&sk);
                KemPublicKey::X25519(pk.to_bytes().into())
            }
            KemSecretKey::Rsa(sk) => KemPublicKey::Rsa(Box::new(sk.to_public_key())),
        }
    }
}

impl fmt::Debug for KemSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KemSecretKey({}, <redacted>)", self.profile())
    }
}

pub fn keygen(profile: KemProfile, rng: &mut dyn CryptoRngCore) -> Result<(KemPublicKey, KemSecretKey), KemError> {
    match profile {
        KemProfile::X25519Hpke => {
            let (sk, pk) = X25519HkdfSha256::gen_keypair(&mut &mut *rng);
            let mut raw = Zeroizing::new([0u8; X25519_KEY_LEN]);
            raw.copy_from_slice(&sk.to_bytes());
            Ok((KemPublicKey::X25519(pk.to_bytes().into()), KemSecretKey::X25519(raw)))
        }
        KemProfile::RsaOaep => {
            let sk = RsaPrivateKey::new_with_exp(&mut &mut *rng, RSA_BITS, &BigUint::from(RSA_EXPONENT))
                .map_err(|e| KemError::KeyGen(e.to_string()))?;
            Ok((KemPublicKey::Rsa(Box::new(sk.to_public_key())), KemSecretKey::Rsa(Box::new(sk))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncapsulatedKey {
    pub ciphertext: Vec<u8>,
}

#[derive(Debug)]
struct ParsedEncapsulation<'a> {
    profile: KemProfile,
    total: usize,
    chunks: Vec<&'a [u8]>,
}

impl EncapsulatedKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.ciphertext.clone()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        EncapsulatedKey {
            ciphertext: bytes.to_vec(),
        }
    }

    pub fn profile(&self) -> Result<KemProfile, KemError> {
        Ok(self.parse()?.profile)
    }

    /// Length of the key material this ciphertext carries.
    pub fn plaintext_len(&self) -> Result<usize, KemError> {
        Ok(self.parse()?.total)
    }

    pub fn chunk_count(&self) -> Result<usize, KemError> {
        Ok(self.parse()?.chunks.len())
    }

    fn parse(&self) -> Result<ParsedEncapsulation<'_>, KemError> {
        let err = |r: &str| malformed("encapsulated key", r.to_string());
        let data = &self.ciphertext;
        if data.len() < 10 {
            return Err(err("truncated header"));
        }
        if data[0] != FORMAT_VERSION {
            return Err(err("unsupported version"));
        }
        let profile = KemProfile::from_id(data[1]).ok_or_else(|| err("unknown profile"))?;
        let total = u32::from_be_bytes(data[2..6].try_into().unwrap()) as usize;
        let count = u32::from_be_bytes(data[6..10].try_into().unwrap()) as usize;
        if total == 0 || count != total.div_ceil(profile.chunk_capacity()) {
            return Err(err("inconsistent chunk count"));
        }
        let mut rest = &data[10..];
        let mut chunks = Vec::with_capacity(count);
        for expected_seq in 0..count {
            if rest.len() < 8 {
                return Err(err("truncated chunk header"));
            }
            let seq = u32::from_be_bytes(rest[0..4].try_into().unwrap()) as usize;
            let len = u32::from_be_bytes(rest[4..8].try_into().unwrap()) as usize;
            if seq != expected_seq {
                return Err(err("chunk out of sequence"));
            }
            if rest.len() < 8 + len {
                return Err(err("truncated chunk"));
            }
            chunks.push(&rest[8..8 + len]);
            rest = &rest[8 + len..];
        }
        if !rest.is_empty() {
            return Err(err("trailing bytes"));
        }
        Ok(ParsedEncapsulation { profile, total, chunks })
    }
}

fn chunk_binding(profile: KemProfile, seq: usize, count: usize, total: usize) -> Vec<u8> {
    let mut aad = b"anonkey/kem/v1".to_vec();
    aad.push(profile.id());
    aad.extend_from_slice(&(seq as u32).to_be_bytes());
    aad.extend_from_slice(&(count as u32).to_be_bytes());
    aad.extend_from_slice(&(total as u32).to_be_bytes());
    aad
}

fn oaep(binding: &[u8]) -> Oaep {
    Oaep::new_with_label::<Sha256, _>(hex::encode(binding))
}

/// Encapsulates `ikm` under `pk`. Randomized: two calls never produce the
/// same ciphertext.
pub fn encap(ikm: &[u8], pk: &KemPublicKey, rng: &mut dyn CryptoRngCore) -> Result<EncapsulatedKey, KemError> {
    if ikm.is_empty() {
        return Err(KemError::EmptyInput);
    }
    if ikm.len() > u32::MAX as usize {
        return Err(KemError::Encapsulation("key material too long".into()));
    }
    let profile = pk.profile();
    let capacity = profile.chunk_capacity();
    let count = ikm.len().div_ceil(capacity);

    let mut out = vec![FORMAT_VERSION, profile.id()];
    out.extend_from_slice(&(ikm.len() as u32).to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());

    for (seq, chunk) in ikm.chunks(capacity).enumerate() {
        let binding = chunk_binding(profile, seq, count, ikm.len());
        let body = match pk {
            KemPublicKey::X25519(raw) => {
                let pk = <X25519HkdfSha256 as hpke::Kem>::PublicKey::from_bytes(raw)
                    .map_err(|e| KemError::Encapsulation(e.to_string()))?;
                let (encapped, ct) = hpke::single_shot_seal::<ChaCha20Poly1305, HkdfSha256, X25519HkdfSha256, _>(
                    &OpModeS::Base,
                    &pk,
                    HPKE_INFO,
                    chunk,
                    &binding,
                    &mut &mut *rng,
                )
                .map_err(|e| KemError::Encapsulation(e.to_string()))?;
                let mut body = encapped.to_bytes().to_vec();
                body.extend_from_slice(&ct);
                body
            }
            KemPublicKey::Rsa(pk) => pk
                .encrypt(&mut &mut *rng, oaep(&binding), chunk)
                .map_err(|e| KemError::Encapsulation(e.to_string()))?,
        };
        out.extend_from_slice(&(seq as u32).to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    Ok(EncapsulatedKey { ciphertext: out })
}

/// Recovers the key material. Any wrong key or modification is reported as
/// [`KemError::DecryptionFailed`] rather than returning garbage.
pub fn decap(enc: &EncapsulatedKey, sk: &KemSecretKey) -> Result<Zeroizing<Vec<u8>>, KemError> {
    let parsed = enc.parse()?;
    if parsed.profile != sk.profile() {
        return Err(KemError::ProfileMismatch {
            ciphertext: parsed.profile,
            key: sk.profile(),
        });
    }
    let count = parsed.chunks.len();
    let mut out = Zeroizing::new(Vec::with_capacity(parsed.total));
    for (seq, body) in parsed.chunks.iter().enumerate() {
        let binding = chunk_binding(parsed.profile, seq, count, parsed.total);
        let plain = match sk {
            KemSecretKey::X25519(raw) => {
                if body.len() < X25519_KEY_LEN {
                    return Err(KemError::DecryptionFailed);
                }
                let sk = <X25519HkdfSha256 as hpke::Kem>::PrivateKey::from_bytes(&raw[..])
                    .map_err(|_| KemError::DecryptionFailed)?;
                let encapped = <X25519HkdfSha256 as hpke::Kem>::EncappedKey::from_bytes(&body[..X25519_KEY_LEN])
                    .map_err(|_| KemError::DecryptionFailed)?;
                hpke::single_shot_open::<ChaCha20Poly1305, HkdfSha256, X25519HkdfSha256>(
                    &OpModeR::Base,
                    &sk,
                    &encapped,
                    HPKE_INFO,
                    &body[X25519_KEY_LEN..],
                    &binding,
                )
                .map_err(|_| KemError::DecryptionFailed)?
            }
            KemSecretKey::Rsa(sk) => sk.decrypt(oaep(&binding), body).map_err(|_| KemError::DecryptionFailed)?,
        };
        let plain = Zeroizing::new(plain);
        out.extend_from_slice(&plain);
    }
    if out.len() != parsed.total {
        return Err(KemError::DecryptionFailed);
    }
    Ok(out)
}

fn left_pad(bytes: &[u8], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}
