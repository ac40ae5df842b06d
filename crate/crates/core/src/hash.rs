//! Hash profiles.
//!
//! `H` is chosen once per deployment and applies to commitments, nullifiers,
//! the Merkle tree and the circuit alike:
//!
//! * [`HashProfile::Sha256`] hashes raw bytes with SHA-256; tree nodes are
//!   `SHA-256(left ∥ right)`.
//! * [`HashProfile::Algebraic`] is a Poseidon sponge over the BN254 scalar
//!   field (width 4, rate 3, α = 5, 8 full and 56 partial rounds). Byte input
//!   is split into 31-byte big-endian chunks, each one field element, and
//!   absorbed after a domain tag and the byte length. Tree nodes absorb
//!   `[NODE_TAG, left, right]` directly since digests are field elements.
//!
//! Digests are always 32 bytes. Under the algebraic profile they are the
//! big-endian encoding of a canonical field element.

use std::fmt;
use std::sync::OnceLock;

use ark_bn254::Fr;
use ark_crypto_primitives::sponge::poseidon::{find_poseidon_ark_and_mds, PoseidonConfig, PoseidonSponge};
use ark_crypto_primitives::sponge::CryptographicSponge;
use ark_ff::{BigInteger, PrimeField};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;

/// Bytes per field element when packing byte strings (⌊254 / 8⌋).
pub const CHUNK_BYTES: usize = 31;

pub(crate) const BYTES_TAG: u64 = 1;
pub(crate) const NODE_TAG: u64 = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashError {
    #[error("digest is not a canonical field element")]
    NonCanonical,
    #[error("invalid digest hex: {0}")]
    Hex(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        let bytes = hex::decode(s).map_err(|e| HashError::Hex(e.to_string()))?;
        Self::from_slice(&bytes).ok_or_else(|| HashError::Hex(format!("expected 32 bytes, got {}", bytes.len())))
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HashProfile {
    Sha256,
    #[default]
    Algebraic,
}

impl HashProfile {
    pub fn id(self) -> u8 {
        match self {
            HashProfile::Sha256 => 1,
            HashProfile::Algebraic => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(HashProfile::Sha256),
            2 => Some(HashProfile::Algebraic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashProfile::Sha256 => "sha256",
            HashProfile::Algebraic => "algebraic",
        }
    }

    pub fn hash(self, data: &[u8]) -> Digest {
        match self {
            HashProfile::Sha256 => {
                use sha2::Digest as _;
                Digest(Sha256::digest(data).into())
            }
            HashProfile::Algebraic => algebraic::hash_bytes(data),
        }
    }

    pub fn hash_node(self, left: &Digest, right: &Digest) -> Digest {
        match self {
            HashProfile::Sha256 => {
                use sha2::Digest as _;
                let mut h = Sha256::new();
                h.update(left.0);
                h.update(right.0);
                Digest(h.finalize().into())
            }
            HashProfile::Algebraic => algebraic::hash_node(left, right),
        }
    }

    /// `H(0)`: the value of an unoccupied leaf slot.
    pub fn empty_leaf(self) -> Digest {
        self.hash(&[0u8])
    }

    /// Checks that `digest` could have been produced under this profile.
    pub fn validate(self, digest: &Digest) -> Result<(), HashError> {
        match self {
            HashProfile::Sha256 => Ok(()),
            HashProfile::Algebraic => algebraic::digest_to_field(digest).map(|_| ()),
        }
    }
}

impl fmt::Display for HashProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub mod algebraic {
    use super::*;

    pub fn poseidon_config() -> &'static PoseidonConfig<Fr> {
        static CONFIG: OnceLock<PoseidonConfig<Fr>> = OnceLock::new();
        CONFIG.get_or_init(|| {
            const RATE: usize = 3;
            const FULL_ROUNDS: usize = 8;
            const PARTIAL_ROUNDS: usize = 56;
            let (ark, mds) = find_poseidon_ark_and_mds::<Fr>(
                Fr::MODULUS_BIT_SIZE as u64,
                RATE,
                FULL_ROUNDS as u64,
                PARTIAL_ROUNDS as u64,
                0,
            );
            PoseidonConfig::new(FULL_ROUNDS, PARTIAL_ROUNDS, 5, mds, ark, RATE, 1)
        })
    }

    /// Splits bytes into 31-byte chunks, each read as a big-endian integer.
    pub fn pack_bytes(data: &[u8]) -> Vec<Fr> {
        data.chunks(CHUNK_BYTES)
            .map(Fr::from_be_bytes_mod_order)
            .collect()
    }

    pub fn sponge_hash(elements: &[Fr]) -> Fr {
        let mut sponge = PoseidonSponge::new(poseidon_config());
        sponge.absorb(&elements.to_vec());
        sponge.squeeze_field_elements::<Fr>(1)[0]
    }

    pub fn hash_bytes(data: &[u8]) -> Digest {
        let mut elements = vec![Fr::from(BYTES_TAG), Fr::from(data.len() as u64)];
        elements.extend(pack_bytes(data));
        field_to_digest(&sponge_hash(&elements))
    }

    pub fn hash_node(left: &Digest, right: &Digest) -> Digest {
        // Non-canonical inputs are reduced; callers validate at the boundary.
        let l = Fr::from_be_bytes_mod_order(&left.0);
        let r = Fr::from_be_bytes_mod_order(&right.0);
        field_to_digest(&sponge_hash(&[Fr::from(NODE_TAG), l, r]))
    }

    pub fn field_to_digest(x: &Fr) -> Digest {
        let bytes = x.into_bigint().to_bytes_be();
        let mut out = [0u8; DIGEST_LEN];
        out[DIGEST_LEN - bytes.len()..].copy_from_slice(&bytes);
        Digest(out)
    }

    pub fn digest_to_field(d: &Digest) -> Result<Fr, HashError> {
        let x = Fr::from_be_bytes_mod_order(&d.0);
        if field_to_digest(&x) == *d {
            Ok(x)
        } else {
            Err(HashError::NonCanonical)
        }
    }
}
