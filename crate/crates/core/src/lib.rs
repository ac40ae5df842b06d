//! Core building blocks for anonymous key delivery.
//!
//! A user registers a commitment `C = H(encode(sk) ∥ encode(rho))` with an
//! authentication server, which appends it to a fixed-depth Merkle tree. Later
//! the user reveals only the nullifier `N = H(encode(pk) ∥ encode(rho))` and a
//! zk-SNARK showing that some leaf of the tree was derived from the same note.
//! The validation server checks the proof, burns the nullifier and
//! encapsulates fresh key material under `pk`.
//!
//! This crate holds everything both servers and the client share:
//!
//! * [`hash`]: the two hash profiles (`sha256` and a Poseidon-based
//!   `algebraic` profile) and the [`Digest`](hash::Digest) type.
//! * [`note`]: notes, commitments and nullifiers.
//! * [`kem`]: key encapsulation (HPKE-style X25519 and RSA-OAEP profiles).
//! * [`cert`]: the minimal one-level certificate scheme used at registration.
//! * [`entropy`]: pluggable entropy sources.
//! * [`merkle`]: the append-only commitment tree.
//! * [`zkp`]: the membership relation as an R1CS circuit plus setup/prove/verify.

pub mod cert;
pub mod config;
pub mod encoding;
pub mod entropy;
pub mod hash;
pub mod kem;
pub mod merkle;
pub mod note;
pub mod zkp;

pub use config::{Lambda, ProtocolConfig};
pub use hash::{Digest, HashProfile};
pub use kem::{EncapsulatedKey, KemProfile, KemPublicKey, KemSecretKey};
pub use merkle::{MerkleTree, ValidationList};
pub use note::{Commitment, Note, Nullifier};
