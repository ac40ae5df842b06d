//! The two server roles.
//!
//! The authentication server (AS) checks a certificate-backed signature over
//! a commitment and appends it to the Merkle tree, remembering every root it
//! has published. The proof validation server (PVS) accepts key requests over
//! the tunnel: it checks the statement's root against the AS's current and
//! old roots, refuses spent nullifiers, verifies the proof, burns the
//! nullifier and encapsulates fresh entropy under the requester's key.
//!
//! Both share one data directory (see [`store`]). They can run as separate
//! processes, with the PVS polling the registry file or the AS's HTTP API,
//! or together in one process.

pub mod config;
pub mod http;
pub mod listener;
pub mod nullifiers;
pub mod pvs;
pub mod registry;
pub mod setup;
pub mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use config::ServerConfig;
pub use nullifiers::NullifierList;
pub use pvs::{ProofValidationServer, RegistrySource, RootsSnapshot};
pub use registry::{AuthServer, RegisterError, RegistryState};
pub use setup::{open_auth_server, open_pvs, server_setup};
pub use store::DataDir;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("{0} already holds server state; pass reset to overwrite")]
    AlreadyInitialized(PathBuf),
    #[error("{0} has not been set up")]
    NotInitialized(PathBuf),
    #[error("configuration: {0}")]
    Config(String),
    #[error("corrupt state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Zkp(#[from] anonkey_core::zkp::ZkpError),
    #[error(transparent)]
    Merkle(#[from] anonkey_core::merkle::MerkleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
