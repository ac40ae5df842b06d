//! User side of the protocol: create a note, register its commitment with
//! the authentication server, prove membership, and redeem the proof for a
//! key at the proof validation server.
//!
//! Notes live in an encrypted [`store::UserStore`]. A note moves
//! `created → registered → spent` and every command checks the state before
//! touching the network.

pub mod commands;
pub mod scan;
pub mod service;
pub mod store;

use std::path::PathBuf;

use anonkey_tunnel::{Rejection, TunnelError};
use thiserror::Error;

pub use commands::{cmd_auth, cmd_init, cmd_prove, cmd_request_key, create_proof, read_bundle, write_bundle, write_key, RequestOutcome};
pub use service::{AuthService, HttpAuthService, RemoteConfig, ServiceError};
pub use store::{NoteRecord, NoteStatus, UserStore};

/// Which party a failure came from; the CLI maps these to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureSource {
    Local,
    AuthServer,
    ValidationServer,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("note store is locked by another process ({0}); remove the file if no other process is running")]
    Locked(PathBuf),
    #[error("note store: {0}")]
    Store(String),
    #[error("no note with id {0}")]
    UnknownNote(String),
    #[error("note {id} is {}, cannot move it to {}", status.as_str(), wanted.as_str())]
    WrongState { id: String, status: store::NoteStatus, wanted: store::NoteStatus },
    #[error("commitment is not in the fetched tree; register the note or retry once the AS has published it")]
    StaleRegistration,
    #[error("{0}")]
    Mismatch(String),
    #[error("proof failed local verification: {0}")]
    LocalVerify(String),
    #[error("authentication server rejected the request: {error}{}", reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default())]
    AuthRejected { error: String, reason: Option<String> },
    #[error("authentication server unreachable: {0}")]
    AuthUnavailable(String),
    #[error("validation server rejected the request: {0}")]
    PvsRejected(Rejection),
    #[error("tunnel to the validation server failed: {0}")]
    Tunnel(#[from] TunnelError),
    #[error("key was accepted and the note is spent, but the delivered key could not be opened: {0}")]
    DeliveryFailed(String),
    #[error(transparent)]
    Zkp(#[from] anonkey_core::zkp::ZkpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    pub fn source_party(&self) -> FailureSource {
        match self {
            ClientError::AuthRejected { .. } | ClientError::AuthUnavailable(_) => FailureSource::AuthServer,
            ClientError::PvsRejected(_) | ClientError::Tunnel(_) | ClientError::DeliveryFailed(_) => {
                FailureSource::ValidationServer
            }
            _ => FailureSource::Local,
        }
    }
}

impl From<ServiceError> for ClientError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Rejected { error, reason } => ClientError::AuthRejected { error, reason },
            ServiceError::Unavailable(m) | ServiceError::Invalid(m) => ClientError::AuthUnavailable(m),
        }
    }
}
