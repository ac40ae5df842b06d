//! Access to the authentication server.

use std::time::Duration;

use anonkey_core::cert::{Certificate, Signature};
use anonkey_core::zkp::{BackendKind, ProvingKey, RelationConfig, VerificationKey};
use anonkey_core::{Commitment, Digest, MerkleTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ServiceError {
    /// The AS answered and refused. `error` is its reason code, verbatim.
    #[error("{error}")]
    Rejected { error: String, reason: Option<String> },
    #[error("{0}")]
    Unavailable(String),
    #[error("unexpected response: {0}")]
    Invalid(String),
}

/// Relation parameters the AS publishes alongside its CRS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    #[serde(flatten)]
    pub relation: RelationConfig,
    pub backend: BackendKind,
    pub fingerprint: Digest,
}

pub trait AuthService {
    /// Returns the new root on acceptance.
    fn register(&self, cert: &Certificate, commitment: Commitment, signature: &Signature) -> Result<Digest, ServiceError>;
    fn tree(&self) -> Result<MerkleTree, ServiceError>;
    fn config(&self) -> Result<RemoteConfig, ServiceError>;
    fn proving_key(&self) -> Result<ProvingKey, ServiceError>;
    fn verification_key(&self) -> Result<VerificationKey, ServiceError>;
}

#[derive(Serialize)]
struct RegisterBody {
    certificate: String,
    commitment: Digest,
    signature: String,
}

#[derive(Deserialize)]
struct RegisterReply {
    accepted: bool,
    new_root: Option<Digest>,
    error: Option<String>,
    reason: Option<String>,
}

/// Talks to the AS's REST API.
pub struct HttpAuthService {
    base: String,
    http: reqwest::blocking::Client,
}

impl HttpAuthService {
    pub fn new(base: &str) -> Result<Self, ServiceError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        Ok(Self { base: base.trim_end_matches('/').to_string(), http })
    }

    fn get_bytes(&self, path: &str) -> Result<Vec<u8>, ServiceError> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ServiceError::Invalid(format!("GET {path}: HTTP {}", resp.status())));
        }
        resp.bytes()
            .map(|b| b.to_vec())
            .map_err(|e| ServiceError::Unavailable(e.to_string()))
    }
}

impl AuthService for HttpAuthService {
    fn register(&self, cert: &Certificate, commitment: Commitment, signature: &Signature) -> Result<Digest, ServiceError> {
        let body = RegisterBody {
            certificate: hex::encode(cert.to_bytes()),
            commitment: commitment.0,
            signature: hex::encode(signature.0),
        };
        let resp = self
            .http
            .post(format!("{}/v1/register", self.base))
            .json(&body)
            .send()
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let reply: RegisterReply = resp
            .json()
            .map_err(|e| ServiceError::Invalid(format!("register: HTTP {status}: {e}")))?;
        match (reply.accepted, reply.new_root) {
            (true, Some(root)) => Ok(root),
            (true, None) => Err(ServiceError::Invalid("accepted without a root".into())),
            (false, _) => Err(ServiceError::Rejected {
                error: reply.error.unwrap_or_else(|| format!("http-{}", status.as_u16())),
                reason: reply.reason,
            }),
        }
    }

    fn tree(&self) -> Result<MerkleTree, ServiceError> {
        let bytes = self.get_bytes("/v1/tree/snapshot")?;
        MerkleTree::from_snapshot(&bytes).map_err(|e| ServiceError::Invalid(e.to_string()))
    }

    fn config(&self) -> Result<RemoteConfig, ServiceError> {
        let bytes = self.get_bytes("/v1/config")?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Invalid(e.to_string()))
    }

    fn proving_key(&self) -> Result<ProvingKey, ServiceError> {
        let bytes = self.get_bytes("/v1/proving-key")?;
        ProvingKey::from_bytes(&bytes).map_err(|e| ServiceError::Invalid(e.to_string()))
    }

    fn verification_key(&self) -> Result<VerificationKey, ServiceError> {
        let bytes = self.get_bytes("/v1/vk")?;
        VerificationKey::from_bytes(&bytes).map_err(|e| ServiceError::Invalid(e.to_string()))
    }
}
