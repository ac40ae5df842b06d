//! REST endpoints of both servers. Digests are hex strings in JSON bodies.
//!
//! AS, under `/v1`:
//!
//! | method | path             | body / response                                     |
//! |--------|------------------|-----------------------------------------------------|
//! | POST   | `/register`      | `{certificate, commitment, signature}` → `{accepted, new_root}` |
//! | GET    | `/tree`          | JSON tree view                                      |
//! | GET    | `/tree/snapshot` | binary tree snapshot                                |
//! | GET    | `/old-roots`     | `{root, old_roots}`                                 |
//! | GET    | `/vk`            | verification key bytes                              |
//! | GET    | `/proving-key`   | proving key bytes                                   |
//! | GET    | `/config`        | relation parameters and CRS fingerprint             |
//! | GET    | `/nullifiers`    | `{nullifiers}`, read from the shared PVS store      |
//!
//! PVS, under `/v1`: `GET /health`, `GET /nullifiers`.

use std::sync::Arc;

use anonkey_core::cert::{Certificate, Signature};
use anonkey_core::zkp::{BackendKind, Crs, RelationConfig};
use anonkey_core::{Commitment, Digest};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::pvs::{ProofValidationServer, RootsSnapshot};
use crate::registry::{AuthServer, RegisterError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    /// Hex-encoded certificate.
    pub certificate: String,
    pub commitment: Digest,
    /// Hex-encoded signature over the commitment digest.
    pub signature: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub new_root: Option<Digest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigResponse {
    #[serde(flatten)]
    pub relation: RelationConfig,
    pub backend: BackendKind,
    pub fingerprint: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullifiersResponse {
    pub nullifiers: Vec<Digest>,
}

type NullifierView = dyn Fn() -> Vec<Digest> + Send + Sync;

#[derive(Clone)]
pub struct AsState {
    auth: Arc<AuthServer>,
    config: ConfigResponse,
    vk: Arc<Vec<u8>>,
    pk: Arc<Vec<u8>>,
    nullifiers: Arc<NullifierView>,
}

impl AsState {
    pub fn new(auth: Arc<AuthServer>, crs: &Crs, nullifiers: Arc<NullifierView>) -> Self {
        Self {
            auth,
            config: ConfigResponse {
                relation: *crs.config(),
                backend: crs.verification_key.backend(),
                fingerprint: crs.fingerprint(),
            },
            vk: Arc::new(crs.verification_key.to_bytes()),
            pk: Arc::new(crs.proving_key.to_bytes()),
            nullifiers,
        }
    }
}

fn refused(status: StatusCode, error: &str, reason: String) -> Response {
    (
        status,
        Json(RegisterResponse {
            accepted: false,
            new_root: None,
            error: Some(error.into()),
            reason: Some(reason),
        }),
    )
        .into_response()
}

async fn register(State(s): State<AsState>, Json(req): Json<RegisterRequest>) -> Response {
    let cert = match hex::decode(&req.certificate)
        .map_err(|e| e.to_string())
        .and_then(|b| Certificate::from_bytes(&b).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => return refused(StatusCode::BAD_REQUEST, "malformed-certificate", e),
    };
    let Some(sig) = hex::decode(&req.signature).ok().and_then(|b| Signature::from_slice(&b)) else {
        return refused(StatusCode::BAD_REQUEST, "malformed-signature", "expected 64 hex bytes".into());
    };
    let auth = s.auth.clone();
    let result = tokio::task::spawn_blocking(move || auth.register(&cert, Commitment(req.commitment), &sig)).await;
    match result {
        Ok(Ok(root)) => Json(RegisterResponse {
            accepted: true,
            new_root: Some(root),
            error: None,
            reason: None,
        })
        .into_response(),
        Ok(Err(e)) => {
            let (status, code) = match &e {
                RegisterError::Unauthorized(_) => (StatusCode::FORBIDDEN, "unauthorized"),
                RegisterError::Full { .. } => (StatusCode::INSUFFICIENT_STORAGE, "tree-full"),
                RegisterError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate"),
                RegisterError::InvalidCommitment(_) => (StatusCode::BAD_REQUEST, "invalid-commitment"),
                RegisterError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            };
            refused(status, code, e.to_string())
        }
        Err(e) => refused(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn tree(State(s): State<AsState>) -> Response {
    Json(s.auth.snapshot().tree.to_view()).into_response()
}

async fn tree_snapshot(State(s): State<AsState>) -> Response {
    octets(s.auth.snapshot().tree.to_snapshot())
}

async fn old_roots(State(s): State<AsState>) -> Json<RootsSnapshot> {
    let snap = s.auth.snapshot();
    Json(RootsSnapshot {
        root: snap.root(),
        old_roots: snap.old_roots.clone(),
    })
}

fn octets(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

pub fn as_router(state: AsState) -> Router {
    Router::new()
        .route("/v1/register", post(register))
        .route("/v1/tree", get(tree))
        .route("/v1/tree/snapshot", get(tree_snapshot))
        .route("/v1/old-roots", get(old_roots))
        .route("/v1/vk", get(|State(s): State<AsState>| async move { octets((*s.vk).clone()) }))
        .route(
            "/v1/proving-key",
            get(|State(s): State<AsState>| async move { octets((*s.pk).clone()) }),
        )
        .route("/v1/config", get(|State(s): State<AsState>| async move { Json(s.config.clone()) }))
        .route(
            "/v1/nullifiers",
            get(|State(s): State<AsState>| async move {
                Json(NullifiersResponse {
                    nullifiers: (s.nullifiers)(),
                })
            }),
        )
        .with_state(state)
}

pub fn pvs_router(pvs: Arc<ProofValidationServer>) -> Router {
    Router::new()
        .route(
            "/v1/health",
            get(|State(p): State<Arc<ProofValidationServer>>| async move { Json(p.health()) }),
        )
        .route(
            "/v1/nullifiers",
            get(|State(p): State<Arc<ProofValidationServer>>| async move {
                Json(NullifiersResponse {
                    nullifiers: p.nullifiers(),
                })
            }),
        )
        .with_state(pvs)
}

/// Serves `router` on an already bound listener until the process exits.
/// Blocks the calling thread on its own single-threaded runtime.
pub fn serve_blocking(listener: std::net::TcpListener, router: Router) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, router).await
    })
}
