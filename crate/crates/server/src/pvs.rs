//! The proof validation server: proof checks, nullifier burning, key delivery.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::sync::{Arc, Mutex, RwLock};

use anonkey_core::entropy::EntropySource;
use anonkey_core::kem::{encap, EncapsulatedKey, KemPublicKey};
use anonkey_core::zkp::{verify_bytes, Statement, VerificationKey, Verdict};
use anonkey_core::Digest;
use anonkey_tunnel::{Delivery, KeyRequest, KeyRequestHandler, RejectCode, Rejection};
use serde::{Deserialize, Serialize};

use crate::nullifiers::NullifierList;
use crate::registry::{load_registry, AuthServer};
use crate::store::{unix_now, DataDir};

/// Current root plus retained old roots, as published by the AS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootsSnapshot {
    pub root: Digest,
    pub old_roots: Vec<Digest>,
}

/// Where the PVS learns about registrations.
pub trait RegistrySource: Send + Sync {
    fn fetch(&self) -> Result<RootsSnapshot, String>;
}

/// Reads the AS registry file from the shared data directory.
pub struct SharedDirRegistry(pub DataDir);

impl RegistrySource for SharedDirRegistry {
    fn fetch(&self) -> Result<RootsSnapshot, String> {
        let s = load_registry(&self.0).map_err(|e| e.to_string())?;
        Ok(RootsSnapshot {
            root: s.root(),
            old_roots: s.old_roots,
        })
    }
}

/// Asks a co-located [`AuthServer`] directly.
pub struct InProcessRegistry(pub Arc<AuthServer>);

impl RegistrySource for InProcessRegistry {
    fn fetch(&self) -> Result<RootsSnapshot, String> {
        let s = self.0.snapshot();
        Ok(RootsSnapshot {
            root: s.root(),
            old_roots: s.old_roots.clone(),
        })
    }
}

/// Polls `GET {base}/v1/old-roots` on a remote AS.
pub struct HttpRegistry {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpRegistry {
    pub fn new(base: &str) -> Self {
        Self {
            url: format!("{}/v1/old-roots", base.trim_end_matches('/')),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl RegistrySource for HttpRegistry {
    fn fetch(&self) -> Result<RootsSnapshot, String> {
        self.client
            .get(&self.url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Default)]
struct RootView {
    root: Option<Digest>,
    old_roots: HashSet<Digest>,
    old_root_count: usize,
    synced_at: Option<u64>,
    sync_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub root: Option<Digest>,
    pub old_roots: usize,
    pub nullifiers: usize,
    pub last_sync: Option<u64>,
    pub sync_error: Option<String>,
}

/// One line of the redemption log. Holds nothing the AS also stores except the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedemptionRecord {
    pub nullifier: Digest,
    pub root: Digest,
    pub proof: String,
    pub timestamp: u64,
}

pub struct ProofValidationServer {
    vk: VerificationKey,
    max_t: u32,
    source: Box<dyn RegistrySource>,
    view: RwLock<RootView>,
    nullifiers: Mutex<NullifierList>,
    entropy: Arc<dyn EntropySource>,
    redemptions: Mutex<Option<File>>,
}

impl ProofValidationServer {
    pub fn new(
        vk: VerificationKey,
        source: Box<dyn RegistrySource>,
        nullifiers: NullifierList,
        entropy: Arc<dyn EntropySource>,
        max_t: u32,
    ) -> Self {
        let pvs = Self {
            vk,
            max_t,
            source,
            view: RwLock::new(RootView::default()),
            nullifiers: Mutex::new(nullifiers),
            entropy,
            redemptions: Mutex::new(None),
        };
        if let Err(e) = pvs.sync_registry() {
            log::warn!("initial registry sync failed: {e}");
        }
        pvs
    }

    /// Appends accepted redemptions to `redemptions.jsonl` under `dir`.
    pub fn with_redemption_log(self, dir: &DataDir) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.pvs_dir())?;
        let f = OpenOptions::new().create(true).append(true).open(dir.redemptions())?;
        *self.redemptions.lock().expect("log lock poisoned") = Some(f);
        Ok(self)
    }

    pub fn verification_key(&self) -> &VerificationKey {
        &self.vk
    }

    pub fn max_t(&self) -> u32 {
        self.max_t
    }

    /// Pulls the latest roots. On failure the previous view is kept and
    /// flagged stale. Returns whether anything changed.
    pub fn sync_registry(&self) -> Result<bool, String> {
        match self.source.fetch() {
            Ok(snap) => {
                let mut v = self.view.write().expect("view lock poisoned");
                let changed = v.root != Some(snap.root) || v.old_root_count != snap.old_roots.len();
                v.root = Some(snap.root);
                v.old_root_count = snap.old_roots.len();
                v.old_roots = snap.old_roots.into_iter().collect();
                v.synced_at = Some(unix_now());
                v.sync_error = None;
                Ok(changed)
            }
            Err(e) => {
                log::warn!("registry sync failed, keeping last snapshot: {e}");
                self.view.write().expect("view lock poisoned").sync_error = Some(e.clone());
                Err(e)
            }
        }
    }

    pub fn root_is_valid(&self, root: &Digest) -> bool {
        let v = self.view.read().expect("view lock poisoned");
        v.root == Some(*root) || v.old_roots.contains(root)
    }

    /// Accepts iff the root is known, the nullifier unspent and the proof valid;
    /// on acceptance the nullifier is burned before returning.
    pub fn verify_proof(&self, proof: &[u8], x: &Statement) -> Result<(), Rejection> {
        if !self.root_is_valid(&x.root) {
            return Err(Rejection::new(RejectCode::RootInvalid, "root is neither current nor an old root"));
        }
        if self.nullifiers.lock().expect("nullifier lock poisoned").contains(&x.nullifier) {
            return Err(Rejection::new(RejectCode::NullifierSpent, "nullifier already used"));
        }
        match verify_bytes(&self.vk, x, proof) {
            Verdict::Accept => {}
            Verdict::Reject(reason) => return Err(Rejection::new(RejectCode::ProofInvalid, reason.to_string())),
        }
        // Check-and-insert under one lock: concurrent copies of the same
        // statement race here and exactly one wins.
        let inserted = self
            .nullifiers
            .lock()
            .expect("nullifier lock poisoned")
            .insert(x.nullifier)
            .map_err(|e| {
                log::error!("cannot persist nullifier: {e}");
                Rejection::new(RejectCode::Internal, "nullifier store unavailable")
            })?;
        if !inserted {
            return Err(Rejection::new(RejectCode::NullifierSpent, "nullifier already used"));
        }
        self.record_redemption(x, proof);
        Ok(())
    }

    fn record_redemption(&self, x: &Statement, proof: &[u8]) {
        let mut guard = self.redemptions.lock().expect("log lock poisoned");
        let Some(f) = guard.as_mut() else { return };
        let rec = RedemptionRecord {
            nullifier: x.nullifier.0,
            root: x.root,
            proof: hex::encode(proof),
            timestamp: unix_now(),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        if let Err(e) = writeln!(f, "{line}") {
            log::error!("cannot append redemption record: {e}");
        }
    }

    pub fn check_key_size(&self, t: u32) -> Result<(), Rejection> {
        if t == 0 || t > self.max_t {
            return Err(Rejection::new(
                RejectCode::KeySizeOutOfRange,
                format!("t must be within 1..={}", self.max_t),
            ));
        }
        Ok(())
    }

    /// Draws `t` fresh bytes and encapsulates them under `pk`. The plaintext
    /// buffer is zeroized on drop.
    pub fn deliver_key(&self, t: u32, pk: &KemPublicKey) -> Result<EncapsulatedKey, Rejection> {
        self.check_key_size(t)?;
        let ikm = self.entropy.generate(t as usize).map_err(|e| {
            log::error!("entropy source failed: {e}");
            Rejection::new(RejectCode::DeliveryFailed, "entropy source unavailable")
        })?;
        encap(&ikm, pk, &mut rand::rngs::OsRng).map_err(|e| {
            log::error!("encapsulation failed: {e}");
            Rejection::new(RejectCode::DeliveryFailed, "encapsulation failed")
        })
    }

    pub fn nullifiers(&self) -> Vec<Digest> {
        self.nullifiers.lock().expect("nullifier lock poisoned").entries()
    }

    pub fn health(&self) -> Health {
        let v = self.view.read().expect("view lock poisoned");
        Health {
            status: if v.sync_error.is_some() || v.root.is_none() {
                "stale".into()
            } else {
                "ok".into()
            },
            root: v.root,
            old_roots: v.old_root_count,
            nullifiers: self.nullifiers.lock().expect("nullifier lock poisoned").len(),
            last_sync: v.synced_at,
            sync_error: v.sync_error.clone(),
        }
    }
}

struct PendingDelivery<'a> {
    pvs: &'a ProofValidationServer,
    t: u32,
    pk: KemPublicKey,
}

impl Delivery for PendingDelivery<'_> {
    fn deliver(self: Box<Self>) -> Result<Vec<u8>, Rejection> {
        match self.pvs.deliver_key(self.t, &self.pk) {
            Ok(enc) => Ok(enc.to_bytes()),
            Err(r) => {
                log::error!("delivery failed after the nullifier was spent; it stays spent: {r}");
                Err(r)
            }
        }
    }
}

impl KeyRequestHandler for ProofValidationServer {
    /// Parameter checks run before the proof so a bad request never burns a nullifier.
    fn validate<'a>(&'a self, req: &KeyRequest) -> Result<Box<dyn Delivery + 'a>, Rejection> {
        self.check_key_size(req.t)?;
        let expected = self.vk.config().kem_profile;
        if req.pk.profile() != expected {
            return Err(Rejection::new(
                RejectCode::BadRequest,
                format!("public key must be {expected}"),
            ));
        }
        self.verify_proof(&req.proof, &req.statement)?;
        Ok(Box::new(PendingDelivery {
            pvs: self,
            t: req.t,
            pk: req.pk.clone(),
        }))
    }
}
