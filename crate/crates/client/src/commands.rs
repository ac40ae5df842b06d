//! The user-facing protocol steps.

use std::path::Path;

use anonkey_core::cert::{sign, Certificate, SubjectSigningKey};
use anonkey_core::entropy::EntropySource;
use anonkey_core::kem::{decap, EncapsulatedKey};
use anonkey_core::note::user_init;
use anonkey_core::zkp::{instance_for, prove, verify, Proof, ProvingKey, Statement, VerificationKey};
use anonkey_core::{Digest, HashProfile, KemProfile, Lambda, MerkleTree, Note};
use anonkey_tunnel::{request_key, FrameTransport, KeyRequest, KeyResponse, RejectCode};
use rand_core::CryptoRngCore;
use zeroize::Zeroizing;

use crate::service::AuthService;
use crate::store::{write_private, NoteRecord, NoteStatus, UserStore};
use crate::ClientError;

const PK_CACHE: &str = "pk.bin";
const VK_CACHE: &str = "vk.bin";

/// Creates a note and stores it in the `created` state.
pub fn cmd_init(
    store: &mut UserStore,
    lambda: Lambda,
    kem: KemProfile,
    hash_profile: HashProfile,
    entropy: &dyn EntropySource,
) -> Result<NoteRecord, ClientError> {
    let note = user_init(lambda, kem, entropy).map_err(|e| ClientError::Mismatch(e.to_string()))?;
    Ok(store.add_note(note, hash_profile)?.clone())
}

/// Signs the note's commitment with the certified key and registers it.
pub fn cmd_auth(
    store: &mut UserStore,
    id: &str,
    cert: &Certificate,
    ck: &SubjectSigningKey,
    auth: &dyn AuthService,
) -> Result<Digest, ClientError> {
    let record = store.get(id)?;
    if record.status != NoteStatus::Created {
        return Err(ClientError::WrongState {
            id: id.to_string(),
            status: record.status,
            wanted: NoteStatus::Registered,
        });
    }
    let c = record.commitment;
    let signature = sign(&c.0 .0, ck);
    let root = auth.register(cert, c, &signature)?;
    store.advance(id, NoteStatus::Registered, Some(root))?;
    Ok(root)
}

/// Statement and proof for `note` against `tree`.
pub fn create_proof(
    note: &Note,
    tree: &MerkleTree,
    pk: &ProvingKey,
    rng: &mut dyn CryptoRngCore,
) -> Result<(Statement, Proof), ClientError> {
    if !tree.contains(&note.commitment(tree.profile()).0) {
        return Err(ClientError::StaleRegistration);
    }
    let (x, w) = instance_for(note, tree)?;
    let proof = prove(pk, &x, &w, &mut &mut *rng)?;
    Ok((x, proof))
}

fn cached_keys(store: &UserStore, auth: &dyn AuthService) -> Result<(ProvingKey, VerificationKey), ClientError> {
    let remote = auth.config()?;
    let pk = match store.cached_blob(PK_CACHE).and_then(|b| ProvingKey::from_bytes(&b).ok()) {
        Some(pk) if pk.material.fingerprint == remote.fingerprint => pk,
        _ => {
            let pk = auth.proving_key()?;
            store.cache_blob(PK_CACHE, &pk.to_bytes())?;
            pk
        }
    };
    let vk = match store.cached_blob(VK_CACHE).and_then(|b| VerificationKey::from_bytes(&b).ok()) {
        Some(vk) if vk.fingerprint() == remote.fingerprint => vk,
        _ => {
            let vk = auth.verification_key()?;
            store.cache_blob(VK_CACHE, &vk.to_bytes())?;
            vk
        }
    };
    if pk.material.fingerprint != remote.fingerprint || vk.fingerprint() != remote.fingerprint {
        return Err(ClientError::Mismatch("AS served keys that do not match its published configuration".into()));
    }
    Ok((pk, vk))
}

/// Refetches the tree, proves membership and checks the proof locally.
///
/// The note is left `registered`; it is spent only when a key is delivered.
pub fn cmd_prove(
    store: &UserStore,
    id: &str,
    t: u32,
    auth: &dyn AuthService,
    rng: &mut dyn CryptoRngCore,
) -> Result<KeyRequest, ClientError> {
    let record = store.get(id)?;
    if record.status != NoteStatus::Registered {
        return Err(ClientError::WrongState {
            id: id.to_string(),
            status: record.status,
            wanted: NoteStatus::Spent,
        });
    }
    let note = record.note();
    let tree = auth.tree()?;
    store.cache_tree(&tree)?;
    if tree.profile() != record.hash_profile {
        return Err(ClientError::Mismatch(format!(
            "AS tree uses the {:?} hash profile, the note was created for {:?}",
            tree.profile(),
            record.hash_profile
        )));
    }
    let (pk, vk) = cached_keys(store, auth)?;
    let cfg = pk.config();
    if cfg.lambda != note.lambda() || cfg.kem_profile != note.kem_profile() {
        return Err(ClientError::Mismatch("note parameters differ from the relation the AS serves".into()));
    }
    let (x, proof) = create_proof(note, &tree, &pk, rng)?;
    let verdict = verify(&vk, &x, &proof);
    if !verdict.is_accept() {
        return Err(ClientError::LocalVerify(format!("{verdict:?}")));
    }
    Ok(KeyRequest {
        statement: x,
        proof: proof.to_bytes(),
        t,
        pk: note.public_key().clone(),
    })
}

#[derive(Debug)]
pub enum RequestOutcome {
    /// Decapsulated key of the requested length.
    Key(Zeroizing<Vec<u8>>),
    /// Delivered ciphertext; the note's secret key is not in this store.
    Sealed(Vec<u8>),
}

/// Runs a tunnel session offering `bundle` and opens the delivered key.
///
/// With a store holding the bundle's note, the note must still be
/// `registered` and ends `spent` once the PVS has consumed the nullifier.
/// Without one, the sealed key is returned for opening elsewhere.
pub fn cmd_request_key<T: FrameTransport>(
    store: Option<&mut UserStore>,
    bundle: &KeyRequest,
    transport: T,
) -> Result<RequestOutcome, ClientError> {
    let mut local = None;
    if let Some(store) = store {
        let found = match store.find_by_nullifier(&bundle.statement.nullifier) {
            Some(r) if r.status != NoteStatus::Registered => {
                return Err(ClientError::WrongState {
                    id: r.id.clone(),
                    status: r.status,
                    wanted: NoteStatus::Spent,
                });
            }
            Some(r) if r.note().public_key() != &bundle.pk => {
                return Err(ClientError::Mismatch("bundle key does not belong to the stored note".into()));
            }
            Some(r) => Some((r.id.clone(), r.note().clone())),
            None => None,
        };
        local = found.map(|(id, note)| (id, note, store));
    }
    let response = request_key(transport, bundle)?;
    match response {
        KeyResponse::Delivered(bytes) => {
            let Some((id, note, store)) = local else {
                return Ok(RequestOutcome::Sealed(bytes));
            };
            store.advance(&id, NoteStatus::Spent, None)?;
            let enc = EncapsulatedKey::from_bytes(&bytes);
            match decap(&enc, note.secret_key()) {
                Ok(key) if key.len() == bundle.t as usize => Ok(RequestOutcome::Key(key)),
                Ok(key) => Err(ClientError::DeliveryFailed(format!(
                    "asked for {} bytes, got {}",
                    bundle.t,
                    key.len()
                ))),
                Err(e) => Err(ClientError::DeliveryFailed(e.to_string())),
            }
        }
        KeyResponse::Rejected(r) => {
            if let Some((id, _, store)) = local {
                if matches!(r.code, RejectCode::NullifierSpent | RejectCode::DeliveryFailed) {
                    log::warn!("{id}: nullifier consumed without a usable key ({})", r.code);
                    store.advance(&id, NoteStatus::Spent, None)?;
                }
            }
            Err(ClientError::PvsRejected(r))
        }
    }
}

pub fn write_bundle(path: &Path, bundle: &KeyRequest) -> Result<(), ClientError> {
    write_private(path, &bundle.to_bytes())
}

pub fn read_bundle(path: &Path) -> Result<KeyRequest, ClientError> {
    let bytes = std::fs::read(path)?;
    KeyRequest::from_bytes(&bytes).map_err(|e| ClientError::Mismatch(format!("not a proof bundle: {e}")))
}

/// Writes key material readable by the owner only.
pub fn write_key(path: &Path, key: &[u8]) -> Result<(), ClientError> {
    write_private(path, key)
}
