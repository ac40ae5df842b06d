//! Passphrase-protected note store.
//!
//! Layout of a store directory:
//!
//! ```text
//! notes.enc    encrypted note records
//! store.lock   present while a process holds the store
//! tree.bin     last tree snapshot fetched from the AS
//! vk.bin       cached verification key
//! pk.bin       cached proving key
//! ```
//!
//! `notes.enc` is `magic ∥ version ∥ salt(16) ∥ iterations(u32 BE) ∥
//! nonce(24) ∥ ciphertext`. The key is PBKDF2-HMAC-SHA256 of the passphrase;
//! the cipher is XChaCha20-Poly1305 with the header as associated data. A
//! fresh nonce is drawn on every save.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anonkey_core::{Commitment, Digest, HashProfile, MerkleTree, Note, Nullifier};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

use crate::ClientError;

const MAGIC: &[u8; 4] = b"AKNS";
const VERSION: u8 = 1;
const SALT_LEN: usize = 16;
const NONCE_LEN: usize = 24;
const HEADER_LEN: usize = 4 + 1 + SALT_LEN + 4 + NONCE_LEN;

pub const DEFAULT_ITERATIONS: u32 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteStatus {
    Created,
    Registered,
    Spent,
}

impl NoteStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteStatus::Created => "created",
            NoteStatus::Registered => "registered",
            NoteStatus::Spent => "spent",
        }
    }
}

#[derive(Clone)]
pub struct NoteRecord {
    pub id: String,
    pub status: NoteStatus,
    pub hash_profile: HashProfile,
    pub commitment: Commitment,
    pub nullifier: Nullifier,
    /// Root returned by the AS when the commitment was registered.
    pub registered_root: Option<Digest>,
    pub created: u64,
    note: Note,
}

impl NoteRecord {
    pub fn note(&self) -> &Note {
        &self.note
    }
}

impl std::fmt::Debug for NoteRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoteRecord")
            .field("id", &self.id)
            .field("status", &self.status)
            .field("commitment", &self.commitment.0)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct StoredRecord {
    id: String,
    status: NoteStatus,
    hash_profile: HashProfile,
    registered_root: Option<Digest>,
    created: u64,
    note: String,
}

#[derive(Serialize, Deserialize, Default)]
struct StoredNotes {
    next_id: u64,
    notes: Vec<StoredRecord>,
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: PathBuf) -> Result<Self, ClientError> {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(ClientError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct UserStore {
    dir: PathBuf,
    key: Zeroizing<[u8; 32]>,
    salt: [u8; SALT_LEN],
    iterations: u32,
    next_id: u64,
    records: Vec<NoteRecord>,
    _lock: LockGuard,
}

fn derive_key(passphrase: &[u8], salt: &[u8], iterations: u32) -> Zeroizing<[u8; 32]> {
    let mut key = Zeroizing::new([0u8; 32]);
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase, salt, iterations, key.as_mut());
    key
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl UserStore {
    pub fn notes_path(dir: &Path) -> PathBuf {
        dir.join("notes.enc")
    }

    pub fn exists(dir: &Path) -> bool {
        Self::notes_path(dir).exists()
    }

    /// Creates an empty store. Fails if one already exists in `dir`.
    pub fn create(dir: &Path, passphrase: &[u8], iterations: u32) -> Result<Self, ClientError> {
        fs::create_dir_all(dir)?;
        let lock = LockGuard::acquire(dir.join("store.lock"))?;
        if Self::exists(dir) {
            return Err(ClientError::Store(format!("{} already holds a note store", dir.display())));
        }
        let mut salt = [0u8; SALT_LEN];
        rand::rngs::OsRng.fill_bytes(&mut salt);
        let store = Self {
            dir: dir.to_path_buf(),
            key: derive_key(passphrase, &salt, iterations),
            salt,
            iterations,
            next_id: 1,
            records: Vec::new(),
            _lock: lock,
        };
        store.save()?;
        Ok(store)
    }

    pub fn open(dir: &Path, passphrase: &[u8]) -> Result<Self, ClientError> {
        let lock = LockGuard::acquire(dir.join("store.lock"))?;
        let bytes = match fs::read(Self::notes_path(dir)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(ClientError::Store(format!("no note store in {}", dir.display())))
            }
            Err(e) => return Err(e.into()),
        };
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC || bytes[4] != VERSION {
            return Err(ClientError::Store("not a note store file".into()));
        }
        let header = &bytes[..HEADER_LEN];
        let mut salt = [0u8; SALT_LEN];
        salt.copy_from_slice(&header[5..5 + SALT_LEN]);
        let iterations = u32::from_be_bytes(header[5 + SALT_LEN..9 + SALT_LEN].try_into().unwrap());
        let nonce = XNonce::from_slice(&header[9 + SALT_LEN..]);
        let key = derive_key(passphrase, &salt, iterations);
        let cipher = XChaCha20Poly1305::new(key.as_ref().into());
        let plain = Zeroizing::new(
            cipher
                .decrypt(nonce, Payload { msg: &bytes[HEADER_LEN..], aad: header })
                .map_err(|_| ClientError::Store("wrong passphrase or corrupt store".into()))?,
        );
        let stored: StoredNotes =
            serde_json::from_slice(&plain).map_err(|e| ClientError::Store(format!("corrupt store: {e}")))?;
        let mut records = Vec::with_capacity(stored.notes.len());
        for r in stored.notes {
            let raw = Zeroizing::new(hex::decode(&r.note).map_err(|_| ClientError::Store("corrupt note".into()))?);
            let note = Note::from_bytes(&raw).map_err(|e| ClientError::Store(format!("corrupt note: {e}")))?;
            records.push(NoteRecord {
                commitment: note.commitment(r.hash_profile),
                nullifier: note.nullifier(r.hash_profile),
                id: r.id,
                status: r.status,
                hash_profile: r.hash_profile,
                registered_root: r.registered_root,
                created: r.created,
                note,
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            key,
            salt,
            iterations,
            next_id: stored.next_id,
            records,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn save(&self) -> Result<(), ClientError> {
        let mut stored = StoredNotes {
            next_id: self.next_id,
            notes: self
                .records
                .iter()
                .map(|r| StoredRecord {
                    id: r.id.clone(),
                    status: r.status,
                    hash_profile: r.hash_profile,
                    registered_root: r.registered_root,
                    created: r.created,
                    note: hex::encode(&*r.note.to_bytes()),
                })
                .collect(),
        };
        let plain = Zeroizing::new(serde_json::to_vec(&stored).expect("note records serialize"));
        for r in &mut stored.notes {
            zeroize::Zeroize::zeroize(&mut r.note);
        }
        let mut nonce = [0u8; NONCE_LEN];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let mut out = Vec::with_capacity(HEADER_LEN + plain.len() + 16);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.iterations.to_be_bytes());
        out.extend_from_slice(&nonce);
        let cipher = XChaCha20Poly1305::new(self.key.as_ref().into());
        let ct = cipher
            .encrypt(XNonce::from_slice(&nonce), Payload { msg: &plain, aad: &out })
            .map_err(|_| ClientError::Store("encryption failed".into()))?;
        out.extend_from_slice(&ct);
        write_private(&Self::notes_path(&self.dir), &out)
    }

    /// Adds a freshly created note and persists the store.
    pub fn add_note(&mut self, note: Note, hash_profile: HashProfile) -> Result<&NoteRecord, ClientError> {
        let id = format!("note-{}", self.next_id);
        self.next_id += 1;
        self.records.push(NoteRecord {
            id,
            status: NoteStatus::Created,
            hash_profile,
            commitment: note.commitment(hash_profile),
            nullifier: note.nullifier(hash_profile),
            registered_root: None,
            created: now(),
            note,
        });
        self.save()?;
        Ok(self.records.last().unwrap())
    }

    pub fn notes(&self) -> &[NoteRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Result<&NoteRecord, ClientError> {
        self.records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| ClientError::UnknownNote(id.to_string()))
    }

    pub fn find_by_nullifier(&self, n: &Nullifier) -> Option<&NoteRecord> {
        self.records.iter().find(|r| r.nullifier == *n)
    }

    /// Moves a note forward in its lifecycle and persists the store.
    pub fn advance(&mut self, id: &str, to: NoteStatus, root: Option<Digest>) -> Result<(), ClientError> {
        let r = self
            .records
            .iter_mut()
            .find(|r| r.id == id)
            .ok_or_else(|| ClientError::UnknownNote(id.to_string()))?;
        if to <= r.status {
            return Err(ClientError::WrongState { id: id.to_string(), status: r.status, wanted: to });
        }
        r.status = to;
        if root.is_some() {
            r.registered_root = root;
        }
        self.save()
    }

    pub fn cache_tree(&self, tree: &MerkleTree) -> Result<(), ClientError> {
        write_private(&self.dir.join("tree.bin"), &tree.to_snapshot())
    }

    pub fn cached_tree(&self) -> Option<MerkleTree> {
        fs::read(self.dir.join("tree.bin")).ok().and_then(|b| MerkleTree::from_snapshot(&b).ok())
    }

    pub fn cache_blob(&self, name: &str, bytes: &[u8]) -> Result<(), ClientError> {
        write_private(&self.dir.join(name), bytes)
    }

    pub fn cached_blob(&self, name: &str) -> Option<Vec<u8>> {
        fs::read(self.dir.join(name)).ok()
    }
}

/// Writes via a temp file and rename, readable by the owner only.
pub fn write_private(path: &Path, bytes: &[u8]) -> Result<(), ClientError> {
    let tmp = path.with_extension("tmp");
    {
        let mut opts = OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
