//! Fixed-depth append-only Merkle tree over commitments.
//!
//! Level 0 is the root, level `depth` holds the leaves. Because leaves are
//! only ever appended left to right, the non-empty nodes of every level form
//! a prefix; only that prefix is stored and everything to its right is the
//! precomputed digest of an empty subtree of the matching height.
//!
//! Fold order: at each level the low bit of the running index decides the
//! side. Bit 0 puts the running digest on the left.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::DecodeError;
use crate::hash::{Digest, HashError, HashProfile, DIGEST_LEN};

pub const MAX_DEPTH: u32 = 32;
const SNAPSHOT_VERSION: u8 = 1;
const SNAPSHOT_HEADER: usize = 1 + 1 + 1 + 8;

#[derive(Debug, Error)]
pub enum MerkleError {
    #[error("tree depth {0} outside 1..=32")]
    DepthOutOfRange(u32),
    #[error("tree is full ({capacity} leaves)")]
    Full { capacity: u64 },
    #[error("commitment {0} is already in the tree")]
    Duplicate(Digest),
    #[error("leaf {0} is not in the tree")]
    NotFound(Digest),
    #[error("index {index} out of range for {capacity} leaves")]
    IndexOutOfRange { index: u64, capacity: u64 },
    #[error("invalid leaf digest: {0}")]
    InvalidDigest(#[from] HashError),
    #[error("malformed tree snapshot: {0}")]
    Snapshot(#[from] DecodeError),
    #[error("snapshot root {found} does not match expected {expected}")]
    RootMismatch { expected: Digest, found: Digest },
}

/// Sibling digests from the leaf level up to just below the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationList {
    pub siblings: Vec<Digest>,
}

impl ValidationList {
    pub fn len(&self) -> usize {
        self.siblings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.siblings.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MerkleTree {
    profile: HashProfile,
    depth: u32,
    /// `levels[k]` holds the occupied prefix of level `k`.
    levels: Vec<Vec<Digest>>,
    /// `empty[k]` is the value of an unoccupied node at level `k`.
    empty: Vec<Digest>,
    index: HashMap<Digest, u64>,
    node_writes: u64,
}

fn capacity_of(depth: u32) -> u64 {
    1u64 << depth
}

impl MerkleTree {
    pub fn empty_tree(profile: HashProfile, depth: u32) -> Result<Self, MerkleError> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(MerkleError::DepthOutOfRange(depth));
        }
        let mut empty = vec![Digest::default(); depth as usize + 1];
        empty[depth as usize] = profile.empty_leaf();
        for k in (0..depth as usize).rev() {
            empty[k] = profile.hash_node(&empty[k + 1], &empty[k + 1]);
        }
        Ok(Self {
            profile,
            depth,
            levels: vec![Vec::new(); depth as usize + 1],
            empty,
            index: HashMap::new(),
            node_writes: 0,
        })
    }

    pub fn profile(&self) -> HashProfile {
        self.profile
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn capacity(&self) -> u64 {
        capacity_of(self.depth)
    }

    pub fn next_free(&self) -> u64 {
        self.levels[self.depth as usize].len() as u64
    }

    pub fn is_full(&self) -> bool {
        self.next_free() == self.capacity()
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[self.depth as usize]
    }

    pub fn contains(&self, h: &Digest) -> bool {
        self.index.contains_key(h)
    }

    /// Total node values written since construction (leaves included).
    pub fn node_writes(&self) -> u64 {
        self.node_writes
    }

    /// The digest at level `k`, position `j`.
    pub fn node(&self, k: u32, j: u64) -> Digest {
        let level = &self.levels[k as usize];
        usize::try_from(j)
            .ok()
            .and_then(|j| level.get(j))
            .copied()
            .unwrap_or(self.empty[k as usize])
    }

    fn set(&mut self, k: usize, j: u64, value: Digest) {
        let level = &mut self.levels[k];
        let j = j as usize;
        if j == level.len() {
            level.push(value);
        } else {
            level[j] = value;
        }
        self.node_writes += 1;
    }

    pub fn get_root(&self) -> Digest {
        self.node(0, 0)
    }

    /// Appends `h` at the first free slot and returns its index.
    pub fn add_leaf(&mut self, h: Digest) -> Result<u64, MerkleError> {
        if self.is_full() {
            return Err(MerkleError::Full {
                capacity: self.capacity(),
            });
        }
        if self.index.contains_key(&h) {
            return Err(MerkleError::Duplicate(h));
        }
        self.profile.validate(&h)?;
        let idx = self.next_free();
        let d = self.depth as usize;
        self.set(d, idx, h);
        let mut j = idx;
        for k in (0..d).rev() {
            j >>= 1;
            let left = self.node(k as u32 + 1, 2 * j);
            let right = self.node(k as u32 + 1, 2 * j + 1);
            let parent = self.profile.hash_node(&left, &right);
            self.set(k, j, parent);
        }
        self.index.insert(h, idx);
        Ok(idx)
    }

    pub fn get_index_of(&self, h: &Digest) -> Result<u64, MerkleError> {
        self.index.get(h).copied().ok_or(MerkleError::NotFound(*h))
    }

    pub fn validation_list(&self, i: u64) -> Result<ValidationList, MerkleError> {
        if i >= self.capacity() {
            return Err(MerkleError::IndexOutOfRange {
                index: i,
                capacity: self.capacity(),
            });
        }
        let mut siblings = Vec::with_capacity(self.depth as usize);
        let mut j = i;
        for k in (1..=self.depth).rev() {
            siblings.push(self.node(k, j ^ 1));
            j >>= 1;
        }
        Ok(ValidationList { siblings })
    }

    /// Binary snapshot: version, profile id, depth, `next_free` (u64 BE),
    /// then the appended leaves.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let leaves = self.leaves();
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER + leaves.len() * DIGEST_LEN);
        out.push(SNAPSHOT_VERSION);
        out.push(self.profile.id());
        out.push(self.depth as u8);
        out.extend_from_slice(&(leaves.len() as u64).to_be_bytes());
        for leaf in leaves {
            out.extend_from_slice(&leaf.0);
        }
        out
    }

    /// Rebuilds a tree from [`to_snapshot`](Self::to_snapshot) output,
    /// recomputing every internal node.
    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, MerkleError> {
        if bytes.is_empty() {
            return Err(DecodeError::Empty.into());
        }
        if bytes[0] != SNAPSHOT_VERSION {
            return Err(DecodeError::Version {
                expected: SNAPSHOT_VERSION,
                found: bytes[0],
            }
            .into());
        }
        if bytes.len() < SNAPSHOT_HEADER {
            return Err(DecodeError::Truncated(bytes.len()).into());
        }
        let profile = HashProfile::from_id(bytes[1]).ok_or_else(|| DecodeError::InvalidField {
            tag: 1,
            reason: format!("unknown hash profile {}", bytes[1]),
        })?;
        let depth = bytes[2] as u32;
        let count = u64::from_be_bytes(bytes[3..11].try_into().expect("8 bytes"));
        let body = &bytes[SNAPSHOT_HEADER..];
        if body.len() % DIGEST_LEN != 0 || (body.len() / DIGEST_LEN) as u64 != count {
            return Err(DecodeError::InvalidField {
                tag: 3,
                reason: format!("next_free {count} does not match {} body bytes", body.len()),
            }
            .into());
        }
        let mut tree = Self::empty_tree(profile, depth)?;
        if count > tree.capacity() {
            return Err(MerkleError::Full {
                capacity: tree.capacity(),
            });
        }
        tree.rebuild(body.chunks(DIGEST_LEN).map(|c| Digest::from_slice(c).expect("32 bytes")))?;
        Ok(tree)
    }

    /// As [`from_snapshot`](Self::from_snapshot), failing if the rebuilt root
    /// differs from `expected`.
    pub fn from_snapshot_checked(bytes: &[u8], expected: &Digest) -> Result<Self, MerkleError> {
        let tree = Self::from_snapshot(bytes)?;
        let found = tree.get_root();
        if found != *expected {
            return Err(MerkleError::RootMismatch {
                expected: *expected,
                found,
            });
        }
        Ok(tree)
    }

    /// Fills an empty tree level by level, hashing each node once.
    fn rebuild(&mut self, leaves: impl Iterator<Item = Digest>) -> Result<(), MerkleError> {
        let d = self.depth as usize;
        for (i, leaf) in leaves.enumerate() {
            if self.index.insert(leaf, i as u64).is_some() {
                return Err(MerkleError::Duplicate(leaf));
            }
            self.profile.validate(&leaf)?;
            self.levels[d].push(leaf);
        }
        self.node_writes += self.levels[d].len() as u64;
        for k in (0..d).rev() {
            let width = self.levels[k + 1].len().div_ceil(2);
            let mut level = Vec::with_capacity(width);
            for j in 0..width as u64 {
                let left = self.node(k as u32 + 1, 2 * j);
                let right = self.node(k as u32 + 1, 2 * j + 1);
                level.push(self.profile.hash_node(&left, &right));
            }
            self.node_writes += level.len() as u64;
            self.levels[k] = level;
        }
        Ok(())
    }

    pub fn to_view(&self) -> TreeView {
        TreeView {
            hash_profile: self.profile,
            depth: self.depth,
            next_free: self.next_free(),
            root: self.get_root(),
            leaves: self.leaves().to_vec(),
        }
    }

    pub fn from_view(view: &TreeView) -> Result<Self, MerkleError> {
        let mut tree = Self::empty_tree(view.hash_profile, view.depth)?;
        if view.next_free != view.leaves.len() as u64 {
            return Err(DecodeError::InvalidField {
                tag: 3,
                reason: format!("next_free {} but {} leaves", view.next_free, view.leaves.len()),
            }
            .into());
        }
        if view.next_free > tree.capacity() {
            return Err(MerkleError::Full {
                capacity: tree.capacity(),
            });
        }
        tree.rebuild(view.leaves.iter().copied())?;
        let found = tree.get_root();
        if found != view.root {
            return Err(MerkleError::RootMismatch {
                expected: view.root,
                found,
            });
        }
        Ok(tree)
    }
}

/// JSON form of a tree with hex-encoded digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeView {
    pub hash_profile: HashProfile,
    pub depth: u32,
    pub next_free: u64,
    pub root: Digest,
    pub leaves: Vec<Digest>,
}

/// Folds `h` up through `val` using the bits of `i` and compares with `root`.
///
/// The depth is implied by `val.len()`. Malformed input (empty list, more
/// than 32 levels, index not addressable at that depth) is logged and yields
/// `false`.
pub fn is_leaf_of_tree(profile: HashProfile, h: &Digest, i: u64, val: &ValidationList, root: &Digest) -> bool {
    let depth = val.len();
    if depth == 0 || depth > MAX_DEPTH as usize {
        log::warn!("validation list has {depth} entries, expected 1..=32");
        return false;
    }
    if i >= capacity_of(depth as u32) {
        log::warn!("leaf index {i} not addressable with {depth} levels");
        return false;
    }
    let mut acc = *h;
    let mut j = i;
    for sibling in &val.siblings {
        acc = if j & 1 == 0 {
            profile.hash_node(&acc, sibling)
        } else {
            profile.hash_node(sibling, &acc)
        };
        j >>= 1;
    }
    acc == *root
}
