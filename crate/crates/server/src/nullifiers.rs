//! The spent-nullifier list `L_N`.
//!
//! Persisted as a sorted snapshot plus an append-only log of raw 32-byte
//! entries. Membership is answered from an in-memory set rebuilt on open.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};

use anonkey_core::{Digest, Nullifier};

use crate::store::{write_atomic, DataDir};

const SNAPSHOT_VERSION: u8 = 1;

pub struct NullifierList {
    set: HashSet<Digest>,
    store: Option<(DataDir, File)>,
    logged: usize,
    compact_every: usize,
}

impl NullifierList {
    pub fn in_memory() -> Self {
        Self {
            set: HashSet::new(),
            store: None,
            logged: 0,
            compact_every: usize::MAX,
        }
    }

    pub fn open(dir: &DataDir) -> io::Result<Self> {
        fs::create_dir_all(dir.pvs_dir())?;
        let set: HashSet<Digest> = read_all(dir)?.into_iter().collect();
        let logged = fs::read(dir.nullifier_log()).map(|b| b.len() / 32).unwrap_or(0);
        let log = OpenOptions::new().create(true).append(true).open(dir.nullifier_log())?;
        Ok(Self {
            set,
            store: Some((dir.clone(), log)),
            logged,
            compact_every: 1024,
        })
    }

    pub fn with_compaction_interval(mut self, entries: usize) -> Self {
        self.compact_every = entries.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, n: &Nullifier) -> bool {
        self.set.contains(&n.0)
    }

    /// Inserts `n` and makes it durable. Returns false if it was already spent.
    /// If the write fails the entry is not inserted.
    pub fn insert(&mut self, n: Nullifier) -> io::Result<bool> {
        if self.set.contains(&n.0) {
            return Ok(false);
        }
        if let Some((_, log)) = &mut self.store {
            log.write_all(&n.0 .0)?;
            log.sync_data()?;
            self.logged += 1;
        }
        self.set.insert(n.0);
        if self.logged >= self.compact_every {
            self.compact()?;
        }
        Ok(true)
    }

    /// Folds the log into the sorted snapshot.
    pub fn compact(&mut self) -> io::Result<()> {
        let Some((dir, log)) = &mut self.store else {
            return Ok(());
        };
        let mut entries: Vec<Digest> = self.set.iter().copied().collect();
        entries.sort();
        let mut bytes = vec![SNAPSHOT_VERSION];
        for d in &entries {
            bytes.extend_from_slice(&d.0);
        }
        write_atomic(&dir.nullifier_snapshot(), &bytes)?;
        *log = File::create(dir.nullifier_log())?;
        log.sync_all()?;
        *log = OpenOptions::new().append(true).open(dir.nullifier_log())?;
        self.logged = 0;
        Ok(())
    }

    pub fn entries(&self) -> Vec<Digest> {
        let mut v: Vec<Digest> = self.set.iter().copied().collect();
        v.sort();
        v
    }
}

/// Reads snapshot and log without opening the list for writing.
pub fn read_all(dir: &DataDir) -> io::Result<Vec<Digest>> {
    let mut out = Vec::new();
    match fs::read(dir.nullifier_snapshot()) {
        Ok(bytes) => {
            if bytes.first() != Some(&SNAPSHOT_VERSION) || (bytes.len() - 1) % 32 != 0 {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "corrupt nullifier snapshot"));
            }
            out.extend(bytes[1..].chunks(32).map(|c| Digest::from_slice(c).expect("32 bytes")));
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e),
    }
    match fs::read(dir.nullifier_log()) {
        Ok(bytes) => {
            let whole = bytes.len() / 32 * 32;
            if whole != bytes.len() {
                log::warn!("ignoring {} trailing bytes of a torn nullifier log write", bytes.len() - whole);
            }
            out.extend(bytes[..whole].chunks(32).map(|c| Digest::from_slice(c).expect("32 bytes")));
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e),
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u8) -> Nullifier {
        Nullifier(Digest([i; 32]))
    }

    #[test]
    fn insert_once_and_survive_reopen() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = DataDir::new(tmp.path());
        {
            let mut list = NullifierList::open(&dir).unwrap().with_compaction_interval(3);
            for i in 0..5 {
                assert!(list.insert(n(i)).unwrap());
            }
            assert!(!list.insert(n(2)).unwrap());
            assert_eq!(list.len(), 5);
        }
        // Three went to the snapshot, two are still in the log.
        assert_eq!(fs::metadata(dir.nullifier_log()).unwrap().len(), 64);
        let list = NullifierList::open(&dir).unwrap();
        assert_eq!(list.len(), 5);
        assert!(list.contains(&n(4)));
        assert_eq!(read_all(&dir).unwrap(), list.entries());
    }

    #[test]
    fn torn_log_tail_is_ignored() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = DataDir::new(tmp.path());
        {
            let mut list = NullifierList::open(&dir).unwrap();
            list.insert(n(1)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.nullifier_log()).unwrap();
        f.write_all(&[7; 10]).unwrap();
        assert_eq!(NullifierList::open(&dir).unwrap().entries(), vec![n(1).0]);
    }
}
