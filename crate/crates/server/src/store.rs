//! Data directory shared by the AS and the PVS.
//!
//! ```text
//! <root>/config.toml
//! <root>/crs/{proving.key, verification.key, fingerprint.hex}
//! <root>/as/registry.bin          tree, old roots and audit log, replaced atomically
//! <root>/pvs/nullifiers.snapshot  sorted nullifiers
//! <root>/pvs/nullifiers.log       nullifiers appended since the last compaction
//! <root>/pvs/redemptions.jsonl    one line per accepted proof
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn crs(&self) -> PathBuf {
        self.root.join("crs")
    }

    pub fn as_dir(&self) -> PathBuf {
        self.root.join("as")
    }

    pub fn registry(&self) -> PathBuf {
        self.as_dir().join("registry.bin")
    }

    pub fn pvs_dir(&self) -> PathBuf {
        self.root.join("pvs")
    }

    pub fn nullifier_snapshot(&self) -> PathBuf {
        self.pvs_dir().join("nullifiers.snapshot")
    }

    pub fn nullifier_log(&self) -> PathBuf {
        self.pvs_dir().join("nullifiers.log")
    }

    pub fn redemptions(&self) -> PathBuf {
        self.pvs_dir().join("redemptions.jsonl")
    }

    /// True if any server state exists.
    pub fn is_initialized(&self) -> bool {
        self.config().exists() || self.registry().exists() || self.crs().exists() || self.pvs_dir().exists()
    }

    /// Removes all server state, leaving unrelated files alone.
    pub fn reset(&self) -> io::Result<()> {
        for dir in [self.crs(), self.as_dir(), self.pvs_dir()] {
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
        }
        if self.config().exists() {
            fs::remove_file(self.config())?;
        }
        Ok(())
    }
}

/// Writes `bytes` to a sibling temp file, syncs it, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/file.bin");
        write_atomic(&p, b"first version").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert!(!dir.path().join("sub/file.bin.tmp").exists());
    }

    #[test]
    fn reset_clears_state() {
        let dir = tempfile::tempdir().unwrap();
        let d = DataDir::new(dir.path());
        assert!(!d.is_initialized());
        write_atomic(&d.registry(), b"x").unwrap();
        fs::write(d.config(), "").unwrap();
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        assert!(d.is_initialized());
        d.reset().unwrap();
        assert!(!d.is_initialized());
        assert!(dir.path().join("notes.txt").exists());
    }
}
