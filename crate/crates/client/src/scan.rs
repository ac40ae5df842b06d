//! Checks what a tunnel session actually sent.
//!
//! A key request should carry the statement, the proof, `t` and the note's
//! public key and nothing else. [`scan_card_transcript`] reassembles the
//! bytes the card side sent and reports every piece of note-private
//! material found in them.

use anonkey_core::{HashProfile, MerkleTree, Note};
use anonkey_tunnel::transport::{Direction, TranscriptEntry};
use anonkey_tunnel::session::{INS_GET_CHUNK, INS_GET_LENGTH};
use anonkey_tunnel::{ApduCommand, ApduResponse, KeyRequest, MessageKind, CHUNK_SIZE};

/// A named byte pattern that must not appear on the wire.
pub struct Secret {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Everything about `note` the PVS must never see: rho, the secret key, the
/// commitment (raw and hex), the leaf index and the validation list.
pub fn note_secrets(note: &Note, profile: HashProfile, tree: Option<&MerkleTree>) -> Vec<Secret> {
    let c = note.commitment(profile).0;
    let mut out = vec![
        Secret { name: "rho".into(), bytes: note.rho().to_vec() },
        Secret { name: "sk".into(), bytes: note.secret_key().canonical_bytes().to_vec() },
        Secret { name: "sk-stored".into(), bytes: note.secret_key().to_storage_bytes().to_vec() },
        Secret { name: "commitment".into(), bytes: c.0.to_vec() },
        Secret { name: "commitment-hex".into(), bytes: c.to_hex().into_bytes() },
    ];
    if let Some(tree) = tree {
        if let Ok(i) = tree.get_index_of(&c) {
            out.push(Secret { name: "leaf-index".into(), bytes: i.to_be_bytes().to_vec() });
            if let Ok(val) = tree.validation_list(i) {
                for (k, sibling) in val.siblings.iter().enumerate() {
                    out.push(Secret { name: format!("sibling-{k}"), bytes: sibling.0.to_vec() });
                }
            }
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct ScanReport {
    /// Names of the secrets found in sent bytes.
    pub leaks: Vec<String>,
    /// Key requests reassembled from the sent chunks.
    pub requests: Vec<KeyRequest>,
    /// Sent data bytes not accounted for by a re-encoded key request.
    pub unexplained: usize,
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        self.leaks.is_empty() && self.unexplained == 0
    }
}

/// Scans the frames a card-side [`anonkey_tunnel::Recording`] captured.
///
/// Every response the card sent is matched with the command it answered.
/// Length answers and chunk data rebuild the upload, which must parse as a
/// key request that re-encodes to the same bytes; any other data counts as
/// unexplained.
pub fn scan_card_transcript(entries: &[TranscriptEntry], secrets: &[Secret]) -> ScanReport {
    let mut report = ScanReport::default();
    let mut raw = Vec::new();
    let mut command: Option<ApduCommand> = None;
    let mut upload: Option<(usize, Vec<Option<Vec<u8>>>)> = None;

    let finish = |upload: &mut Option<(usize, Vec<Option<Vec<u8>>>)>, report: &mut ScanReport| {
        let Some((total, chunks)) = upload.take() else { return };
        let bytes: Vec<u8> = chunks.iter().flatten().flatten().copied().collect();
        match KeyRequest::from_bytes(&bytes) {
            Ok(req) if bytes.len() == total && req.to_bytes() == bytes => report.requests.push(req),
            _ => report.unexplained += bytes.len(),
        }
    };

    for e in entries {
        match e.direction {
            Direction::Received => command = ApduCommand::decode(&e.frame).ok(),
            Direction::Sent => {
                raw.extend_from_slice(&e.frame);
                let Ok(resp) = ApduResponse::decode(&e.frame) else {
                    report.unexplained += e.frame.len();
                    continue;
                };
                if resp.data.is_empty() {
                    continue;
                }
                match command.take() {
                    Some(c) if c.ins == INS_GET_LENGTH && resp.data.len() == 5 && resp.data[0] == MessageKind::KeyRequest as u8 => {
                        finish(&mut upload, &mut report);
                        let total = u32::from_be_bytes(resp.data[1..5].try_into().unwrap()) as usize;
                        upload = Some((total, vec![None; total.div_ceil(CHUNK_SIZE)]));
                    }
                    Some(c) if c.ins == INS_GET_CHUNK => {
                        let slot = upload.as_mut().and_then(|(_, chunks)| chunks.get_mut(c.p1p2() as usize));
                        match slot {
                            Some(slot @ None) => *slot = Some(resp.data),
                            Some(Some(prev)) if *prev == resp.data => {}
                            _ => report.unexplained += resp.data.len(),
                        }
                    }
                    _ => report.unexplained += resp.data.len(),
                }
            }
        }
    }
    finish(&mut upload, &mut report);
    for s in secrets {
        if !s.bytes.is_empty() && raw.windows(s.bytes.len()).any(|w| w == s.bytes.as_slice()) {
            report.leaks.push(s.name.clone());
        }
    }
    report
}
