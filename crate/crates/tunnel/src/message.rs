//! Messages carried through the tunnel and the key-request envelope.

use std::fmt;

use anonkey_core::encoding::{DecodeError, Record, RecordWriter};
use anonkey_core::kem::KemPublicKey;
use anonkey_core::zkp::Statement;

const ENVELOPE_VERSION: u8 = 1;
const TAG_STATEMENT: u8 = 0x01;
const TAG_PROOF: u8 = 0x02;
const TAG_T: u8 = 0x03;
const TAG_PK: u8 = 0x04;

const REJECTION_VERSION: u8 = 1;
const TAG_CODE: u8 = 0x01;
const TAG_DETAIL: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    ProofUpload = 1,
    KeyRequest = 2,
    KeyDelivery = 3,
    Error = 4,
    End = 5,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::ProofUpload,
            2 => Self::KeyRequest,
            3 => Self::KeyDelivery,
            4 => Self::Error,
            5 => Self::End,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TunnelMessage {
    pub kind: MessageKind,
    pub payload: Vec<u8>,
}

impl TunnelMessage {
    pub fn new(kind: MessageKind, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }
}

/// What the user sends to the PVS: `(statement, proof, t, pk)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub statement: Statement,
    /// Serialized proof, kept opaque so the verifier sees exactly what was sent.
    pub proof: Vec<u8>,
    /// Requested key length in bytes.
    pub t: u32,
    pub pk: KemPublicKey,
}

impl KeyRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        RecordWriter::new(ENVELOPE_VERSION)
            .field(TAG_STATEMENT, &self.statement.to_bytes())
            .field(TAG_PROOF, &self.proof)
            .field(TAG_T, &self.t.to_be_bytes())
            .field(TAG_PK, &self.pk.to_bytes())
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let rec = Record::parse(bytes, ENVELOPE_VERSION)?;
        rec.expect_only(&[TAG_STATEMENT, TAG_PROOF, TAG_T, TAG_PK])?;
        let statement = Statement::from_bytes(rec.get(TAG_STATEMENT)?).map_err(|e| DecodeError::InvalidField {
            tag: TAG_STATEMENT,
            reason: e.to_string(),
        })?;
        let pk = KemPublicKey::from_bytes(rec.get(TAG_PK)?).map_err(|e| DecodeError::InvalidField {
            tag: TAG_PK,
            reason: e.to_string(),
        })?;
        Ok(Self {
            statement,
            proof: rec.get(TAG_PROOF)?.to_vec(),
            t: rec.get_u32(TAG_T)?,
            pk,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectCode {
    RootInvalid,
    NullifierSpent,
    ProofInvalid,
    KeySizeOutOfRange,
    BadRequest,
    DeliveryFailed,
    Internal,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RootInvalid => "root-invalid",
            Self::NullifierSpent => "nullifier-spent",
            Self::ProofInvalid => "proof-invalid",
            Self::KeySizeOutOfRange => "t-out-of-range",
            Self::BadRequest => "bad-request",
            Self::DeliveryFailed => "delivery-failed",
            Self::Internal => "internal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::RootInvalid,
            Self::NullifierSpent,
            Self::ProofInvalid,
            Self::KeySizeOutOfRange,
            Self::BadRequest,
            Self::DeliveryFailed,
            Self::Internal,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for RejectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// In-band refusal sent instead of a key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub code: RejectCode,
    pub detail: String,
}

impl Rejection {
    pub fn new(code: RejectCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        RecordWriter::new(REJECTION_VERSION)
            .field(TAG_CODE, self.code.as_str().as_bytes())
            .field(TAG_DETAIL, self.detail.as_bytes())
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let rec = Record::parse(bytes, REJECTION_VERSION)?;
        let code = std::str::from_utf8(rec.get(TAG_CODE)?)
            .ok()
            .and_then(RejectCode::parse)
            .ok_or_else(|| DecodeError::InvalidField {
                tag: TAG_CODE,
                reason: "unknown rejection code".into(),
            })?;
        let detail = String::from_utf8_lossy(rec.get_opt(TAG_DETAIL).unwrap_or_default()).into_owned();
        Ok(Self { code, detail })
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.code)
        } else {
            write!(f, "{}: {}", self.code, self.detail)
        }
    }
}

impl std::error::Error for Rejection {}
