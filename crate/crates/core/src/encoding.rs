//! Canonical byte encodings.
//!
//! Two layouts are used throughout the workspace:
//!
//! * `encode(x)`: a 4-byte big-endian length followed by the bytes of `x`.
//!   This is the operand encoding inside commitments and nullifiers.
//! * Tagged records: a version byte followed by `(tag: u8, len: u32 BE, value)`
//!   fields. Used for notes, certificates, statements, proofs and envelopes.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("empty input")]
    Empty,
    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u8, found: u8 },
    #[error("truncated record at offset {0}")]
    Truncated(usize),
    #[error("duplicate field tag {0:#04x}")]
    DuplicateTag(u8),
    #[error("missing field tag {0:#04x}")]
    MissingTag(u8),
    #[error("unexpected field tag {0:#04x}")]
    UnexpectedTag(u8),
    #[error("field {tag:#04x} has invalid length {len}")]
    FieldLength { tag: u8, len: usize },
    #[error("invalid field {tag:#04x}: {reason}")]
    InvalidField { tag: u8, reason: String },
}

/// Length-prefixed operand encoding: `u32 BE length ∥ bytes`.
pub fn encode(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + bytes.len());
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
    out
}

/// `encode(a) ∥ encode(b)`.
pub fn encode_pair(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = encode(a);
    out.extend_from_slice(&encode(b));
    out
}

#[derive(Debug, Clone)]
pub struct RecordWriter {
    buf: Vec<u8>,
}

impl RecordWriter {
    pub fn new(version: u8) -> Self {
        Self { buf: vec![version] }
    }

    pub fn field(mut self, tag: u8, value: &[u8]) -> Self {
        self.buf.push(tag);
        self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(value);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Parsed tagged record. Unknown tags are rejected by [`Record::expect_only`].
#[derive(Debug, Clone)]
pub struct Record<'a> {
    fields: BTreeMap<u8, &'a [u8]>,
}

impl<'a> Record<'a> {
    pub fn parse(data: &'a [u8], version: u8) -> Result<Self, DecodeError> {
        let (&found, mut rest) = data.split_first().ok_or(DecodeError::Empty)?;
        if found != version {
            return Err(DecodeError::Version {
                expected: version,
                found,
            });
        }
        let mut fields = BTreeMap::new();
        let mut offset = 1;
        while !rest.is_empty() {
            if rest.len() < 5 {
                return Err(DecodeError::Truncated(offset));
            }
            let tag = rest[0];
            let len = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
            let body = &rest[5..];
            if body.len() < len {
                return Err(DecodeError::Truncated(offset));
            }
            if fields.insert(tag, &body[..len]).is_some() {
                return Err(DecodeError::DuplicateTag(tag));
            }
            rest = &body[len..];
            offset += 5 + len;
        }
        Ok(Self { fields })
    }

    pub fn expect_only(&self, tags: &[u8]) -> Result<(), DecodeError> {
        match self.fields.keys().find(|t| !tags.contains(t)) {
            Some(&t) => Err(DecodeError::UnexpectedTag(t)),
            None => Ok(()),
        }
    }

    pub fn get(&self, tag: u8) -> Result<&'a [u8], DecodeError> {
        self.fields
            .get(&tag)
            .copied()
            .ok_or(DecodeError::MissingTag(tag))
    }

    pub fn get_opt(&self, tag: u8) -> Option<&'a [u8]> {
        self.fields.get(&tag).copied()
    }

    pub fn get_array<const N: usize>(&self, tag: u8) -> Result<[u8; N], DecodeError> {
        let value = self.get(tag)?;
        value.try_into().map_err(|_| DecodeError::FieldLength {
            tag,
            len: value.len(),
        })
    }

    pub fn get_u8(&self, tag: u8) -> Result<u8, DecodeError> {
        Ok(self.get_array::<1>(tag)?[0])
    }

    pub fn get_u32(&self, tag: u8) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.get_array::<4>(tag)?))
    }

    pub fn get_u64(&self, tag: u8) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.get_array::<8>(tag)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_prefixes_big_endian_length() {
        assert_eq!(encode(&[0xaa, 0xbb]), vec![0, 0, 0, 2, 0xaa, 0xbb]);
        assert_eq!(encode(&[]), vec![0, 0, 0, 0]);
    }

    #[test]
    fn record_roundtrip_and_errors() {
        let bytes = RecordWriter::new(3)
            .field(1, b"abc")
            .field(2, &[7; 4])
            .finish();
        let rec = Record::parse(&bytes, 3).unwrap();
        assert_eq!(rec.get(1).unwrap(), b"abc");
        assert_eq!(rec.get_u32(2).unwrap(), 0x0707_0707);
        assert_eq!(rec.get(9), Err(DecodeError::MissingTag(9)));
        assert_eq!(rec.expect_only(&[1]), Err(DecodeError::UnexpectedTag(2)));

        assert!(matches!(
            Record::parse(&bytes, 4),
            Err(DecodeError::Version { .. })
        ));
        assert!(matches!(
            Record::parse(&bytes[..bytes.len() - 1], 3),
            Err(DecodeError::Truncated(_))
        ));
        let dup = RecordWriter::new(1).field(1, b"x").field(1, b"y").finish();
        assert_eq!(Record::parse(&dup, 1).unwrap_err(), DecodeError::DuplicateTag(1));
    }
}
