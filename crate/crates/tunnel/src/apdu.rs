//! Short-form APDU command and response frames.
//!
//! Command layout (ISO 7816-4 short form):
//!
//! ```text
//! CLA INS P1 P2                    case 1
//! CLA INS P1 P2 Le                 case 2
//! CLA INS P1 P2 Lc data            case 3
//! CLA INS P1 P2 Lc data Le         case 4
//! ```
//!
//! `Lc` is 1..=255. An `Le` byte of 0 means 256. Responses are `data ∥ SW1 SW2`.

use std::fmt;

use thiserror::Error;

/// Largest command data field.
pub const MAX_COMMAND_DATA: usize = 255;
/// Largest response data field.
pub const MAX_RESPONSE_DATA: usize = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {0} bytes is too short")]
    TooShort(usize),
    #[error("Lc {lc} does not match {remaining} remaining bytes")]
    LengthMismatch { lc: usize, remaining: usize },
    #[error("data field of {0} bytes exceeds the frame limit")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StatusWord(pub u16);

impl StatusWord {
    pub const SUCCESS: Self = Self(0x9000);
    pub const WRONG_LENGTH: Self = Self(0x6700);
    pub const CONDITIONS_NOT_SATISFIED: Self = Self(0x6985);
    pub const WRONG_DATA: Self = Self(0x6A80);
    pub const NOT_FOUND: Self = Self(0x6A82);
    pub const INCORRECT_P1P2: Self = Self(0x6A86);
    pub const INS_NOT_SUPPORTED: Self = Self(0x6D00);
    pub const CLA_NOT_SUPPORTED: Self = Self(0x6E00);

    pub fn is_success(self) -> bool {
        self == Self::SUCCESS
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SUCCESS => "success",
            Self::WRONG_LENGTH => "wrong length",
            Self::CONDITIONS_NOT_SATISFIED => "conditions of use not satisfied",
            Self::WRONG_DATA => "incorrect data",
            Self::NOT_FOUND => "application not found",
            Self::INCORRECT_P1P2 => "incorrect P1-P2",
            Self::INS_NOT_SUPPORTED => "instruction not supported",
            Self::CLA_NOT_SUPPORTED => "class not supported",
            _ => "unknown status",
        }
    }

    pub fn to_bytes(self) -> [u8; 2] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for StatusWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04X} ({})", self.0, self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApduCommand {
    pub cla: u8,
    pub ins: u8,
    pub p1: u8,
    pub p2: u8,
    pub data: Vec<u8>,
    /// Expected response length; `Some(0)` encodes as 256 on the wire.
    pub le: Option<u8>,
}

impl ApduCommand {
    pub fn new(cla: u8, ins: u8, p1: u8, p2: u8) -> Self {
        Self {
            cla,
            ins,
            p1,
            p2,
            data: Vec::new(),
            le: None,
        }
    }

    pub fn with_data(mut self, data: Vec<u8>) -> Self {
        self.data = data;
        self
    }

    pub fn with_le(mut self, le: u8) -> Self {
        self.le = Some(le);
        self
    }

    /// `P1 ∥ P2` as a big-endian integer.
    pub fn p1p2(&self) -> u16 {
        u16::from_be_bytes([self.p1, self.p2])
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.data.len() > MAX_COMMAND_DATA {
            return Err(FrameError::TooLong(self.data.len()));
        }
        let mut out = vec![self.cla, self.ins, self.p1, self.p2];
        if !self.data.is_empty() {
            out.push(self.data.len() as u8);
            out.extend_from_slice(&self.data);
        }
        if let Some(le) = self.le {
            out.push(le);
        }
        Ok(out)
    }

    pub fn decode(frame: &[u8]) -> Result<Self, FrameError> {
        if frame.len() < 4 {
            return Err(FrameError::TooShort(frame.len()));
        }
        let mut cmd = Self::new(frame[0], frame[1], frame[2], frame[3]);
        let body = &frame[4..];
        match body.len() {
            0 => {}
            1 => cmd.le = Some(body[0]),
            _ => {
                let lc = body[0] as usize;
                let remaining = body.len() - 1;
                if lc == 0 {
                    return Err(FrameError::LengthMismatch { lc, remaining });
                }
                if remaining == lc {
                    cmd.data = body[1..].to_vec();
                } else if remaining == lc + 1 {
                    cmd.data = body[1..=lc].to_vec();
                    cmd.le = Some(body[lc + 1]);
                } else {
                    return Err(FrameError::LengthMismatch { lc, remaining });
                }
            }
        }
        Ok(cmd)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApduResponse {
    pub data: Vec<u8>,
    pub sw: StatusWord,
}

impl ApduResponse {
    pub fn ok(data: Vec<u8>) -> Self {
        Self {
            data,
            sw: StatusWord::SUCCESS,
        }
    }

    pub fn status(sw: StatusWord) -> Self {
        Self { data: Vec::new(), sw }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.data.len() > MAX_RESPONSE_DATA {
            return Err(FrameError::TooLong(self.data.len()));
        }
        let mut out = self.data.clone();
        out.extend_from_slice(&self.sw.to_bytes());
        Ok(out)
    }

    pub fn decode(frame: &[u8]) -> Result<Self, FrameError> {
        if frame.len() < 2 {
            return Err(FrameError::TooShort(frame.len()));
        }
        let (data, sw) = frame.split_at(frame.len() - 2);
        if data.len() > MAX_RESPONSE_DATA {
            return Err(FrameError::TooLong(data.len()));
        }
        Ok(Self {
            data: data.to_vec(),
            sw: StatusWord(u16::from_be_bytes([sw[0], sw[1]])),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_cases_roundtrip() {
        let cases = [
            ApduCommand::new(0x80, 1, 2, 3),
            ApduCommand::new(0x80, 1, 2, 3).with_le(5),
            ApduCommand::new(0x80, 1, 2, 3).with_data(vec![9; 10]),
            ApduCommand::new(0x80, 1, 2, 3).with_data(vec![9; 255]).with_le(0),
        ];
        for c in cases {
            assert_eq!(ApduCommand::decode(&c.encode().unwrap()).unwrap(), c);
        }
    }

    #[test]
    fn select_frame_layout() {
        let c = ApduCommand::new(0x00, 0xA4, 0x04, 0x00).with_data(vec![0xF0, 1, 2]).with_le(0);
        assert_eq!(c.encode().unwrap(), vec![0x00, 0xA4, 0x04, 0x00, 3, 0xF0, 1, 2, 0]);
    }

    #[test]
    fn malformed_frames() {
        assert_eq!(ApduCommand::decode(&[0, 0xA4, 4]), Err(FrameError::TooShort(3)));
        assert!(matches!(
            ApduCommand::decode(&[0, 0xA4, 4, 0, 5, 1, 2]),
            Err(FrameError::LengthMismatch { lc: 5, remaining: 2 })
        ));
        assert!(ApduCommand::decode(&[0, 0xA4, 4, 0, 0, 1]).is_err());
        assert!(ApduCommand::new(0, 0, 0, 0).with_data(vec![0; 256]).encode().is_err());
        assert!(ApduResponse::decode(&[0x90]).is_err());
    }

    #[test]
    fn response_roundtrip() {
        let r = ApduResponse::ok(vec![1, 2, 3]);
        assert_eq!(r.encode().unwrap(), vec![1, 2, 3, 0x90, 0x00]);
        assert_eq!(ApduResponse::decode(&r.encode().unwrap()).unwrap(), r);
        let e = ApduResponse::status(StatusWord::NOT_FOUND);
        assert_eq!(e.encode().unwrap(), vec![0x6A, 0x82]);
    }

    proptest! {
        #[test]
        fn command_roundtrip(cla: u8, ins: u8, p1: u8, p2: u8,
                             data in proptest::collection::vec(any::<u8>(), 0..=255),
                             le in proptest::option::of(any::<u8>())) {
            let c = ApduCommand { cla, ins, p1, p2, data, le };
            let frame = c.encode().unwrap();
            prop_assert!(frame.len() <= 4 + 1 + 255 + 1);
            prop_assert_eq!(ApduCommand::decode(&frame).unwrap(), c);
        }
    }
}
