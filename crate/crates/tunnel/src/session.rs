//! Reader (PVS) and card (user) state machines.
//!
//! The reader drives every exchange; the card only ever answers.
//!
//! ```text
//! reader                              card
//!   SELECT aid                  ->      9000 | 6A82
//!   GET LENGTH                  ->      kind ∥ len (u32 BE)
//!   GET CHUNK i   (i = P1P2)    ->      chunk i
//!   ... validate, generate key ...
//!   BEGIN DOWNLOAD kind ∥ len   ->      9000
//!   PUT CHUNK i, chunk          ->      9000
//!   END                         ->      9000, card back to unselected
//! ```

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::apdu::{ApduCommand, ApduResponse, FrameError, StatusWord};
use crate::message::{KeyRequest, MessageKind, RejectCode, Rejection, TunnelMessage};
use crate::transport::{Direction, FrameTransport, TranscriptEntry};

pub const CHUNK_SIZE: usize = 250;
pub const DEFAULT_AID: &[u8] = b"\xF0ANONKEY";
/// Upper bound on an uploaded key request.
pub const MAX_UPLOAD: usize = 64 * 1024;
/// Upper bound on a downloaded message.
pub const MAX_DOWNLOAD: usize = 1 << 20;

pub const CLA_ISO: u8 = 0x00;
pub const CLA_PROPRIETARY: u8 = 0x80;
pub const INS_SELECT: u8 = 0xA4;
pub const INS_GET_LENGTH: u8 = 0x10;
pub const INS_GET_CHUNK: u8 = 0x12;
pub const INS_BEGIN_DOWNLOAD: u8 = 0x20;
pub const INS_PUT_CHUNK: u8 = 0x22;
pub const INS_END: u8 = 0x30;

#[derive(Debug, Error)]
pub enum TunnelError {
    #[error("transport failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad frame: {0}")]
    Frame(#[from] FrameError),
    #[error("peer answered {ins:#04x} with status {sw}")]
    Status { ins: u8, sw: StatusWord },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub fn chunk_count(len: usize, chunk: usize) -> usize {
    len.div_ceil(chunk)
}

pub fn split_chunks(payload: &[u8], chunk: usize) -> Vec<&[u8]> {
    payload.chunks(chunk).collect()
}

fn length_header(kind: MessageKind, len: usize) -> Vec<u8> {
    let mut v = vec![kind as u8];
    v.extend_from_slice(&(len as u32).to_be_bytes());
    v
}

fn parse_length_header(data: &[u8]) -> Option<(MessageKind, usize)> {
    if data.len() != 5 {
        return None;
    }
    let kind = MessageKind::from_byte(data[0])?;
    Some((kind, u32::from_be_bytes(data[1..5].try_into().ok()?) as usize))
}

/// Server-side handling of a key request, split so the reader can time
/// validation and key generation separately.
pub trait KeyRequestHandler: Send + Sync {
    fn validate<'a>(&'a self, request: &KeyRequest) -> Result<Box<dyn Delivery + 'a>, Rejection>;
}

/// A validated request, redeemable exactly once within its session.
pub trait Delivery {
    /// Returns the encapsulated key bytes.
    fn deliver(self: Box<Self>) -> Result<Vec<u8>, Rejection>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub upload: Duration,
    pub validation: Duration,
    pub generation: Duration,
    pub download: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.upload + self.validation + self.generation + self.download
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionResult {
    Delivered { bytes: usize },
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub result: SessionResult,
    pub timings: PhaseTimings,
    pub upload_len: usize,
    pub upload_chunks: usize,
    pub download_len: usize,
    pub download_chunks: usize,
}

/// The PVS end. Issues every command.
pub struct ReaderSession<T> {
    transport: T,
    aid: Vec<u8>,
    chunk: usize,
}

impl<T: FrameTransport> ReaderSession<T> {
    pub fn new(transport: T) -> Self {
        Self::with_aid(transport, DEFAULT_AID.to_vec())
    }

    pub fn with_aid(transport: T, aid: Vec<u8>) -> Self {
        Self {
            transport,
            aid,
            chunk: CHUNK_SIZE,
        }
    }

    pub fn into_inner(self) -> T {
        self.transport
    }

    pub fn transmit(&mut self, cmd: &ApduCommand) -> Result<ApduResponse, TunnelError> {
        self.transport.send_frame(&cmd.encode()?)?;
        Ok(ApduResponse::decode(&self.transport.recv_frame()?)?)
    }

    fn expect_ok(&mut self, cmd: &ApduCommand) -> Result<Vec<u8>, TunnelError> {
        let resp = self.transmit(cmd)?;
        if !resp.sw.is_success() {
            return Err(TunnelError::Status { ins: cmd.ins, sw: resp.sw });
        }
        Ok(resp.data)
    }

    pub fn select_applet(&mut self, aid: &[u8]) -> Result<ApduResponse, TunnelError> {
        let cmd = ApduCommand::new(CLA_ISO, INS_SELECT, 0x04, 0x00)
            .with_data(aid.to_vec())
            .with_le(0);
        self.transmit(&cmd)
    }

    pub fn get_length(&mut self) -> Result<(MessageKind, usize), TunnelError> {
        let data = self.expect_ok(&ApduCommand::new(CLA_PROPRIETARY, INS_GET_LENGTH, 0, 0).with_le(5))?;
        parse_length_header(&data).ok_or_else(|| TunnelError::Protocol("malformed length header".into()))
    }

    pub fn get_chunk(&mut self, index: u16) -> Result<Vec<u8>, TunnelError> {
        let [p1, p2] = index.to_be_bytes();
        self.expect_ok(&ApduCommand::new(CLA_PROPRIETARY, INS_GET_CHUNK, p1, p2).with_le(self.chunk as u8))
    }

    pub fn begin_download(&mut self, kind: MessageKind, len: usize) -> Result<(), TunnelError> {
        let cmd = ApduCommand::new(CLA_PROPRIETARY, INS_BEGIN_DOWNLOAD, 0, 0).with_data(length_header(kind, len));
        self.expect_ok(&cmd).map(|_| ())
    }

    pub fn send_chunk(&mut self, index: u16, data: &[u8]) -> Result<ApduResponse, TunnelError> {
        let [p1, p2] = index.to_be_bytes();
        self.transmit(&ApduCommand::new(CLA_PROPRIETARY, INS_PUT_CHUNK, p1, p2).with_data(data.to_vec()))
    }

    pub fn end(&mut self) -> Result<(), TunnelError> {
        self.expect_ok(&ApduCommand::new(CLA_PROPRIETARY, INS_END, 0, 0)).map(|_| ())
    }

    /// Selects the applet and pulls the card's message.
    pub fn upload(&mut self) -> Result<TunnelMessage, TunnelError> {
        let aid = self.aid.clone();
        let resp = self.select_applet(&aid)?;
        if !resp.sw.is_success() {
            return Err(TunnelError::Status {
                ins: INS_SELECT,
                sw: resp.sw,
            });
        }
        let (kind, len) = self.get_length()?;
        if len > MAX_UPLOAD {
            return Err(TunnelError::Protocol(format!("upload of {len} bytes exceeds limit")));
        }
        let count = chunk_count(len, self.chunk);
        let mut payload = Vec::with_capacity(len);
        for i in 0..count {
            let index = u16::try_from(i).map_err(|_| TunnelError::Protocol("too many chunks".into()))?;
            let chunk = self.get_chunk(index)?;
            let expected = self.chunk.min(len - payload.len());
            if chunk.len() != expected {
                return Err(TunnelError::Protocol(format!(
                    "chunk {i} has {} bytes, expected {expected}",
                    chunk.len()
                )));
            }
            payload.extend_from_slice(&chunk);
        }
        Ok(TunnelMessage::new(kind, payload))
    }

    /// Pushes a message to the card and ends the session.
    pub fn download(&mut self, msg: &TunnelMessage) -> Result<usize, TunnelError> {
        self.begin_download(msg.kind, msg.payload.len())?;
        let chunks = split_chunks(&msg.payload, self.chunk);
        for (i, c) in chunks.iter().enumerate() {
            let index = u16::try_from(i).map_err(|_| TunnelError::Protocol("too many chunks".into()))?;
            let resp = self.send_chunk(index, c)?;
            if !resp.sw.is_success() {
                return Err(TunnelError::Status {
                    ins: INS_PUT_CHUNK,
                    sw: resp.sw,
                });
            }
        }
        self.end()?;
        Ok(chunks.len())
    }

    /// Runs one full key-request session against `handler`.
    pub fn run(&mut self, handler: &dyn KeyRequestHandler) -> Result<SessionReport, TunnelError> {
        let start = Instant::now();
        let upload = self.upload()?;
        let upload_time = start.elapsed();
        let upload_len = upload.payload.len();

        let mut timings = PhaseTimings {
            upload: upload_time,
            ..Default::default()
        };
        let outcome = if upload.kind != MessageKind::KeyRequest {
            Err(Rejection::new(RejectCode::BadRequest, "expected a key request"))
        } else {
            match KeyRequest::from_bytes(&upload.payload) {
                Err(e) => Err(Rejection::new(RejectCode::BadRequest, e.to_string())),
                Ok(req) => {
                    let t = Instant::now();
                    let validated = handler.validate(&req);
                    timings.validation = t.elapsed();
                    match validated {
                        Err(r) => Err(r),
                        Ok(delivery) => {
                            let t = Instant::now();
                            let out = delivery.deliver();
                            timings.generation = t.elapsed();
                            out
                        }
                    }
                }
            }
        };

        let msg = match &outcome {
            Ok(key) => TunnelMessage::new(MessageKind::KeyDelivery, key.clone()),
            Err(r) => TunnelMessage::new(MessageKind::Error, r.to_bytes()),
        };
        let t = Instant::now();
        let download_chunks = self.download(&msg)?;
        timings.download = t.elapsed();

        Ok(SessionReport {
            result: match outcome {
                Ok(key) => SessionResult::Delivered { bytes: key.len() },
                Err(r) => SessionResult::Rejected(r),
            },
            timings,
            upload_len,
            upload_chunks: chunk_count(upload_len, self.chunk),
            download_len: msg.payload.len(),
            download_chunks,
        })
    }
}

#[derive(Debug)]
enum CardState {
    Unselected,
    Selected {
        /// Highest chunk index handed out so far.
        served: Option<u16>,
    },
    Downloading {
        kind: MessageKind,
        total: usize,
        buf: Vec<u8>,
        last: Option<(u16, Vec<u8>)>,
    },
}

/// The user end. Answers commands, never speaks first.
pub struct CardSession<T> {
    transport: T,
    aid: Vec<u8>,
    chunk: usize,
}

impl<T: FrameTransport> CardSession<T> {
    pub fn new(transport: T) -> Self {
        Self::with_aid(transport, DEFAULT_AID.to_vec())
    }

    pub fn with_aid(transport: T, aid: Vec<u8>) -> Self {
        Self {
            transport,
            aid,
            chunk: CHUNK_SIZE,
        }
    }

    pub fn into_inner(self) -> T {
        self.transport
    }

    /// Serves one session: offers `upload`, returns what the reader pushed.
    /// Every session starts unselected.
    pub fn serve(&mut self, upload: &TunnelMessage) -> Result<TunnelMessage, TunnelError> {
        let mut state = CardState::Unselected;
        let count = chunk_count(upload.payload.len(), self.chunk);
        loop {
            let frame = self.transport.recv_frame()?;
            let cmd = match ApduCommand::decode(&frame) {
                Ok(c) => c,
                Err(e) => {
                    log::debug!("card: undecodable frame: {e}");
                    self.respond(ApduResponse::status(StatusWord::WRONG_LENGTH))?;
                    continue;
                }
            };
            if cmd.ins == INS_END && cmd.cla == CLA_PROPRIETARY {
                self.respond(ApduResponse::ok(Vec::new()))?;
                return match state {
                    CardState::Downloading { kind, total, buf, .. } if buf.len() == total => {
                        Ok(TunnelMessage::new(kind, buf))
                    }
                    _ => Err(TunnelError::Protocol("session ended without a complete message".into())),
                };
            }
            let (resp, next) = self.step(state, &cmd, upload, count);
            state = next;
            self.respond(resp)?;
        }
    }

    fn respond(&mut self, resp: ApduResponse) -> Result<(), TunnelError> {
        self.transport.send_frame(&resp.encode()?)?;
        Ok(())
    }

    fn step(
        &self,
        state: CardState,
        cmd: &ApduCommand,
        upload: &TunnelMessage,
        count: usize,
    ) -> (ApduResponse, CardState) {
        use StatusWord as Sw;
        let fail = |sw: Sw, state| (ApduResponse::status(sw), state);

        if cmd.ins == INS_SELECT {
            if cmd.cla != CLA_ISO {
                return fail(Sw::CLA_NOT_SUPPORTED, state);
            }
            if cmd.p1 != 0x04 {
                return fail(Sw::INCORRECT_P1P2, state);
            }
            if cmd.data == self.aid {
                return (ApduResponse::ok(Vec::new()), CardState::Selected { served: None });
            }
            return fail(Sw::NOT_FOUND, CardState::Unselected);
        }
        if cmd.cla != CLA_PROPRIETARY {
            return fail(Sw::CLA_NOT_SUPPORTED, state);
        }
        if matches!(state, CardState::Unselected) {
            return match cmd.ins {
                INS_GET_LENGTH | INS_GET_CHUNK | INS_BEGIN_DOWNLOAD | INS_PUT_CHUNK => {
                    fail(Sw::CONDITIONS_NOT_SATISFIED, state)
                }
                _ => fail(Sw::INS_NOT_SUPPORTED, state),
            };
        }

        match (cmd.ins, state) {
            (INS_GET_LENGTH, state @ CardState::Selected { .. }) => {
                if !cmd.data.is_empty() {
                    return fail(Sw::WRONG_LENGTH, state);
                }
                (
                    ApduResponse::ok(length_header(upload.kind, upload.payload.len())),
                    state,
                )
            }
            (INS_GET_CHUNK, CardState::Selected { served }) => {
                let index = cmd.p1p2();
                let next = served.map_or(0, |s| s as usize + 1);
                if index as usize >= count || index as usize > next {
                    log::debug!("card: chunk {index} requested out of order, aborting transfer");
                    return fail(Sw::INCORRECT_P1P2, CardState::Unselected);
                }
                let start = index as usize * self.chunk;
                let end = (start + self.chunk).min(upload.payload.len());
                let served = Some(served.map_or(index, |s| s.max(index)));
                (
                    ApduResponse::ok(upload.payload[start..end].to_vec()),
                    CardState::Selected { served },
                )
            }
            (INS_BEGIN_DOWNLOAD, CardState::Selected { .. } | CardState::Downloading { .. }) => {
                match parse_length_header(&cmd.data) {
                    None if cmd.data.len() != 5 => fail(Sw::WRONG_LENGTH, CardState::Selected { served: None }),
                    None => fail(Sw::WRONG_DATA, CardState::Selected { served: None }),
                    Some((_, total)) if total > MAX_DOWNLOAD => {
                        fail(Sw::WRONG_LENGTH, CardState::Selected { served: None })
                    }
                    Some((kind, total)) => (
                        ApduResponse::ok(Vec::new()),
                        CardState::Downloading {
                            kind,
                            total,
                            buf: Vec::with_capacity(total),
                            last: None,
                        },
                    ),
                }
            }
            (
                INS_PUT_CHUNK,
                CardState::Downloading {
                    kind,
                    total,
                    mut buf,
                    last,
                },
            ) => {
                let index = cmd.p1p2();
                let next = last.as_ref().map_or(0, |(i, _)| *i as usize + 1);
                if let Some((li, ld)) = &last {
                    if *li == index && *ld == cmd.data {
                        return (
                            ApduResponse::ok(Vec::new()),
                            CardState::Downloading { kind, total, buf, last },
                        );
                    }
                }
                if index as usize != next {
                    log::debug!("card: chunk {index} pushed out of order, aborting transfer");
                    return fail(Sw::INCORRECT_P1P2, CardState::Unselected);
                }
                let expected = self.chunk.min(total - buf.len());
                if cmd.data.len() != expected {
                    return fail(Sw::WRONG_LENGTH, CardState::Downloading { kind, total, buf, last });
                }
                buf.extend_from_slice(&cmd.data);
                (
                    ApduResponse::ok(Vec::new()),
                    CardState::Downloading {
                        kind,
                        total,
                        buf,
                        last: Some((index, cmd.data.clone())),
                    },
                )
            }
            (INS_GET_LENGTH | INS_GET_CHUNK | INS_PUT_CHUNK, state) => fail(Sw::CONDITIONS_NOT_SATISFIED, state),
            (_, state) => fail(Sw::INS_NOT_SUPPORTED, state),
        }
    }
}

/// What the user gets back from a key request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyResponse {
    /// Encapsulated key bytes.
    Delivered(Vec<u8>),
    Rejected(Rejection),
}

/// Card-side convenience: offer `request`, wait for the PVS's answer.
pub fn request_key<T: FrameTransport>(transport: T, request: &KeyRequest) -> Result<KeyResponse, TunnelError> {
    let mut card = CardSession::new(transport);
    let upload = TunnelMessage::new(MessageKind::KeyRequest, request.to_bytes());
    let msg = card.serve(&upload)?;
    match msg.kind {
        MessageKind::KeyDelivery => Ok(KeyResponse::Delivered(msg.payload)),
        MessageKind::Error => Rejection::from_bytes(&msg.payload)
            .map(KeyResponse::Rejected)
            .map_err(|e| TunnelError::Protocol(format!("unreadable rejection: {e}"))),
        other => Err(TunnelError::Protocol(format!("unexpected message kind {other:?}"))),
    }
}

/// Checks a card-side transcript: every frame the card sent must answer a
/// command it had just received. Returns the number of completed sessions.
pub fn check_card_transcript(entries: &[TranscriptEntry]) -> Result<usize, String> {
    let mut sessions = 0;
    let mut pending: Option<u8> = None;
    for (i, e) in entries.iter().enumerate() {
        match (e.direction, pending) {
            (Direction::Received, None) => {
                let ins = ApduCommand::decode(&e.frame).map(|c| c.ins).unwrap_or(0xff);
                pending = Some(ins);
            }
            (Direction::Received, Some(_)) => {
                return Err(format!("frame {i}: reader sent two commands without a response"));
            }
            (Direction::Sent, None) => {
                return Err(format!("frame {i}: card spoke without a command"));
            }
            (Direction::Sent, Some(ins)) => {
                let resp = ApduResponse::decode(&e.frame).map_err(|err| format!("frame {i}: {err}"))?;
                if ins == INS_END && resp.sw.is_success() {
                    sessions += 1;
                }
                pending = None;
            }
        }
    }
    if pending.is_some() {
        return Err("transcript ends with an unanswered command".into());
    }
    Ok(sessions)
}
