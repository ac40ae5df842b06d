//! APDU-framed tunnel between a reader (the PVS) and a card (the user).
//!
//! Frames are short-form APDUs. Messages larger than one frame are split
//! into 250-byte chunks; the reader pulls the card's message chunk by chunk
//! and pushes its answer back the same way.

pub mod apdu;
pub mod message;
pub mod session;
pub mod transport;

pub use apdu::{ApduCommand, ApduResponse, FrameError, StatusWord};
pub use message::{KeyRequest, MessageKind, RejectCode, Rejection, TunnelMessage};
pub use session::{
    check_card_transcript, request_key, CardSession, Delivery, KeyRequestHandler, KeyResponse, PhaseTimings,
    ReaderSession, SessionReport, SessionResult, TunnelError, CHUNK_SIZE, DEFAULT_AID,
};
pub use transport::{pipe, FrameTransport, PipeEnd, RateLimited, Recording, StreamTransport};
