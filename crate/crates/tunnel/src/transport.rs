//! Frame transports emulating the reader/card link.
//!
//! Each frame travels as a 2-byte big-endian length followed by the frame.
//! Wrappers add rate limiting, transcript capture and fault injection.

use std::io::{self, Read, Write};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub trait FrameTransport: Send {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()>;
    fn recv_frame(&mut self) -> io::Result<Vec<u8>>;
}

impl<T: FrameTransport + ?Sized> FrameTransport for Box<T> {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        (**self).recv_frame()
    }
}

/// Length-delimited frames over any byte stream, e.g. a `TcpStream`.
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write + Send> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write + Send> FrameTransport for StreamTransport<S> {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        let len = u16::try_from(frame.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too long"))?;
        let mut buf = Vec::with_capacity(2 + frame.len());
        buf.extend_from_slice(&len.to_be_bytes());
        buf.extend_from_slice(frame);
        self.stream.write_all(&buf)?;
        self.stream.flush()
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        let mut len = [0u8; 2];
        self.stream.read_exact(&mut len)?;
        let mut frame = vec![0u8; u16::from_be_bytes(len) as usize];
        self.stream.read_exact(&mut frame)?;
        Ok(frame)
    }
}

/// One end of an in-process duplex pipe.
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Option<Duration>,
}

/// Two connected ends; frames sent on one arrive on the other.
pub fn pipe() -> (PipeEnd, PipeEnd) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        PipeEnd {
            tx: a_tx,
            rx: a_rx,
            timeout: None,
        },
        PipeEnd {
            tx: b_tx,
            rx: b_rx,
            timeout: None,
        },
    )
}

impl PipeEnd {
    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }
}

impl FrameTransport for PipeEnd {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer closed"))
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        match self.timeout {
            None => self
                .rx
                .recv()
                .map_err(|_| io::Error::new(io::ErrorKind::UnexpectedEof, "peer closed")),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                mpsc::RecvTimeoutError::Timeout => io::Error::new(io::ErrorKind::TimedOut, "receive timed out"),
                mpsc::RecvTimeoutError::Disconnected => io::Error::new(io::ErrorKind::UnexpectedEof, "peer closed"),
            }),
        }
    }
}

/// Throttles both directions to `bytes_per_sec`, counting the length prefix.
///
/// Wrapping one end is enough to model a slow link: every frame in either
/// direction passes through it.
pub struct RateLimited<T> {
    inner: T,
    bytes_per_sec: u64,
}

impl<T: FrameTransport> RateLimited<T> {
    pub fn new(inner: T, bytes_per_sec: u64) -> Self {
        Self { inner, bytes_per_sec }
    }

    fn delay(&self, len: usize, since: Instant) {
        if self.bytes_per_sec == 0 {
            return;
        }
        let due = Duration::from_secs_f64((len + 2) as f64 / self.bytes_per_sec as f64);
        if let Some(rest) = due.checked_sub(since.elapsed()) {
            std::thread::sleep(rest);
        }
    }
}

impl<T: FrameTransport> FrameTransport for RateLimited<T> {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        let start = Instant::now();
        self.inner.send_frame(frame)?;
        self.delay(frame.len(), start);
        Ok(())
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        let frame = self.inner.recv_frame()?;
        self.delay(frame.len(), Instant::now());
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub frame: Vec<u8>,
}

pub type Transcript = Arc<Mutex<Vec<TranscriptEntry>>>;

/// Records every frame passing through, from this end's point of view.
pub struct Recording<T> {
    inner: T,
    transcript: Transcript,
}

impl<T: FrameTransport> Recording<T> {
    pub fn new(inner: T) -> (Self, Transcript) {
        let transcript = Transcript::default();
        (
            Self {
                inner,
                transcript: transcript.clone(),
            },
            transcript,
        )
    }

    fn record(&self, direction: Direction, frame: &[u8]) {
        self.transcript
            .lock()
            .expect("transcript lock poisoned")
            .push(TranscriptEntry {
                direction,
                frame: frame.to_vec(),
            });
    }
}

impl<T: FrameTransport> FrameTransport for Recording<T> {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.inner.send_frame(frame)?;
        self.record(Direction::Sent, frame);
        Ok(())
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        let frame = self.inner.recv_frame()?;
        self.record(Direction::Received, &frame);
        Ok(frame)
    }
}

/// Fails every operation once `limit` frames have been sent.
pub struct DropAfter<T> {
    inner: T,
    remaining: usize,
}

impl<T: FrameTransport> DropAfter<T> {
    pub fn new(inner: T, frames: usize) -> Self {
        Self {
            inner,
            remaining: frames,
        }
    }
}

impl<T: FrameTransport> FrameTransport for DropAfter<T> {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        if self.remaining == 0 {
            return Err(io::Error::new(io::ErrorKind::ConnectionAborted, "link dropped"));
        }
        self.remaining -= 1;
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> io::Result<Vec<u8>> {
        if self.remaining == 0 {
            return Err(io::Error::new(io::ErrorKind::ConnectionAborted, "link dropped"));
        }
        self.inner.recv_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipe_carries_frames_both_ways() {
        let (mut a, mut b) = pipe();
        a.send_frame(b"hello").unwrap();
        assert_eq!(b.recv_frame().unwrap(), b"hello");
        b.send_frame(b"").unwrap();
        assert_eq!(a.recv_frame().unwrap(), b"");
        drop(b);
        assert!(a.recv_frame().is_err());
    }

    #[test]
    fn stream_transport_frames_bytes() {
        let mut t = StreamTransport::new(io::Cursor::new(Vec::new()));
        t.send_frame(&[1, 2, 3]).unwrap();
        let bytes = t.into_inner().into_inner();
        assert_eq!(bytes, vec![0, 3, 1, 2, 3]);
        let mut r = StreamTransport::new(io::Cursor::new(bytes));
        assert_eq!(r.recv_frame().unwrap(), vec![1, 2, 3]);
        assert!(r.recv_frame().is_err());
    }

    #[test]
    fn rate_limit_slows_transfer() {
        let (a, mut b) = pipe();
        let mut slow = RateLimited::new(a, 10_000);
        let start = Instant::now();
        for _ in 0..4 {
            slow.send_frame(&[0u8; 248]).unwrap();
            b.recv_frame().unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(95));
    }

    #[test]
    fn recording_and_drop() {
        let (a, mut b) = pipe();
        let (rec, transcript) = Recording::new(DropAfter::new(a, 1));
        let mut rec = rec;
        rec.send_frame(b"x").unwrap();
        assert!(rec.send_frame(b"y").is_err());
        b.recv_frame().unwrap();
        let t = transcript.lock().unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].direction, Direction::Sent);
    }
}
