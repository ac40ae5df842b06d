//! Pluggable entropy sources standing in for a hardware QRNG.
//!
//! Every source serializes access internally, so a shared `Arc<dyn
//! EntropySource>` can be used from concurrent sessions. Consumed bytes are
//! never handed out twice.

use std::fmt;
use std::io::Read;
use std::sync::Mutex;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroizing;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("entropy source unavailable: {0}")]
    Unavailable(String),
    #[error("entropy stream ended after {got} of {wanted} bytes")]
    ShortRead { wanted: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyKind {
    Mock,
    Os,
    External,
}

impl fmt::Display for EntropyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntropyKind::Mock => "mock",
            EntropyKind::Os => "os",
            EntropyKind::External => "external",
        })
    }
}

pub trait EntropySource: Send + Sync {
    fn kind(&self) -> EntropyKind;

    fn fill(&self, out: &mut [u8]) -> Result<(), EntropyError>;

    /// Nominal generation rate in bytes per second, if known.
    fn rate_hint(&self) -> Option<u64> {
        None
    }

    fn generate(&self, len: usize) -> Result<Zeroizing<Vec<u8>>, EntropyError> {
        let mut out = Zeroizing::new(vec![0u8; len]);
        self.fill(&mut out)?;
        Ok(out)
    }
}

/// Deterministic, seedable source for tests and benchmarks. NOT random.
///
/// The stream is the ChaCha20 block output of `ChaCha20Rng::seed_from_u64(seed)`,
/// handed out as one contiguous byte sequence regardless of request sizes.
pub struct MockSource {
    state: Mutex<MockState>,
}

struct MockState {
    rng: ChaCha20Rng,
    block: [u8; 64],
    used: usize,
    position: u64,
}

impl MockSource {
    pub fn new(seed: u64) -> Self {
        Self {
            state: Mutex::new(MockState {
                rng: ChaCha20Rng::seed_from_u64(seed),
                block: [0u8; 64],
                used: 64,
                position: 0,
            }),
        }
    }

    /// Number of bytes consumed so far.
    pub fn position(&self) -> u64 {
        self.state.lock().expect("entropy lock poisoned").position
    }
}

impl EntropySource for MockSource {
    fn kind(&self) -> EntropyKind {
        EntropyKind::Mock
    }

    fn fill(&self, out: &mut [u8]) -> Result<(), EntropyError> {
        let mut st = self.state.lock().expect("entropy lock poisoned");
        let mut written = 0;
        while written < out.len() {
            if st.used == 64 {
                let MockState { rng, block, .. } = &mut *st;
                rng.fill_bytes(block);
                st.used = 0;
            }
            let n = (64 - st.used).min(out.len() - written);
            out[written..written + n].copy_from_slice(&st.block[st.used..st.used + n]);
            st.used += n;
            written += n;
        }
        st.position += out.len() as u64;
        Ok(())
    }
}

/// The platform CSPRNG.
#[derive(Debug, Default)]
pub struct OsSource {
    lock: Mutex<()>,
}

impl OsSource {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EntropySource for OsSource {
    fn kind(&self) -> EntropyKind {
        EntropyKind::Os
    }

    fn fill(&self, out: &mut [u8]) -> Result<(), EntropyError> {
        let _guard = self.lock.lock().expect("entropy lock poisoned");
        rand::rngs::OsRng
            .try_fill_bytes(out)
            .map_err(|e| EntropyError::Unavailable(e.to_string()))
    }
}

type StreamOpener = dyn Fn() -> std::io::Result<Box<dyn Read + Send>> + Send + Sync;

/// A remote byte stream, reopened for every request.
///
/// Models a high-rate generator behind a connection with noticeable setup
/// cost: each `fill` pays `setup_latency` before reading, plus transfer time
/// at `rate` bytes per second when set.
pub struct ExternalSource {
    opener: Box<StreamOpener>,
    setup_latency: Duration,
    rate: Option<u64>,
    lock: Mutex<()>,
}

impl ExternalSource {
    pub fn new<F>(opener: F, setup_latency: Duration, rate: Option<u64>) -> Self
    where
        F: Fn() -> std::io::Result<Box<dyn Read + Send>> + Send + Sync + 'static,
    {
        Self {
            opener: Box::new(opener),
            setup_latency,
            rate,
            lock: Mutex::new(()),
        }
    }

    /// Reads from a file or device path such as `/dev/urandom`.
    pub fn from_path(path: impl Into<std::path::PathBuf>, setup_latency: Duration) -> Self {
        let path = path.into();
        Self::new(
            move || Ok(Box::new(std::fs::File::open(&path)?) as Box<dyn Read + Send>),
            setup_latency,
            None,
        )
    }

    /// Reads from a TCP endpoint that streams raw bytes.
    pub fn from_tcp(addr: String, setup_latency: Duration) -> Self {
        Self::new(
            move || Ok(Box::new(std::net::TcpStream::connect(&addr)?) as Box<dyn Read + Send>),
            setup_latency,
            None,
        )
    }
}

impl EntropySource for ExternalSource {
    fn kind(&self) -> EntropyKind {
        EntropyKind::External
    }

    fn rate_hint(&self) -> Option<u64> {
        self.rate
    }

    fn fill(&self, out: &mut [u8]) -> Result<(), EntropyError> {
        let _guard = self.lock.lock().expect("entropy lock poisoned");
        std::thread::sleep(self.setup_latency);
        let mut stream = (self.opener)().map_err(|e| EntropyError::Unavailable(e.to_string()))?;
        let mut got = 0;
        while got < out.len() {
            match stream.read(&mut out[got..]) {
                Ok(0) => {
                    return Err(EntropyError::ShortRead {
                        wanted: out.len(),
                        got,
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(EntropyError::Unavailable(e.to_string())),
            }
        }
        if let Some(rate) = self.rate.filter(|r| *r > 0) {
            std::thread::sleep(Duration::from_secs_f64(out.len() as f64 / rate as f64));
        }
        Ok(())
    }
}

/// Shannon entropy of the byte histogram, in bits per byte.
pub fn byte_entropy(data: &[u8]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut counts = [0u64; 256];
    for &b in data {
        counts[b as usize] += 1;
    }
    let n = data.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}
