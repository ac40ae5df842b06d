//! Tunnel listener: the PVS acts as reader on every accepted connection.

use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anonkey_tunnel::{
    FrameTransport, RateLimited, ReaderSession, SessionReport, SessionResult, StreamTransport, TunnelError,
};

use crate::pvs::ProofValidationServer;

#[derive(Debug, Clone)]
pub struct TunnelOptions {
    pub aid: Vec<u8>,
    /// Throttle in bytes per second.
    pub rate: Option<u64>,
    pub io_timeout: Option<Duration>,
}

impl Default for TunnelOptions {
    fn default() -> Self {
        Self {
            aid: anonkey_tunnel::DEFAULT_AID.to_vec(),
            rate: None,
            io_timeout: Some(Duration::from_secs(30)),
        }
    }
}

/// Runs one key-request session over `stream` and closes it.
pub fn handle_connection(
    stream: TcpStream,
    pvs: &ProofValidationServer,
    opts: &TunnelOptions,
) -> Result<SessionReport, TunnelError> {
    stream.set_read_timeout(opts.io_timeout)?;
    stream.set_nodelay(true)?;
    let base = StreamTransport::new(stream);
    let transport: Box<dyn FrameTransport> = match opts.rate {
        Some(rate) => Box::new(RateLimited::new(base, rate)),
        None => Box::new(base),
    };
    ReaderSession::with_aid(transport, opts.aid.clone()).run(pvs)
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tunnel(listener: TcpListener, pvs: Arc<ProofValidationServer>, opts: TunnelOptions) -> io::Result<()> {
    for conn in listener.incoming() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let pvs = pvs.clone();
        let opts = opts.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            match handle_connection(stream, &pvs, &opts) {
                Ok(report) => match report.result {
                    SessionResult::Delivered { bytes } => {
                        log::info!("{peer}: delivered {bytes} bytes in {:?}", report.timings.total())
                    }
                    SessionResult::Rejected(r) => log::info!("{peer}: rejected: {r}"),
                },
                // If this happens after validation the nullifier stays spent.
                Err(e) => log::warn!("{peer}: session aborted: {e}"),
            }
        });
    }
    Ok(())
}

/// Re-syncs the PVS root view every `interval`.
pub fn spawn_sync_loop(pvs: Arc<ProofValidationServer>, interval: Duration) -> thread::JoinHandle<()> {
    thread::spawn(move || loop {
        thread::sleep(interval);
        let _ = pvs.sync_registry();
    })
}
