use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use anonkey_core::cert::{CaVerifyingKey, CertificateAuthority, SubjectSigningKey};
use anonkey_core::entropy::EntropyKind;
use anonkey_core::kem::KemProfile;
use anonkey_core::zkp::{BackendKind, RelationConfig, SetupMode};
use anonkey_core::{HashProfile, Lambda};
use anonkey_server::http::{as_router, pvs_router, serve_blocking, AsState};
use anonkey_server::listener::{serve_tunnel, spawn_sync_loop, TunnelOptions};
use anonkey_server::{nullifiers, open_auth_server, open_pvs, server_setup, DataDir, ServerConfig};
use anyhow::{anyhow, Context};
use clap::{Args, Subcommand};
use serde::de::DeserializeOwned;

use crate::{data_dir_default, CmdResult};

/// Parses a value by its configuration-file name, e.g. `algebraic` or `dhkem-x25519`.
fn named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct SetupArgs {
    #[arg(long, default_value_os_t = data_dir_default())]
    data_dir: PathBuf,
    /// Merkle tree depth; capacity is 2^depth users.
    #[arg(long, default_value_t = 16)]
    depth: u32,
    /// `algebraic` or `sha256`.
    #[arg(long, default_value = "algebraic", value_parser = named::<HashProfile>)]
    hash: HashProfile,
    /// `dhkem-x25519` or `rsa-oaep`.
    #[arg(long, default_value = "dhkem-x25519", value_parser = named::<KemProfile>)]
    kem: KemProfile,
    /// Security parameter in bits: 128, 192 or 256.
    #[arg(long, default_value_t = 256)]
    lambda: u32,
    /// `groth16` or `mock`.
    #[arg(long, default_value = "groth16", value_parser = named::<BackendKind>)]
    backend: BackendKind,
    /// File with the hex CA verification key, as written by `ca init`.
    #[arg(long)]
    ca_pub: PathBuf,
    /// `os`, `mock` or `external`.
    #[arg(long, default_value = "os", value_parser = named::<EntropyKind>)]
    entropy: EntropyKind,
    #[arg(long, default_value_t = 0)]
    mock_seed: u64,
    /// File path or host:port for the external entropy source.
    #[arg(long)]
    external_source: Option<String>,
    /// Base URL of the authentication server, if the PVS should not read the shared directory.
    #[arg(long)]
    as_url: Option<String>,
    /// Sample the CRS from this seed. Insecure; for testing only.
    #[arg(long)]
    insecure_test_seed: Option<u64>,
    /// Overwrite existing state.
    #[arg(long)]
    reset: bool,
}

pub fn setup(a: SetupArgs) -> CmdResult {
    let ca = read_ca_pub(&a.ca_pub)?;
    let lambda = Lambda::new(a.lambda).map_err(|e| anyhow!("{e}"))?;
    let mut cfg = ServerConfig::new(RelationConfig::new(a.hash, a.kem, lambda, a.depth), a.backend, &ca);
    cfg.pvs.entropy = a.entropy;
    cfg.pvs.mock_seed = a.mock_seed;
    cfg.pvs.external_source = a.external_source;
    cfg.pvs.as_url = a.as_url;
    let mode = match a.insecure_test_seed {
        Some(seed) => SetupMode::Test { seed },
        None => SetupMode::Production,
    };
    let dir = DataDir::new(&a.data_dir);
    let (crs, _, _) = server_setup(&dir, &cfg, mode, a.reset)?;
    println!("initialized {} (fingerprint {})", a.data_dir.display(), crs.fingerprint().to_hex());
    Ok(())
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_os_t = data_dir_default())]
    data_dir: PathBuf,
    /// Override the AS listen address from the configuration.
    #[arg(long)]
    as_listen: Option<SocketAddr>,
    /// Override the tunnel listen address from the configuration.
    #[arg(long)]
    tunnel_listen: Option<SocketAddr>,
    /// Override the PVS health endpoint address from the configuration.
    #[arg(long)]
    http_listen: Option<SocketAddr>,
}

fn start_as(a: &ServeArgs) -> anyhow::Result<thread::JoinHandle<std::io::Result<()>>> {
    let dir = DataDir::new(&a.data_dir);
    let (cfg, auth, crs) = open_auth_server(&dir)?;
    let view_dir = dir.clone();
    let state = AsState::new(
        Arc::new(auth),
        &crs,
        Arc::new(move || nullifiers::read_all(&view_dir).unwrap_or_default()),
    );
    let addr = a.as_listen.unwrap_or(cfg.auth.listen);
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    log::info!("authentication server on http://{}", listener.local_addr()?);
    Ok(thread::spawn(move || serve_blocking(listener, as_router(state))))
}

fn start_pvs(a: &ServeArgs) -> anyhow::Result<thread::JoinHandle<std::io::Result<()>>> {
    let dir = DataDir::new(&a.data_dir);
    let (cfg, pvs) = open_pvs(&dir, None)?;
    let pvs = Arc::new(pvs);
    if let Err(e) = pvs.sync_registry() {
        log::warn!("initial root sync failed: {e}");
    }
    spawn_sync_loop(pvs.clone(), cfg.pvs.sync_interval());

    let http_addr = a.http_listen.unwrap_or(cfg.pvs.http_listen);
    let http = TcpListener::bind(http_addr).with_context(|| format!("binding {http_addr}"))?;
    log::info!("validation server health on http://{}", http.local_addr()?);
    let router = pvs_router(pvs.clone());
    thread::spawn(move || serve_blocking(http, router));

    let addr = a.tunnel_listen.unwrap_or(cfg.pvs.tunnel_listen);
    let tunnel = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    log::info!("tunnel on {}", tunnel.local_addr()?);
    let opts = TunnelOptions {
        aid: cfg.pvs.aid_bytes()?,
        rate: cfg.pvs.tunnel_rate,
        ..TunnelOptions::default()
    };
    Ok(thread::spawn(move || serve_tunnel(tunnel, pvs, opts)))
}

fn wait(handle: thread::JoinHandle<std::io::Result<()>>) -> CmdResult {
    handle.join().map_err(|_| anyhow!("server thread panicked"))??;
    Ok(())
}

pub fn serve_as(a: ServeArgs) -> CmdResult {
    wait(start_as(&a)?)
}

pub fn serve_pvs(a: ServeArgs) -> CmdResult {
    wait(start_pvs(&a)?)
}

pub fn serve_both(a: ServeArgs) -> CmdResult {
    let auth = start_as(&a)?;
    let pvs = start_pvs(&a)?;
    wait(pvs)?;
    wait(auth)
}

#[derive(Subcommand)]
pub enum CaCommand {
    /// Generate a CA key pair.
    Init {
        /// Secret key file (hex); the public key goes to `<out>.pub`.
        #[arg(long, default_value = "ca.key")]
        out: PathBuf,
    },
    /// Issue a certificate and a fresh signing key for one user.
    Issue {
        #[arg(long, default_value = "ca.key")]
        ca: PathBuf,
        #[arg(long)]
        subject: String,
        /// Writes `<out>.cert` and `<out>.key`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn with_ext(path: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn read_hex(path: &std::path::Path) -> anyhow::Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    hex::decode(text.trim()).with_context(|| format!("{} is not hex", path.display()))
}

fn read_ca_pub(path: &std::path::Path) -> anyhow::Result<CaVerifyingKey> {
    CaVerifyingKey::from_bytes(&read_hex(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn ca(cmd: CaCommand) -> CmdResult {
    let mut rng = rand::rngs::OsRng;
    match cmd {
        CaCommand::Init { out } => {
            let ca = CertificateAuthority::generate(&mut rng);
            anonkey_client::store::write_private(&out, hex::encode(ca.secret_bytes()).as_bytes())?;
            let pub_path = with_ext(&out, ".pub");
            std::fs::write(&pub_path, hex::encode(ca.verifying_key().to_bytes()))?;
            println!("wrote {} and {}", out.display(), pub_path.display());
        }
        CaCommand::Issue { ca, subject, out } => {
            let secret: [u8; 32] = read_hex(&ca)?
                .try_into()
                .map_err(|_| anyhow!("{} does not hold a 32-byte key", ca.display()))?;
            let ca = CertificateAuthority::from_secret_bytes(&secret);
            let ck = SubjectSigningKey::generate(&mut rng);
            let cert = ca.issue(&subject, &ck.verifying_key());
            std::fs::write(with_ext(&out, ".cert"), cert.to_bytes())?;
            anonkey_client::store::write_private(&with_ext(&out, ".key"), hex::encode(ck.to_bytes()).as_bytes())?;
            println!("issued certificate for {subject}");
        }
    }
    Ok(())
}
