use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anonkey_client::store::DEFAULT_ITERATIONS;
use anonkey_client::{
    cmd_auth, cmd_init, cmd_prove, cmd_request_key, write_key, AuthService, ClientError, FailureSource,
    HttpAuthService, RequestOutcome, UserStore,
};
use anonkey_core::cert::{Certificate, SubjectSigningKey};
use anonkey_core::entropy::OsSource;
use anonkey_tunnel::{KeyRequest, StreamTransport};
use anyhow::{anyhow, Context};
use clap::Args;

use crate::{CmdResult, Failure, EXIT_AUTH_SERVER, EXIT_LOCAL, EXIT_VALIDATION_SERVER};

fn failure(e: ClientError) -> Failure {
    let code = match e.source_party() {
        FailureSource::Local => EXIT_LOCAL,
        FailureSource::AuthServer => EXIT_AUTH_SERVER,
        FailureSource::ValidationServer => EXIT_VALIDATION_SERVER,
    };
    Failure { code, error: e.into() }
}

#[derive(Args)]
pub struct StoreArgs {
    /// Directory of the encrypted note store.
    #[arg(long, default_value = "anonkey-notes")]
    store: PathBuf,
    #[arg(long, env = "ANONKEY_PASSPHRASE", hide_env_values = true)]
    passphrase: String,
}

impl StoreArgs {
    fn open(&self) -> Result<UserStore, Failure> {
        UserStore::open(&self.store, self.passphrase.as_bytes()).map_err(failure)
    }
}

#[derive(Args)]
pub struct InitArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// The note's parameters are taken from this server's configuration.
    #[arg(long)]
    as_url: String,
}

pub fn init(a: InitArgs) -> CmdResult {
    let service = HttpAuthService::new(&a.as_url).map_err(|e| failure(e.into()))?;
    let remote = service.config().map_err(|e| failure(e.into()))?;
    let mut store = if UserStore::exists(&a.store.store) {
        a.store.open()?
    } else {
        UserStore::create(&a.store.store, a.store.passphrase.as_bytes(), DEFAULT_ITERATIONS).map_err(failure)?
    };
    let rel = remote.relation;
    let rec = cmd_init(&mut store, rel.lambda, rel.kem_profile, rel.hash_profile, &OsSource::new()).map_err(failure)?;
    println!("{}", rec.id);
    Ok(())
}

#[derive(Args)]
pub struct AuthArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    note: String,
    /// Certificate file from `ca issue`.
    #[arg(long)]
    cert: PathBuf,
    /// Signing key file from `ca issue`.
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    as_url: String,
}

pub fn auth(a: AuthArgs) -> CmdResult {
    let cert = Certificate::from_bytes(&std::fs::read(&a.cert).with_context(|| format!("reading {}", a.cert.display()))?)
        .map_err(|e| anyhow!("{}: {e}", a.cert.display()))?;
    let key_hex = std::fs::read_to_string(&a.key).with_context(|| format!("reading {}", a.key.display()))?;
    let ck = SubjectSigningKey::from_bytes(&hex::decode(key_hex.trim())?).map_err(|e| anyhow!("{}: {e}", a.key.display()))?;
    let service = HttpAuthService::new(&a.as_url).map_err(|e| failure(e.into()))?;
    let mut store = a.store.open()?;
    let root = cmd_auth(&mut store, &a.note, &cert, &ck, &service).map_err(failure)?;
    println!("registered {}; root {}", a.note, root.to_hex());
    Ok(())
}

#[derive(Args)]
pub struct ProveArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    note: String,
    /// Requested key length in bytes.
    #[arg(long, default_value_t = 32)]
    t: u32,
    #[arg(long)]
    as_url: String,
    /// Bundle output path, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

pub fn prove(a: ProveArgs) -> CmdResult {
    let service = HttpAuthService::new(&a.as_url).map_err(|e| failure(e.into()))?;
    let store = a.store.open()?;
    let bundle = cmd_prove(&store, &a.note, a.t, &service, &mut rand::rngs::OsRng).map_err(failure)?;
    write_out(&a.out, &bundle.to_bytes(), true)
}

fn write_out(path: &Path, bytes: &[u8], private: bool) -> CmdResult {
    if path == Path::new("-") {
        std::io::stdout().write_all(bytes)?;
    } else if private {
        write_key(path, bytes).map_err(failure)?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct RequestKeyArgs {
    /// Bundle from `prove`, `-` for stdin.
    #[arg(long, default_value = "-")]
    bundle: PathBuf,
    #[arg(long)]
    pvs_addr: SocketAddr,
    /// Override the key length recorded in the bundle.
    #[arg(long)]
    t: Option<u32>,
    /// Key output path, `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Store holding the bundle's note. Without it the key is written sealed.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, env = "ANONKEY_PASSPHRASE", hide_env_values = true)]
    passphrase: Option<String>,
}

pub fn request_key(a: RequestKeyArgs) -> CmdResult {
    let mut bytes = Vec::new();
    if a.bundle == Path::new("-") {
        std::io::stdin().read_to_end(&mut bytes)?;
    } else {
        bytes = std::fs::read(&a.bundle).with_context(|| format!("reading {}", a.bundle.display()))?;
    }
    let mut bundle = KeyRequest::from_bytes(&bytes).map_err(|e| anyhow!("not a proof bundle: {e}"))?;
    if let Some(t) = a.t {
        bundle.t = t;
    }
    let mut store = match &a.store {
        Some(dir) => {
            let pass = a.passphrase.as_deref().ok_or_else(|| anyhow!("--store needs a passphrase"))?;
            Some(UserStore::open(dir, pass.as_bytes()).map_err(failure)?)
        }
        None => None,
    };
    let conn = TcpStream::connect(a.pvs_addr).map_err(|e| failure(ClientError::Io(e)))?;
    conn.set_read_timeout(Some(Duration::from_secs(60)))?;
    let outcome = cmd_request_key(store.as_mut(), &bundle, StreamTransport::new(conn)).map_err(failure)?;
    match outcome {
        RequestOutcome::Key(key) => write_out(&a.out, &key, true)?,
        RequestOutcome::Sealed(enc) => {
            write_out(&a.out, &enc, true)?;
            eprintln!("no store given: wrote the sealed key");
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct ShowArgs {
    #[command(flatten)]
    store: StoreArgs,
}

pub fn show(a: ShowArgs) -> CmdResult {
    let store = a.store.open()?;
    for n in store.notes() {
        println!(
            "{}\t{}\t{}\t{}",
            n.id,
            n.status.as_str(),
            n.hash_profile.name(),
            n.registered_root.map(|r| r.to_hex()).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}
