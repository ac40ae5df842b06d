//! `anonkey`: run the servers, manage a certificate authority, drive the
//! user protocol and run the benchmarks.

mod bench;
mod server;
mod user;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit status for a failure on this machine.
pub const EXIT_LOCAL: u8 = 1;
/// Exit status when the authentication server refused or was unreachable.
pub const EXIT_AUTH_SERVER: u8 = 3;
/// Exit status when the validation server refused or the tunnel failed.
pub const EXIT_VALIDATION_SERVER: u8 = 4;

#[derive(Parser)]
#[command(name = "anonkey", version, about = "Anonymous key distribution with zero-knowledge proofs")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the CRS, an empty registry and the server configuration.
    Setup(server::SetupArgs),
    /// Run the authentication server.
    ServeAs(server::ServeArgs),
    /// Run the proof validation server (tunnel and health endpoints).
    ServePvs(server::ServeArgs),
    /// Run both servers in one process over a shared data directory.
    Serve(server::ServeArgs),
    /// Certificate authority for user registration.
    #[command(subcommand)]
    Ca(server::CaCommand),
    /// Create a note in the local store.
    Init(user::InitArgs),
    /// Register a note's commitment with the authentication server.
    Auth(user::AuthArgs),
    /// Prove membership and write a key-request bundle.
    Prove(user::ProveArgs),
    /// Redeem a bundle for a key over the tunnel.
    RequestKey(user::RequestKeyArgs),
    /// List the notes in the local store.
    Show(user::ShowArgs),
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    #[command(subcommand)]
    Games(bench::GamesCommand),
}

/// An error plus the exit status it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_LOCAL,
            error: e.into(),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn data_dir_default() -> PathBuf {
    PathBuf::from("anonkey-data")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Setup(a) => server::setup(a),
        Command::ServeAs(a) => server::serve_as(a),
        Command::ServePvs(a) => server::serve_pvs(a),
        Command::Serve(a) => server::serve_both(a),
        Command::Ca(c) => server::ca(c),
        Command::Init(a) => user::init(a),
        Command::Auth(a) => user::auth(a),
        Command::Prove(a) => user::prove(a),
        Command::RequestKey(a) => user::request_key(a),
        Command::Show(a) => user::show(a),
        Command::Bench(c) => bench::bench(c),
        Command::Games(c) => bench::games(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
