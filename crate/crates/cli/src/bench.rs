use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use anonkey_bench::games::{
    game_old_roots, game_privacy, game_replay, game_unforgeability, GameReport, PrivacyOptions, UnforgeabilityOptions,
};
use anonkey_bench::keyreq::{bench_key_request, EntropyChoice, KeyRequestOptions};
use anonkey_bench::record::{write_both, write_jsonl, BenchRecord};
use anonkey_bench::scaling::{bench_prove_scaling, summarize, ScalingOptions};
use anonkey_core::zkp::BackendKind;
use anyhow::anyhow;
use clap::{Args, Subcommand};

use crate::{CmdResult, Failure, EXIT_LOCAL};

fn backend(s: &str) -> Result<BackendKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output stem: writes `<out>.jsonl` and `<out>.csv`. JSON lines go to stdout if unset.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `groth16` or `mock`.
    #[arg(long, default_value = "groth16", value_parser = backend)]
    backend: BackendKind,
}

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Prove and verify cost against tree depth.
    ProveScaling {
        #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
        depths: Vec<u32>,
        /// Timed proofs per depth.
        #[arg(long, alias = "trials", default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Phase breakdown of a key request against key size.
    KeyRequest {
        #[arg(long, value_delimiter = ',', default_value = "32,256,4096")]
        sizes: Vec<u32>,
        /// Tunnel throttle in bytes per second; 0 for unthrottled.
        #[arg(long, default_value_t = 16_000)]
        rate: u64,
        /// Use /dev/urandom behind this connection delay instead of mock entropy.
        #[arg(long)]
        external_latency_ms: Option<u64>,
        #[arg(long, default_value_t = 4)]
        depth: u32,
        #[arg(long, alias = "trials", default_value_t = 3)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(records: &[BenchRecord], out: &Option<PathBuf>) -> CmdResult {
    match out {
        Some(stem) => write_both(stem, records)?,
        None => write_jsonl(std::io::stdout().lock(), records)?,
    }
    Ok(())
}

pub fn bench(cmd: BenchCommand) -> CmdResult {
    match cmd {
        BenchCommand::ProveScaling { depths, reps, common } => {
            let opts = ScalingOptions {
                backend: common.backend,
                prove_reps: reps,
                seed: common.seed,
                ..Default::default()
            };
            let records = bench_prove_scaling(&depths, &opts);
            emit(&records, &common.out)?;
            if records.len() >= 2 {
                let s = summarize(&records);
                eprintln!(
                    "prove ms = {:.2} * depth + {:.2} (R2 {:.4}); constraints R2 {:.6}; verify max/min {:.2}; proof size constant: {}",
                    s.prove_fit.slope,
                    s.prove_fit.intercept,
                    s.prove_fit.r2,
                    s.constraint_fit.r2,
                    s.verify_ratio,
                    s.proof_size_constant
                );
            }
        }
        BenchCommand::KeyRequest {
            sizes,
            rate,
            external_latency_ms,
            depth,
            reps,
            common,
        } => {
            let opts = KeyRequestOptions {
                backend: common.backend,
                depth,
                rate: (rate > 0).then_some(rate),
                entropy: match external_latency_ms {
                    Some(ms) => EntropyChoice::External {
                        latency: Duration::from_millis(ms),
                    },
                    None => EntropyChoice::Mock,
                },
                reps,
                seed: common.seed,
            };
            let records = bench_key_request(&sizes, &opts);
            emit(&records, &common.out)?;
            for r in &records {
                eprintln!("t={:>6}  download share {:.3}", r.t.unwrap_or(0), r.transfer_share.unwrap_or(f64::NAN));
            }
        }
    }
    Ok(())
}

#[derive(Subcommand)]
pub enum GamesCommand {
    /// Replay, unforgeability, old-root, anonymity and confidentiality games.
    All {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Replay attempts, forged validation lists and privacy trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// JSON lines of game reports; stdout if unset.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn games(cmd: GamesCommand) -> CmdResult {
    let GamesCommand::All { seed, trials, out } = cmd;
    let mut reports: Vec<GameReport> = Vec::new();
    eprintln!("replay");
    reports.push(game_replay(10, trials, seed));
    eprintln!("unforgeability");
    reports.push(game_unforgeability(&UnforgeabilityOptions {
        forged_lists: trials,
        seed,
        ..Default::default()
    }));
    eprintln!("old roots");
    reports.push(game_old_roots(50, 5, 6, seed));
    eprintln!("anonymity and confidentiality");
    let (anon, conf) = game_privacy(&PrivacyOptions { trials, t: 32, seed });
    reports.push(anon);
    reports.push(conf);

    let mut sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &reports {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    let mut broken = Vec::new();
    for r in &reports {
        eprintln!(
            "{:<16} attempts {:>6}  wins {:>4}  controls {}/{}",
            r.name, r.attempts, r.wins, r.controls.0, r.controls.1
        );
        let failed = match r.name.as_str() {
            "anonymity" => !(0.45..=0.55).contains(&r.win_rate()),
            _ => r.wins > 0 || r.controls.0 != r.controls.1,
        };
        if failed {
            broken.push(r.name.clone());
        }
    }
    if broken.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_LOCAL,
            error: anyhow!("games failed: {}", broken.join(", ")),
        })
    }
}
