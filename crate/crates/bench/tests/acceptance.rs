//! Runs the acceptance battery and prints one PASS/FAIL line per criterion.
//! Exits nonzero if any criterion fails. Pass criterion numbers to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use anonkey_bench::deploy::{run_end_to_end, DeploymentOptions};
use anonkey_bench::games::{
    cross_scan, game_old_roots, game_privacy, game_replay, game_unforgeability, CrossScan, GameReport, PrivacyOptions,
    UnforgeabilityOptions,
};
use anonkey_bench::keyreq::{bench_key_request, KeyRequestOptions};
use anonkey_bench::scaling::{bench_prove_scaling, summarize, ScalingOptions};
use anonkey_core::merkle::is_leaf_of_tree;
use anonkey_core::zkp::BackendKind;
use anonkey_core::{Digest, HashProfile, MerkleTree};
use anonkey_tunnel::session::{INS_GET_CHUNK, INS_PUT_CHUNK};
use anonkey_tunnel::transport::{Direction, Transcript};
use anonkey_tunnel::{
    check_card_transcript, pipe, ApduCommand, CardSession, MessageKind, ReaderSession, Recording, TunnelMessage,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn game_line(r: &GameReport) -> String {
    let mut s = format!("{}: {} attempts, {} wins, controls {}/{}", r.name, r.attempts, r.wins, r.controls.0, r.controls.1);
    for (k, (a, w)) in &r.attacks {
        s.push_str(&format!("; {k} {w}/{a}"));
    }
    if !r.outcomes.is_empty() {
        s.push_str(&format!("; outcomes {:?}", r.outcomes));
    }
    for t in r.transcripts.iter().take(5) {
        s.push_str(&format!("\n    {t}"));
    }
    s
}

fn end_to_end(scan: &mut Option<CrossScan>) -> Outcome {
    let opts = DeploymentOptions {
        backend: BackendKind::Groth16,
        depth: 8,
        users: 10,
        t: 64,
        seed: 1,
    };
    let (deployment, report) = run_end_to_end(&opts);
    *scan = Some(cross_scan(&deployment.dir));
    check(
        report.all_ok(),
        format!(
            "{}/{} redeemed, {} match the entropy oracle {:?}",
            report.redeemed, report.users, report.oracle_matches, report.failures
        ),
    )
}

fn replay() -> Outcome {
    let r = game_replay(10, 1000, 2);
    let spent = r.outcomes.get("nullifier-spent").copied().unwrap_or(0);
    check(
        r.attempts == 1000 && r.wins == 0 && spent == 1000 && r.controls == (10, 10) && r.transcripts.is_empty(),
        format!("{spent} nullifier-spent; {}", game_line(&r)),
    )
}

fn unforgeability() -> Outcome {
    let r = game_unforgeability(&UnforgeabilityOptions::default());
    check(
        r.wins == 0 && r.attempts >= 1000 && r.controls.0 == r.controls.1,
        game_line(&r),
    )
}

fn old_roots() -> Outcome {
    let r = game_old_roots(50, 5, 6, 4);
    check(r.controls == (50, 50), format!("{}/{} accepted after 5 later registrations", r.controls.0, r.controls.1))
}

fn naive_root(profile: HashProfile, depth: u32, leaves: &[Digest]) -> Digest {
    let node = |l: &Digest, r: &Digest| match profile {
        HashProfile::Sha256 => {
            let mut h = Sha256::new();
            h.update(l.0);
            h.update(r.0);
            Digest(h.finalize().into())
        }
        HashProfile::Algebraic => profile.hash_node(l, r),
    };
    let empty = match profile {
        HashProfile::Sha256 => Digest(Sha256::digest([0u8]).into()),
        HashProfile::Algebraic => profile.hash(&[0u8]),
    };
    let mut level: Vec<Digest> = leaves.to_vec();
    level.resize(1 << depth, empty);
    while level.len() > 1 {
        level = level.chunks(2).map(|p| node(&p[0], &p[1])).collect();
    }
    level[0]
}

fn merkle_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut cases = 0u64;
    for profile in [HashProfile::Sha256, HashProfile::Algebraic] {
        for depth in 2..=6u32 {
            let leaves: Vec<Digest> = (0..1u64 << depth)
                .map(|_| {
                    let mut b = [0u8; 16];
                    rng.fill_bytes(&mut b);
                    profile.hash(&b)
                })
                .collect();
            let mut tree = MerkleTree::empty_tree(profile, depth).map_err(|e| e.to_string())?;
            for n in 0..=leaves.len() {
                if n > 0 {
                    tree.add_leaf(leaves[n - 1]).map_err(|e| e.to_string())?;
                }
                let root = tree.get_root();
                cases += 1;
                if root != naive_root(profile, depth, &leaves[..n]) {
                    return Err(format!("{} depth {depth}: root differs after {n} leaves", profile.name()));
                }
                for i in 0..n {
                    let val = tree.validation_list(i as u64).map_err(|e| e.to_string())?;
                    cases += 3;
                    let wrong = (i + 1) % leaves.len();
                    if !is_leaf_of_tree(profile, &leaves[i], i as u64, &val, &root)
                        || is_leaf_of_tree(profile, &leaves[wrong], i as u64, &val, &root)
                        || (n > 1 && is_leaf_of_tree(profile, &leaves[i], ((i + 1) % n) as u64, &val, &root))
                    {
                        return Err(format!("{} depth {depth}: membership wrong for leaf {i} of {n}", profile.name()));
                    }
                }
            }
        }
    }
    Ok(format!("{cases} cases agree with the naive oracle"))
}

fn scaling(depths: &[u32]) -> Vec<anonkey_bench::record::BenchRecord> {
    bench_prove_scaling(depths, &ScalingOptions { seed: 6, ..Default::default() })
}

fn constancy() -> Outcome {
    let recs = scaling(&[4, 8, 16]);
    let s = summarize(&recs);
    let sizes: Vec<_> = recs.iter().map(|r| r.proof_bytes.unwrap_or(0)).collect();
    check(
        s.proof_size_constant && s.verify_ratio < 2.0,
        format!("proof bytes {sizes:?}, verify max/min {:.3}", s.verify_ratio),
    )
}

fn linear_scaling() -> Outcome {
    let recs = scaling(&[4, 8, 12, 16]);
    let s = summarize(&recs);
    let prove: Vec<_> = recs.iter().map(|r| format!("{:.0}", r.prove_ms.unwrap_or(0.0))).collect();
    check(
        s.prove_fit.r2 > 0.99 && s.constraint_fit.r2 > 0.99,
        format!(
            "prove ms {prove:?} R2 {:.4}; constraints R2 {:.6}",
            s.prove_fit.r2, s.constraint_fit.r2
        ),
    )
}

fn commands(transcript: &Transcript, ins: u8) -> usize {
    transcript
        .lock()
        .unwrap()
        .iter()
        .filter(|e| e.direction == Direction::Received)
        .filter(|e| ApduCommand::decode(&e.frame).map(|c| c.ins == ins).unwrap_or(false))
        .count()
}

fn tunnel() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for trial in 0..200 {
        let up: Vec<u8> = (0..rng.gen_range(1..=4096usize)).map(|_| rng.gen()).collect();
        let down: Vec<u8> = (0..rng.gen_range(1..=4096usize)).map(|_| rng.gen()).collect();
        let (reader, card) = pipe();
        let (card, transcript) = Recording::new(card);
        let offer = TunnelMessage::new(MessageKind::ProofUpload, up.clone());
        let card = std::thread::spawn(move || CardSession::new(card).serve(&offer));
        let mut reader = ReaderSession::new(reader);
        let got = reader.upload().map_err(|e| format!("trial {trial}: {e}"))?;
        reader
            .download(&TunnelMessage::new(MessageKind::KeyDelivery, down.clone()))
            .map_err(|e| format!("trial {trial}: {e}"))?;
        let received = card.join().unwrap().map_err(|e| format!("trial {trial}: {e}"))?;
        let ok = got.payload == up
            && received.payload == down
            && commands(&transcript, INS_GET_CHUNK) == up.len().div_ceil(250)
            && commands(&transcript, INS_PUT_CHUNK) == down.len().div_ceil(250)
            && check_card_transcript(&transcript.lock().unwrap()) == Ok(1);
        if !ok {
            return Err(format!("trial {trial}: {} up, {} down bytes", up.len(), down.len()));
        }
    }
    Ok("200 sessions reassembled exactly with the expected chunk counts".into())
}

fn transfer_share() -> Outcome {
    let recs = bench_key_request(&[32, 256, 4096], &KeyRequestOptions { seed: 9, ..Default::default() });
    let shares: Vec<f64> = recs.iter().map(|r| r.transfer_share.unwrap_or(f64::NAN)).collect();
    check(
        shares.windows(2).all(|w| w[0] < w[1]),
        format!("download share at t=32,256,4096: {shares:.3?}"),
    )
}

fn privacy(scan: Option<CrossScan>) -> Outcome {
    let (anon, conf) = game_privacy(&PrivacyOptions { trials: 1000, t: 32, seed: 10 });
    let rate = anon.win_rate();
    let scan = scan.ok_or("no deployment to scan")?;
    let ok = anon.attempts == 1000
        && (0.45..=0.55).contains(&rate)
        && conf.wins == 0
        && conf.controls == (1000, 1000)
        && scan.is_clean();
    check(
        ok,
        format!(
            "guess rate {rate:.3} over {}; {}; cross-scan {} AS / {} PVS fields, shared {:?}, unseen {:?}, roots in both {}",
            anon.attempts,
            game_line(&conf),
            scan.as_fields,
            scan.pvs_fields,
            scan.shared,
            scan.unseen,
            scan.shared_roots
        ),
    )
}

fn main() {
    // Numeric arguments select criteria; none runs them all.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut scan = None;
    let mut failed = 0;
    let mut run = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !only.is_empty() && !only.contains(&n) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {n}: {name} ({secs:.1}s) {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n}: {name} ({secs:.1}s) {d}");
            }
        }
    };
    run(1, "end-to-end redemption", &mut || end_to_end(&mut scan));
    run(2, "replay resistance", &mut replay);
    run(3, "unforgeability", &mut unforgeability);
    run(4, "old roots stay valid", &mut old_roots);
    run(5, "merkle oracle equivalence", &mut merkle_oracle);
    run(6, "constant proof size and verify time", &mut constancy);
    run(7, "linear proving cost", &mut linear_scaling);
    run(8, "tunnel chunking", &mut tunnel);
    run(9, "transfer share grows with key size", &mut transfer_share);
    let mut scan = scan.take();
    run(10, "anonymity and confidentiality", &mut || privacy(scan.take()));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
