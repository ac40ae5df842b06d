//! Adversarial suites. Each game counts attempts and adversary wins and
//! keeps a transcript line for every win.

use std::collections::BTreeMap;
use std::sync::Arc;

use anonkey_core::entropy::MockSource;
use anonkey_core::kem::{decap, keygen, EncapsulatedKey};
use anonkey_core::merkle::ValidationList;
use anonkey_core::zkp::circuit::is_satisfied;
use anonkey_core::zkp::{setup, verify, BackendKind, Proof, SetupMode, Statement, Witness};
use anonkey_core::{Digest, MerkleTree, Note};
use anonkey_server::{DataDir, RegistryState};
use anonkey_tunnel::{KeyRequestHandler, KeyResponse};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::stack::{relation, Stack};

#[derive(Debug, Clone, Default, Serialize)]
pub struct GameReport {
    pub name: String,
    pub attempts: u64,
    /// Adversary wins: acceptances, deliveries, recoveries or correct guesses.
    pub wins: u64,
    /// Attempts and wins per attack.
    pub attacks: BTreeMap<String, (u64, u64)>,
    /// Rejection reasons seen.
    pub outcomes: BTreeMap<String, u64>,
    /// Honest control runs that succeeded, and how many were run.
    pub controls: (u64, u64),
    pub transcripts: Vec<String>,
}

impl GameReport {
    fn new(name: &str) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    fn attempt(&mut self, attack: &str, won: bool, transcript: impl FnOnce() -> String) {
        self.attempts += 1;
        let e = self.attacks.entry(attack.into()).or_default();
        e.0 += 1;
        if won {
            e.1 += 1;
            self.wins += 1;
            self.transcripts.push(format!("{attack}: {}", transcript()));
        }
    }

    fn outcome(&mut self, what: impl Into<String>) {
        *self.outcomes.entry(what.into()).or_default() += 1;
    }

    fn control(&mut self, ok: bool) {
        self.controls.1 += 1;
        if ok {
            self.controls.0 += 1;
        }
    }

    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.attempts.max(1) as f64
    }
}

fn flip_bit(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

/// `count` bit positions, one drawn uniformly from each of `count` equal
/// strata of `0..bits`.
pub fn stratified_bits(bits: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..count)
        .map(|k| {
            let lo = k * bits / count;
            let hi = ((k + 1) * bits / count).max(lo + 1);
            rng.gen_range(lo..hi)
        })
        .collect()
}

/// Redeems `redeemed` keys, then replays their requests `attempts` times
/// over the tunnel.
pub fn game_replay(redeemed: usize, attempts: usize, seed: u64) -> GameReport {
    let entropy = Arc::new(MockSource::new(seed));
    let stack = Stack::new(BackendKind::Groth16, 4, entropy.clone(), seed);
    let mut report = GameReport::new("replay");
    let requests: Vec<_> = (0..redeemed)
        .map(|_| {
            let note = stack.registered_note();
            let req = stack.request(&note, 32);
            let (_, resp) = stack.session(&req, None);
            report.control(matches!(resp, KeyResponse::Delivered(_)));
            req
        })
        .collect();
    let consumed = entropy.position();
    for i in 0..attempts {
        let req = &requests[i % requests.len()];
        let (_, resp) = stack.session(req, None);
        match &resp {
            KeyResponse::Delivered(_) => report.outcome("delivered"),
            KeyResponse::Rejected(r) => report.outcome(r.code.as_str()),
        }
        report.attempt("replay", matches!(resp, KeyResponse::Delivered(_)), || {
            format!("request {} delivered a second key", i % requests.len())
        });
    }
    if entropy.position() != consumed {
        report.transcripts.push("entropy was drawn during replays".into());
    }
    report
}

#[derive(Debug, Clone, Copy)]
pub struct UnforgeabilityOptions {
    pub depth: u32,
    /// Honest proofs whose bits are mutated.
    pub proofs: usize,
    pub bits_per_proof: usize,
    pub forged_lists: usize,
    /// Forged witnesses pushed through the prover with the native check skipped.
    pub bypass: usize,
    pub fake_roots: usize,
    pub seed: u64,
}

impl Default for UnforgeabilityOptions {
    fn default() -> Self {
        Self {
            depth: 7,
            proofs: 100,
            bits_per_proof: 64,
            forged_lists: 1000,
            bypass: 20,
            fake_roots: 20,
            seed: 3,
        }
    }
}

fn accepted(stack: &Stack, proof: &[u8], x: &Statement, report: &mut GameReport) -> bool {
    match stack.pvs.verify_proof(proof, x) {
        Ok(()) => true,
        Err(r) => {
            report.outcome(r.code.as_str());
            false
        }
    }
}

/// Fake roots, forged validation lists, proof bit flips, statement
/// mutations and replays against one PVS.
pub fn game_unforgeability(opts: &UnforgeabilityOptions) -> GameReport {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let stack = Stack::new(BackendKind::Groth16, opts.depth, Arc::new(MockSource::new(opts.seed)), opts.seed);
    let mut report = GameReport::new("unforgeability");
    let profile = stack.relation.hash_profile;

    // Honest proofs, each made right after its owner registered.
    let honest: Vec<(Statement, Vec<u8>)> = (0..opts.proofs)
        .map(|_| {
            let note = stack.registered_note();
            let (x, p) = stack.prove(&note);
            (x, p.to_bytes())
        })
        .collect();
    let known_roots = stack.auth.fetch_old_roots();

    for (i, (x, proof)) in honest.iter().enumerate() {
        for bit in stratified_bits(proof.len() * 8, opts.bits_per_proof, &mut rng) {
            let mut mutated = proof.clone();
            flip_bit(&mut mutated, bit);
            let won = accepted(&stack, &mutated, x, &mut report);
            report.attempt("proof-bit-flip", won, || format!("proof {i}, bit {bit}"));
        }

        let mut x1 = *x;
        flip_bit(&mut x1.nullifier.0 .0, rng.gen_range(0..256));
        let won = accepted(&stack, proof, &x1, &mut report);
        report.attempt("statement-nullifier", won, || format!("proof {i} under {:?}", x1));

        let other_root = loop {
            let r = known_roots[rng.gen_range(0..known_roots.len())];
            if r != x.root {
                break r;
            }
        };
        let x2 = Statement::new(x.nullifier, other_root);
        let won = accepted(&stack, proof, &x2, &mut report);
        report.attempt("statement-root-swap", won, || format!("proof {i} under root {}", other_root.to_hex()));

        let (y, _) = &honest[(i + 1) % honest.len()];
        let x3 = Statement::new(y.nullifier, x.root);
        let won = accepted(&stack, proof, &x3, &mut report);
        report.attempt("statement-nullifier-swap", won, || format!("proof {i} with nullifier of {}", (i + 1) % honest.len()));
    }

    // Adversaries hold notes that were never registered.
    let outsiders: Vec<Note> = (0..8).map(|_| stack.new_note()).collect();
    let tree = stack.auth.fetch_tree();
    let root = tree.get_root();
    let n_leaves = tree.next_free();
    let config = stack.relation;
    for k in 0..opts.forged_lists {
        let note = &outsiders[k % outsiders.len()];
        let c = note.commitment(profile);
        let x = Statement::new(note.nullifier(profile), root);
        let index = rng.gen_range(0..n_leaves);
        let real = tree.validation_list(index).expect("path");
        let siblings = match k % 3 {
            // A genuine path for someone else's leaf.
            0 => real.siblings.clone(),
            // Random digests.
            1 => (0..real.len()).map(|_| random_digest(profile, &mut rng)).collect(),
            // Genuine path with the lowest sibling swapped for the real leaf.
            _ => {
                let mut s = real.siblings.clone();
                s[0] = tree.leaves()[index as usize];
                s
            }
        };
        let w = Witness::new(note, c, index, ValidationList { siblings });
        let proved = anonkey_core::zkp::prove(&stack.crs.proving_key, &x, &w, &mut rng);
        let circuit_ok = is_satisfied(&config, &x, &w).unwrap_or(false);
        let mut won = circuit_ok || proved.is_ok();
        if let Ok(p) = &proved {
            accepted(&stack, &p.to_bytes(), &x, &mut report);
        } else {
            report.outcome("prove-refused");
        }
        if k < opts.bypass {
            let body = BackendKind::Groth16
                .backend()
                .prove_checked(&stack.crs.proving_key, &x, &w, &mut rng);
            match body {
                Ok(body) => {
                    let p = Proof {
                        backend: BackendKind::Groth16,
                        fingerprint: stack.crs.fingerprint(),
                        body,
                    };
                    won |= accepted(&stack, &p.to_bytes(), &x, &mut report);
                }
                Err(_) => report.outcome("backend-refused"),
            }
        }
        report.attempt("forged-validation-list", won, || {
            format!("leaf {index}, variant {}, circuit satisfied {circuit_ok}", k % 3)
        });
    }

    // Honest proofs against a tree the AS never published.
    for k in 0..opts.fake_roots {
        let note = &outsiders[k % outsiders.len()];
        let mut fake = MerkleTree::from_snapshot(&tree.to_snapshot()).expect("copy");
        fake.add_leaf(note.commitment(profile).0).expect("room");
        let (x, w) = anonkey_core::zkp::instance_for(note, &fake).expect("instance");
        let p = anonkey_core::zkp::prove(&stack.crs.proving_key, &x, &w, &mut rng).expect("prove");
        // The proof itself is sound for the fake statement; only the root check stands in the way.
        report.control(verify(&stack.crs.verification_key, &x, &p).is_accept());
        let won = accepted(&stack, &p.to_bytes(), &x, &mut report);
        report.attempt("fake-root", won, || format!("root {}", x.root.to_hex()));
    }

    // Every honest proof still redeems once, then replays fail.
    for (x, proof) in &honest {
        let ok = stack.pvs.verify_proof(proof, x).is_ok();
        report.control(ok);
    }
    for (i, (x, proof)) in honest.iter().enumerate() {
        let won = accepted(&stack, proof, x, &mut report);
        report.attempt("replay", won, || format!("proof {i}"));
    }
    report
}

fn random_digest(profile: anonkey_core::HashProfile, rng: &mut impl RngCore) -> Digest {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    profile.hash(&b)
}

/// A proof made against root `r_k` is redeemed only after `lag` further
/// registrations have moved the root on.
pub fn game_old_roots(trials: usize, lag: usize, depth: u32, seed: u64) -> GameReport {
    let stack = Stack::new(BackendKind::Groth16, depth, Arc::new(MockSource::new(seed)), seed);
    let mut report = GameReport::new("old-roots");
    let mut pending = std::collections::VecDeque::new();
    for k in 0..trials + lag {
        let note = stack.registered_note();
        if k < trials {
            let (x, p) = stack.prove(&note);
            pending.push_back((k, x, p.to_bytes()));
        }
        if k >= lag {
            let (j, x, p) = pending.pop_front().expect("pending proof");
            let moved = x.root != stack.auth.root() && stack.auth.fetch_old_roots().contains(&x.root);
            let ok = moved && stack.pvs.verify_proof(&p, &x).is_ok();
            // Here the honest user "wins" by being accepted.
            report.control(ok);
            if !ok {
                report.transcripts.push(format!("proof {j} made at root {} rejected", x.root.to_hex()));
            }
        }
    }
    report
}

/// What the servers hold after one anonymity trial, as the distinguisher sees it.
struct ServerView {
    registry: Arc<RegistryState>,
    nullifiers: Vec<Digest>,
    redeemed: (Statement, Vec<u8>),
}

/// The server's guess for which of the two registered users redeemed.
///
/// It can only test the redemption against everything derivable from its
/// own records; when no test singles out a user it guesses at random.
fn distinguish(view: &ServerView, coin: &mut impl Rng) -> (usize, bool) {
    let profile = view.registry.tree.profile();
    let (x, proof) = &view.redeemed;
    let n = x.nullifier.0;
    let mut hits = [false; 2];
    for (j, hit) in hits.iter_mut().enumerate() {
        let rec = &view.registry.audit[j];
        let c = rec.commitment;
        let idx = (j as u64).to_be_bytes();
        let candidates = [
            c,
            profile.hash(&c.0),
            profile.hash_node(&c, &x.root),
            profile.hash_node(&x.root, &c),
            profile.hash(rec.subject_id.as_bytes()),
            profile.hash(&idx),
            view.registry.tree.node(0, j as u64 ^ 1),
        ];
        let in_proof = proof.windows(32).any(|w| w == c.0) || proof.windows(8).any(|w| w == idx);
        *hit = candidates.contains(&n) || in_proof || view.nullifiers.contains(&c);
    }
    match hits {
        [true, false] => (0, true),
        [false, true] => (1, true),
        _ => (coin.gen_range(0..2), false),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PrivacyOptions {
    pub trials: usize,
    pub t: u32,
    pub seed: u64,
}

/// Anonymity and confidentiality over the same trials.
///
/// Each trial registers two users in a fresh depth-1 tree, lets a random
/// one redeem a key, then (a) the server guesses who it was and (b) an
/// adversary holding the commitments, nullifier, proof, public key and
/// ciphertext tries to open the key with every secret key it can make.
pub fn game_privacy(opts: &PrivacyOptions) -> (GameReport, GameReport) {
    let crs = Arc::new(setup(BackendKind::Groth16, &relation(1), SetupMode::Test { seed: opts.seed }).expect("setup"));
    let mut challenger = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut coin = ChaCha20Rng::seed_from_u64(opts.seed ^ 0xc01);
    let mut adversary = ChaCha20Rng::seed_from_u64(opts.seed ^ 0xadd);
    let mut anonymity = GameReport::new("anonymity");
    let mut confidentiality = GameReport::new("confidentiality");

    for trial in 0..opts.trials {
        let trial_seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(trial as u64);
        let stack = Stack::with_crs(crs.clone(), Arc::new(MockSource::new(trial_seed)), trial_seed);
        let users = [stack.new_note(), stack.new_note()];
        for u in &users {
            stack.register(u);
        }
        stack.pvs.sync_registry().expect("sync");
        let b = challenger.gen_range(0..2usize);
        let req = stack.request(&users[b], opts.t);
        let enc = match stack.pvs.validate(&req).and_then(|d| d.deliver()) {
            Ok(bytes) => bytes,
            Err(r) => {
                anonymity.transcripts.push(format!("trial {trial}: honest redemption refused: {r}"));
                continue;
            }
        };

        let view = ServerView {
            registry: stack.auth.snapshot(),
            nullifiers: stack.pvs.nullifiers(),
            redeemed: (req.statement, req.proof.clone()),
        };
        let (guess, decided) = distinguish(&view, &mut coin);
        if decided {
            anonymity.outcome("derivation-match");
        }
        anonymity.attempt("guess", guess == b, || format!("trial {trial}: b={b}, decided by derivation {decided}"));

        // Confidentiality: the real key, then every wrong-key attempt.
        let enc = EncapsulatedKey::from_bytes(&enc);
        let truth = decap(&enc, users[b].secret_key()).ok();
        confidentiality.control(truth.as_ref().is_some_and(|k| k.len() == opts.t as usize));
        let Some(truth) = truth else { continue };
        let profile = stack.relation.kem_profile;
        let mut guesses = Vec::new();
        guesses.push(("fresh-key", keygen(profile, &mut adversary).expect("keygen").1));
        guesses.push(("other-user", users[1 - b].secret_key().clone()));
        let c = users[b].commitment(stack.relation.hash_profile).0;
        for (label, material) in [
            ("seeded-from-commitment", c.0.to_vec()),
            ("seeded-from-nullifier", req.statement.nullifier.0 .0.to_vec()),
            ("seeded-from-proof", req.proof.clone()),
        ] {
            let seed = stack.relation.hash_profile.hash(&material);
            let mut derived = ChaCha20Rng::from_seed(seed.0);
            guesses.push((label, keygen(profile, &mut derived).expect("keygen").1));
        }
        for (label, sk) in guesses {
            let recovered = decap(&enc, &sk).is_ok_and(|k| *k == *truth);
            confidentiality.attempt(label, recovered, || format!("trial {trial}"));
        }
        let in_clear = enc.to_bytes().windows(truth.len()).any(|w| w == truth.as_slice());
        confidentiality.attempt("plaintext-in-ciphertext", in_clear, || format!("trial {trial}"));
    }
    (anonymity, confidentiality)
}

/// Fields one server stores that must not show up in the other's files.
#[derive(Debug, Default, Serialize)]
pub struct CrossScan {
    /// `(field, file)` for every linking value found in the other store.
    pub shared: Vec<(String, String)>,
    /// Roots present in both stores; these are expected.
    pub shared_roots: usize,
    pub as_fields: usize,
    pub pvs_fields: usize,
    /// Fields not found in their own store. Nonempty means the scan is blind to them.
    pub unseen: Vec<String>,
}

impl CrossScan {
    pub fn is_clean(&self) -> bool {
        self.shared.is_empty() && self.unseen.is_empty() && self.as_fields > 0 && self.pvs_fields > 0
    }
}

fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(read_tree(&p));
            } else if let Ok(b) = std::fs::read(&p) {
                out.push((p.display().to_string(), b));
            }
        }
    }
    out
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// A stored value and the encodings it might be written in.
struct Field {
    name: String,
    encodings: Vec<Vec<u8>>,
}

impl Field {
    fn digest(name: String, d: &Digest) -> Self {
        Field {
            name,
            encodings: vec![d.0.to_vec(), d.to_hex().into_bytes()],
        }
    }

    fn found_in(&self, files: &[(String, Vec<u8>)]) -> Option<String> {
        files
            .iter()
            .find(|(_, b)| self.encodings.iter().any(|e| contains(b, e)))
            .map(|(n, _)| n.clone())
    }
}

/// Compares the AS and PVS directories of a deployment. Timestamps are
/// not treated as fields.
pub fn cross_scan(dir: &DataDir) -> CrossScan {
    let registry = anonkey_server::registry::load_registry(dir).expect("registry");
    let as_files = read_tree(&dir.as_dir());
    let pvs_files = read_tree(&dir.pvs_dir());

    let mut as_fields = Vec::new();
    for (i, rec) in registry.audit.iter().enumerate() {
        as_fields.push(Field::digest(format!("commitment[{i}]"), &rec.commitment));
        as_fields.push(Field {
            name: format!("subject[{i}]"),
            encodings: vec![rec.subject_id.clone().into_bytes()],
        });
    }
    let mut pvs_fields = Vec::new();
    for (i, n) in anonkey_server::nullifiers::read_all(dir).unwrap_or_default().iter().enumerate() {
        pvs_fields.push(Field::digest(format!("nullifier[{i}]"), n));
    }
    let log = std::fs::read_to_string(dir.redemptions()).unwrap_or_default();
    for (i, line) in log.lines().enumerate() {
        if let Ok(r) = serde_json::from_str::<anonkey_server::pvs::RedemptionRecord>(line) {
            let mut encodings = vec![r.proof.clone().into_bytes()];
            encodings.extend(hex::decode(&r.proof).ok());
            pvs_fields.push(Field {
                name: format!("proof[{i}]"),
                encodings,
            });
        }
    }

    let mut scan = CrossScan {
        as_fields: as_fields.len(),
        pvs_fields: pvs_fields.len(),
        ..Default::default()
    };
    for (fields, own, other) in [(&as_fields, &as_files, &pvs_files), (&pvs_fields, &pvs_files, &as_files)] {
        for f in fields {
            if f.found_in(own).is_none() {
                scan.unseen.push(f.name.clone());
            }
            if let Some(file) = f.found_in(other) {
                scan.shared.push((f.name.clone(), file));
            }
        }
    }
    // Leaves the AS holds must not appear in the PVS store even outside the audit trail.
    for (i, leaf) in registry.tree.leaves().iter().enumerate() {
        if let Some(file) = Field::digest(format!("leaf[{i}]"), leaf).found_in(&pvs_files) {
            scan.shared.push((format!("leaf[{i}]"), file));
        }
    }
    let mut roots = registry.old_roots.clone();
    roots.push(registry.root());
    scan.shared_roots = roots
        .iter()
        .enumerate()
        .filter(|(i, r)| Field::digest(format!("root[{i}]"), r).found_in(&pvs_files).is_some())
        .count();
    scan.shared.sort();
    scan.shared.dedup();
    scan
}
