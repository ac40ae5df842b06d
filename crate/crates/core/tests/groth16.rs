use std::time::{Duration, Instant};

use anonkey_core::entropy::MockSource;
use anonkey_core::hash::HashProfile;
use anonkey_core::kem::KemProfile;
use anonkey_core::note::{user_init, Note, Nullifier};
use anonkey_core::zkp::{
    self, instance_for, prove, setup, verify, verify_bytes, BackendKind, Clause, Crs, Proof, RejectReason,
    RelationConfig, SetupMode, Verdict, ZkpError,
};
use anonkey_core::{Lambda, MerkleTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn config(hash: HashProfile, depth: u32) -> RelationConfig {
    RelationConfig::new(hash, KemProfile::X25519Hpke, Lambda::L256, depth)
}

fn populate(config: &RelationConfig, users: usize, seed: u64) -> (Vec<Note>, MerkleTree) {
    let src = MockSource::new(seed);
    let mut tree = MerkleTree::empty_tree(config.hash_profile, config.depth).unwrap();
    let notes: Vec<Note> = (0..users)
        .map(|_| user_init(config.lambda, config.kem_profile, &src).unwrap())
        .collect();
    for n in &notes {
        tree.add_leaf(n.commitment(config.hash_profile).0).unwrap();
    }
    (notes, tree)
}

fn crs(config: &RelationConfig, seed: u64) -> Crs {
    setup(BackendKind::Groth16, config, SetupMode::Test { seed }).unwrap()
}

#[test]
fn honest_proof_verifies_and_tampering_is_rejected() {
    let c = config(HashProfile::Algebraic, 4);
    let crs = crs(&c, 1);
    let (notes, tree) = populate(&c, 3, 10);
    let (x, w) = instance_for(&notes[1], &tree).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let proof = prove(&crs.proving_key, &x, &w, &mut rng).unwrap();
    assert_eq!(verify(&crs.verification_key, &x, &proof), Verdict::Accept);

    let bytes = proof.to_bytes();
    assert_eq!(verify_bytes(&crs.verification_key, &x, &bytes), Verdict::Accept);
    let positions: Vec<usize> = (0..64).map(|_| rng.gen_range(0..bytes.len() * 8)).collect();
    for pos in positions {
        let mut flipped = bytes.clone();
        flipped[pos / 8] ^= 1 << (pos % 8);
        assert!(
            !verify_bytes(&crs.verification_key, &x, &flipped).is_accept(),
            "bit {pos} flip accepted"
        );
    }

    let other = notes[2].nullifier(c.hash_profile);
    let mut x2 = x;
    x2.nullifier = other;
    assert_eq!(
        verify(&crs.verification_key, &x2, &proof),
        Verdict::Reject(RejectReason::Invalid)
    );
}

#[test]
fn proof_from_another_setup_is_rejected() {
    let c = config(HashProfile::Algebraic, 4);
    let a = crs(&c, 1);
    let b = crs(&c, 2);
    let (notes, tree) = populate(&c, 2, 11);
    let (x, w) = instance_for(&notes[0], &tree).unwrap();
    let proof = prove(&a.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
    assert!(!verify(&b.verification_key, &x, &proof).is_accept());

    let d5 = crs(&config(HashProfile::Algebraic, 5), 1);
    assert_eq!(
        verify(&d5.verification_key, &x, &proof),
        Verdict::Reject(RejectReason::FingerprintMismatch)
    );
}

#[test]
fn bad_witnesses_fail_at_prove_time() {
    let c = config(HashProfile::Algebraic, 4);
    let crs = crs(&c, 1);
    let (notes, tree) = populate(&c, 3, 12);
    let (x, w) = instance_for(&notes[0], &tree).unwrap();
    let mut rng = rand::rngs::OsRng;

    let mut bad = w.clone();
    bad.leaf_index = 1;
    assert!(matches!(
        prove(&crs.proving_key, &x, &bad, &mut rng),
        Err(ZkpError::Unsatisfied(Clause::Membership))
    ));

    // N computed from a different rho.
    let mut rho = notes[0].rho().to_vec();
    rho[0] ^= 0xff;
    let forged = Note::from_parts(rho, notes[0].secret_key().clone()).unwrap();
    let mut x2 = x;
    x2.nullifier = forged.nullifier(c.hash_profile);
    assert!(matches!(
        prove(&crs.proving_key, &x2, &w, &mut rng),
        Err(ZkpError::Unsatisfied(Clause::Nullifier))
    ));

    let mut stale = x;
    stale.root = MerkleTree::empty_tree(c.hash_profile, 4).unwrap().get_root();
    assert!(matches!(
        prove(&crs.proving_key, &stale, &w, &mut rng),
        Err(ZkpError::Unsatisfied(Clause::Membership))
    ));
}

#[test]
fn completeness_over_random_trees() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for (depth, seed) in [(3u32, 1u64), (6, 2), (8, 3)] {
        let c = config(HashProfile::Algebraic, depth);
        let crs = crs(&c, seed);
        let users = rng.gen_range(1..=32usize.min(1 << depth));
        let (notes, tree) = populate(&c, users, seed * 100);
        for _ in 0..4 {
            let who = rng.gen_range(0..users);
            let (x, w) = instance_for(&notes[who], &tree).unwrap();
            let proof = prove(&crs.proving_key, &x, &w, &mut rng).unwrap();
            assert_eq!(verify(&crs.verification_key, &x, &proof), Verdict::Accept);
        }
    }
}

#[test]
fn proofs_are_constant_size_and_verify_time_is_flat() {
    let mut sizes = Vec::new();
    let mut verify_times = Vec::new();
    for depth in [4u32, 8, 16] {
        let c = config(HashProfile::Algebraic, depth);
        let crs = crs(&c, depth as u64);
        let (notes, tree) = populate(&c, 5, depth as u64);
        let (x, w) = instance_for(&notes[3], &tree).unwrap();
        let proof = prove(&crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
        sizes.push(proof.to_bytes().len());
        assert!(verify(&crs.verification_key, &x, &proof).is_accept());
        let start = Instant::now();
        for _ in 0..10 {
            assert!(verify(&crs.verification_key, &x, &proof).is_accept());
        }
        verify_times.push(start.elapsed() / 10);
    }
    assert!(sizes.iter().all(|s| *s == sizes[0]), "{sizes:?}");
    let max = verify_times.iter().max().unwrap();
    let min = verify_times.iter().min().unwrap();
    assert!(max.as_secs_f64() < 2.0 * min.as_secs_f64(), "{verify_times:?}");
}

#[test]
fn keys_survive_disk_roundtrip() {
    let c = config(HashProfile::Algebraic, 2);
    let crs = crs(&c, 4);
    let dir = tempfile::tempdir().unwrap();
    crs.save(dir.path()).unwrap();
    let loaded = Crs::load(dir.path()).unwrap();
    let (notes, tree) = populate(&c, 2, 4);
    let (x, w) = instance_for(&notes[1], &tree).unwrap();
    let proof = prove(&loaded.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
    assert!(verify(&crs.verification_key, &x, &proof).is_accept());
    assert!(verify(&loaded.verification_key, &x, &proof).is_accept());
}

#[test]
fn sha256_profile_and_rsa_keys_prove() {
    let c = config(HashProfile::Sha256, 2);
    let crs = crs(&c, 5);
    let (notes, tree) = populate(&c, 3, 5);
    let (x, w) = instance_for(&notes[2], &tree).unwrap();
    let proof = prove(&crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
    assert!(verify(&crs.verification_key, &x, &proof).is_accept());
    let mut x2 = x;
    x2.nullifier = Nullifier(HashProfile::Sha256.hash(b"n"));
    assert!(!verify(&crs.verification_key, &x2, &proof).is_accept());

    let c = RelationConfig::new(HashProfile::Algebraic, KemProfile::RsaOaep, Lambda::L128, 3);
    let crs = setup(BackendKind::Groth16, &c, SetupMode::Test { seed: 6 }).unwrap();
    let (notes, tree) = populate(&c, 2, 6);
    let (x, w) = instance_for(&notes[0], &tree).unwrap();
    let proof = prove(&crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
    assert!(verify(&crs.verification_key, &x, &proof).is_accept());
}

#[test]
fn prove_time_by_depth() {
    // Informational; run with --nocapture.
    for depth in [4u32, 8, 12, 16] {
        let c = config(HashProfile::Algebraic, depth);
        let crs = crs(&c, 7);
        let (notes, tree) = populate(&c, 4, 7);
        let (x, w) = instance_for(&notes[0], &tree).unwrap();
        let mut total = Duration::ZERO;
        for _ in 0..3 {
            let start = Instant::now();
            let p: Proof = prove(&crs.proving_key, &x, &w, &mut rand::rngs::OsRng).unwrap();
            total += start.elapsed();
            assert!(verify(&crs.verification_key, &x, &p).is_accept());
        }
        println!(
            "depth {depth}: {} constraints, prove {:?}",
            zkp::circuit::constraint_count(&c).unwrap(),
            total / 3
        );
    }
}
