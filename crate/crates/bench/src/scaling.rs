//! Proof generation and verification cost as the tree grows.

use std::sync::Arc;
use std::time::Instant;

use anonkey_core::entropy::MockSource;
use anonkey_core::zkp::circuit::constraint_count;
use anonkey_core::zkp::{instance_for, prove, setup, verify, BackendKind, Crs, Proof, RelationConfig, SetupMode, Statement, Witness};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::fit::{linear_fit, LinearFit};
use crate::record::{median, BenchRecord};
use crate::stack::{relation, Stack};

#[derive(Debug, Clone, Copy)]
pub struct ScalingOptions {
    pub backend: BackendKind,
    /// Timed proofs per depth, after one untimed warm-up proof.
    pub prove_reps: usize,
    pub verify_reps: usize,
    /// Users registered before proving, so the tree is not trivially empty.
    pub users: usize,
    pub seed: u64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            backend: BackendKind::Groth16,
            prove_reps: 7,
            verify_reps: 51,
            users: 4,
            seed: 1,
        }
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Timed proofs rotate through the depths, one proof per depth per round,
/// so drift in machine load lands on every depth alike.
pub fn bench_prove_scaling(depths: &[u32], opts: &ScalingOptions) -> Vec<BenchRecord> {
    let mut points: Vec<Point> = depths.iter().map(|&d| Point::new(d, opts)).collect();
    for _ in 0..opts.prove_reps {
        for p in &mut points {
            p.time_prove();
        }
    }
    for _ in 0..opts.verify_reps {
        for p in &mut points {
            p.time_verify();
        }
    }
    points.into_iter().map(|p| p.record(opts)).collect()
}

struct Point {
    depth: u32,
    relation: RelationConfig,
    crs: Arc<Crs>,
    setup_ms: f64,
    x: Statement,
    w: Witness,
    proof: Proof,
    rng: ChaCha20Rng,
    prove_times: Vec<f64>,
    verify_times: Vec<f64>,
}

impl Point {
    fn new(depth: u32, opts: &ScalingOptions) -> Self {
        let relation = relation(depth);
        let seed = opts.seed.wrapping_add(depth as u64);
        let start = Instant::now();
        let crs = Arc::new(setup(opts.backend, &relation, SetupMode::Test { seed }).expect("setup"));
        let setup_ms = ms(start);
        let stack = Stack::with_crs(crs.clone(), Arc::new(MockSource::new(seed)), seed);
        let notes: Vec<_> = (0..opts.users.max(1)).map(|_| stack.registered_note()).collect();
        let (x, w) = instance_for(&notes[0], &stack.auth.fetch_tree()).expect("instance");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        // Untimed warm-up, which also fills the key caches.
        let proof = prove(&crs.proving_key, &x, &w, &mut rng).expect("prove");
        assert!(verify(&crs.verification_key, &x, &proof).is_accept());
        Point {
            depth,
            relation,
            crs,
            setup_ms,
            x,
            w,
            proof,
            rng,
            prove_times: Vec::new(),
            verify_times: Vec::new(),
        }
    }

    fn time_prove(&mut self) {
        let start = Instant::now();
        self.proof = prove(&self.crs.proving_key, &self.x, &self.w, &mut self.rng).expect("prove");
        self.prove_times.push(ms(start));
    }

    fn time_verify(&mut self) {
        let start = Instant::now();
        let ok = verify(&self.crs.verification_key, &self.x, &self.proof).is_accept();
        self.verify_times.push(ms(start));
        assert!(ok);
    }

    fn record(mut self, opts: &ScalingOptions) -> BenchRecord {
        BenchRecord {
            scenario: "prove-scaling".into(),
            seed: opts.seed,
            backend: format!("{:?}", opts.backend).to_lowercase(),
            hash_profile: self.relation.hash_profile.name().into(),
            depth: self.depth,
            reps: opts.prove_reps,
            constraints: constraint_count(&self.relation).ok(),
            proof_bytes: Some(self.proof.to_bytes().len()),
            setup_ms: Some(self.setup_ms),
            prove_ms: (!self.prove_times.is_empty()).then(|| median(&mut self.prove_times)),
            verify_ms: (!self.verify_times.is_empty()).then(|| median(&mut self.verify_times)),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalingSummary {
    pub prove_fit: LinearFit,
    pub constraint_fit: LinearFit,
    /// Slowest over fastest median verification time.
    pub verify_ratio: f64,
    pub proof_size_constant: bool,
    pub prove_monotone: bool,
}

pub fn summarize(records: &[BenchRecord]) -> ScalingSummary {
    let xs: Vec<f64> = records.iter().map(|r| r.depth as f64).collect();
    let prove: Vec<f64> = records.iter().map(|r| r.prove_ms.unwrap_or(f64::NAN)).collect();
    let cons: Vec<f64> = records.iter().map(|r| r.constraints.unwrap_or(0) as f64).collect();
    let verify: Vec<f64> = records.iter().filter_map(|r| r.verify_ms).collect();
    let max = verify.iter().cloned().fold(f64::MIN, f64::max);
    let min = verify.iter().cloned().fold(f64::MAX, f64::min);
    let sizes: Vec<_> = records.iter().map(|r| r.proof_bytes).collect();
    ScalingSummary {
        prove_fit: linear_fit(&xs, &prove),
        constraint_fit: linear_fit(&xs, &cons),
        verify_ratio: max / min,
        proof_size_constant: sizes.windows(2).all(|w| w[0] == w[1]),
        prove_monotone: prove.windows(2).all(|w| w[0] < w[1]),
    }
}
