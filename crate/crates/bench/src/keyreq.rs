//! Where the time goes in a key request: upload, validation, key
//! generation, download.

use std::sync::Arc;
use std::time::Duration;

use anonkey_core::entropy::{EntropySource, ExternalSource, MockSource};
use anonkey_core::zkp::BackendKind;
use anonkey_tunnel::{KeyResponse, SessionResult};

use crate::record::{median, BenchRecord};
use crate::stack::Stack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyChoice {
    Mock,
    /// `/dev/urandom` behind a per-request setup delay.
    External { latency: Duration },
}

impl EntropyChoice {
    fn label(self) -> String {
        match self {
            EntropyChoice::Mock => "mock".into(),
            EntropyChoice::External { latency } => format!("external-{}ms", latency.as_millis()),
        }
    }

    fn source(self, seed: u64) -> Arc<dyn EntropySource> {
        match self {
            EntropyChoice::Mock => Arc::new(MockSource::new(seed)),
            EntropyChoice::External { latency } => Arc::new(ExternalSource::from_path("/dev/urandom", latency)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KeyRequestOptions {
    pub backend: BackendKind,
    pub depth: u32,
    /// Tunnel throttle in bytes per second; `None` for an unthrottled pipe.
    pub rate: Option<u64>,
    pub entropy: EntropyChoice,
    pub reps: usize,
    pub seed: u64,
}

impl Default for KeyRequestOptions {
    fn default() -> Self {
        Self {
            backend: BackendKind::Groth16,
            depth: 4,
            rate: Some(16_000),
            entropy: EntropyChoice::Mock,
            reps: 3,
            seed: 1,
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// One record per key size, phases as medians over `reps` fresh notes.
pub fn bench_key_request(sizes: &[u32], opts: &KeyRequestOptions) -> Vec<BenchRecord> {
    let stack = Stack::new(opts.backend, opts.depth, opts.entropy.source(opts.seed), opts.seed);
    // Untimed session so lazy key preparation does not land in the first size.
    let warm = stack.registered_note();
    stack.session(&stack.request(&warm, 16), None);

    sizes
        .iter()
        .map(|&t| {
            let mut phases: [Vec<f64>; 5] = Default::default();
            let mut shares = Vec::new();
            for _ in 0..opts.reps.max(1) {
                let note = stack.registered_note();
                let req = stack.request(&note, t);
                let (report, response) = stack.session(&req, opts.rate);
                assert!(matches!(report.result, SessionResult::Delivered { .. }), "{:?}", report.result);
                assert!(matches!(response, KeyResponse::Delivered(_)));
                let tm = report.timings;
                let total = ms(tm.total());
                for (v, d) in phases.iter_mut().zip([tm.upload, tm.validation, tm.generation, tm.download]) {
                    v.push(ms(d));
                }
                phases[4].push(total);
                shares.push(ms(tm.download) / total);
            }
            let [mut up, mut val, mut gen, mut down, mut total] = phases;
            BenchRecord {
                scenario: "key-request".into(),
                seed: opts.seed,
                backend: format!("{:?}", opts.backend).to_lowercase(),
                hash_profile: stack.relation.hash_profile.name().into(),
                depth: opts.depth,
                t: Some(t),
                entropy: Some(opts.entropy.label()),
                rate: opts.rate,
                reps: opts.reps.max(1),
                upload_ms: Some(median(&mut up)),
                validation_ms: Some(median(&mut val)),
                generation_ms: Some(median(&mut gen)),
                download_ms: Some(median(&mut down)),
                total_ms: Some(median(&mut total)),
                transfer_share: Some(median(&mut shares)),
                ..Default::default()
            }
        })
        .collect()
}
