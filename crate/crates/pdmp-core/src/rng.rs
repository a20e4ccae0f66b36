//! Deterministic, replayable randomness.
//!
//! Streams are addressed by a [`StreamKey`]: a 64-bit seed plus a path of
//! integer indices. The key is hashed into a ChaCha8 cipher seed, so distinct
//! paths yield statistically independent streams and the same key always
//! reproduces the identical stream, bit for bit, on every platform. Because
//! derivation is by hashing rather than fast-forwarding, a multilevel run can
//! address `(replication, level, sample)` substreams directly.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

const KEY_DOMAIN: &[u8] = b"pdmp-stream-v1";

/// Address of a deterministic random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: Vec<u64>,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child key with one more path component. Children of distinct indices
    /// are independent; deriving a child never consumes parent state.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        StreamKey { seed: self.seed, path }
    }

    /// The generator addressed by this key.
    pub fn stream(&self) -> RandomStream {
        let mut hasher = Sha256::new();
        hasher.update(KEY_DOMAIN);
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for p in &self.path {
            hasher.update(p.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RandomStream { rng: ChaCha8Rng::from_seed(seed) }
    }
}

/// Stream derivation as a free function.
pub fn derive_stream(key: &StreamKey) -> RandomStream {
    key.stream()
}

/// A deterministic uniform generator; output is a pure function of the key it
/// was derived from. Value-like: cheap to clone, sendable across threads.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.uniform();
        }
    }
}

/// Shared randomness for the thinning construction: a homogeneous Poisson
/// realization of proposal times on (0, T], one acceptance uniform per
/// proposal and one mark uniform per potential jump.
///
/// Coupled paths are built by replaying the same trace through different
/// characteristics. Accept and mark uniforms come from separate substreams of
/// the sampling key, so extending one sequence never perturbs the other. The
/// number of accepted jumps can never exceed the number of proposals, so one
/// mark per proposal is the most any replay can consume.
#[derive(Debug, Clone)]
pub struct ThinningTrace {
    pub horizon: f64,
    pub poisson_times: Vec<f64>,
    pub uniforms_accept: Vec<f64>,
    pub uniforms_mark: Vec<f64>,
}

impl ThinningTrace {
    pub fn len(&self) -> usize {
        self.poisson_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poisson_times.is_empty()
    }
}

/// Sample a thinning trace with dominating rate `rate_bound` on (0, `horizon`].
///
/// Proposal times accumulate inverse-CDF exponential gaps, `-ln(1-u)/rate`,
/// which keeps the trace a monotone transform of the underlying stream and
/// therefore replayable. A zero horizon yields an empty trace.
pub fn sample_trace(key: &StreamKey, rate_bound: f64, horizon: f64) -> Result<ThinningTrace> {
    if !(rate_bound > 0.0) || !rate_bound.is_finite() {
        return Err(invalid(format!("rate bound must be positive and finite, got {rate_bound}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(invalid(format!("horizon must be non-negative and finite, got {horizon}")));
    }

    let mut times_stream = key.child(0).stream();
    let mut accept_stream = key.child(1).stream();
    let mut mark_stream = key.child(2).stream();

    let mut poisson_times = Vec::with_capacity((rate_bound * horizon * 1.2) as usize + 4);
    let mut t = 0.0_f64;
    loop {
        let u = times_stream.uniform();
        // -ln(1 - u); u = 0 would give a zero gap and a tied proposal time.
        let gap = -(-u).ln_1p() / rate_bound;
        if gap == 0.0 {
            continue;
        }
        t += gap;
        if t > horizon {
            break;
        }
        poisson_times.push(t);
    }

    let mut uniforms_accept = vec![0.0; poisson_times.len()];
    accept_stream.fill_uniform(&mut uniforms_accept);
    let mut uniforms_mark = vec![0.0; poisson_times.len()];
    mark_stream.fill_uniform(&mut uniforms_mark);

    Ok(ThinningTrace { horizon, poisson_times, uniforms_accept, uniforms_mark })
}
