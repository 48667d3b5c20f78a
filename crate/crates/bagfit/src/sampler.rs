//! Deterministic, counter-based random sampling.
//!
//! All randomness in this crate flows through two primitives:
//!
//! * [`hash64`] — a keyed mixing chain used to derive independent stream
//!   keys from a master seed plus structural coordinates (replication
//!   number, subsample number, retry attempt). Derivation by hashing, rather
//!   than by drawing from a shared stream, is what makes results independent
//!   of execution order: any worker can compute its own key without
//!   coordinating with the others.
//! * [`CounterRng`] — a counter-mode generator whose output function is the
//!   SplitMix64 finalizer. The value at counter `c` is a pure function of
//!   `(key, c)`, so a stream can be replayed or partitioned at will.
//!
//! Uniform indices are produced by widening multiplication with rejection,
//! which is exactly unbiased for every bound; uniform floats live strictly
//! inside `(0, 1)` so they can be pushed through inverse CDFs safely.

use crate::stats::std_normal_quantile;

/// Golden-ratio increment used by the SplitMix64 stream.
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective mixer with full avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit key from an ordered list of parts.
///
/// The chain applies the mixer between parts, so both the values and their
/// order matter. Typical uses: `hash64(&[master_seed, k])` for subsample
/// `k`'s stream, `hash64(&[master_seed, k, attempt])` for a retry draw.
pub fn hash64(parts: &[u64]) -> u64 {
    let mut h = GOLDEN;
    for &p in parts {
        h = mix64(h ^ p).wrapping_add(GOLDEN);
    }
    mix64(h)
}

/// Counter-mode pseudorandom generator.
///
/// Output `i` (1-based) is `mix64(key + i * GOLDEN)` — the SplitMix64
/// sequence seeded at `key`. The generator carries no hidden state beyond
/// the counter, so identical `(key, counter)` pairs always yield identical
/// values, regardless of thread or machine.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Start a stream at counter zero.
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Next raw 64-bit value.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform integer in `[0, bound)`, exactly unbiased for every bound.
    ///
    /// Uses widening multiplication with rejection: candidates whose
    /// low word falls below `2^64 mod bound` are discarded, leaving each
    /// residue class equally likely.
    pub fn next_index(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_index: bound must be positive");
        loop {
            let x = self.next_u64();
            let wide = (x as u128) * (bound as u128);
            let low = wide as u64;
            if low < bound {
                let threshold = bound.wrapping_neg() % bound;
                if low < threshold {
                    continue;
                }
            }
            return (wide >> 64) as u64;
        }
    }

    /// Uniform `f64` strictly inside `(0, 1)`.
    ///
    /// The top 53 bits are centered on half-integers, so 0 and 1 are
    /// unreachable — safe input for inverse CDFs.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via the inverse CDF.
    pub fn next_normal(&mut self) -> f64 {
        std_normal_quantile(self.next_f64()).expect("open-interval uniform")
    }

    /// Poisson draw by sequential inversion.
    ///
    /// Exact for the moderate means used in data generation; `lambda` must
    /// be finite, nonnegative, and small enough that `exp(-lambda)` does
    /// not underflow (enforced by assertion at `lambda <= 700`).
    pub fn next_poisson(&mut self, lambda: f64) -> u64 {
        assert!(
            lambda.is_finite() && (0.0..=700.0).contains(&lambda),
            "next_poisson: lambda out of supported range: {lambda}"
        );
        if lambda == 0.0 {
            return 0;
        }
        let u = self.next_f64();
        let mut cumulative = (-lambda).exp();
        let mut pmf = cumulative;
        let mut k = 0u64;
        while u > cumulative {
            k += 1;
            pmf *= lambda / k as f64;
            cumulative += pmf;
            if pmf == 0.0 {
                // Cumulative mass has saturated; u was in the far tail.
                break;
            }
        }
        k
    }
}

/// Row indices drawn for one subsample, tagged with its 1-based position.
#[derive(Debug, Clone)]
pub struct SubsampleIndex {
    /// 1-based subsample number within the ensemble.
    pub k: usize,
    /// Row indices into the store, drawn uniformly with replacement.
    pub indices: Vec<u64>,
}

/// Stream key for subsample `k` (1-based) under a master seed.
pub fn subsample_key(master_seed: u64, k: usize) -> u64 {
    hash64(&[master_seed, k as u64])
}

/// Stream key for retry `attempt` (1-based) of subsample `k`.
///
/// Distinct from [`subsample_key`] for every `(k, attempt)`, so retries use
/// fresh draws without disturbing any other subsample's stream.
pub fn retry_key(master_seed: u64, k: usize, attempt: usize) -> u64 {
    hash64(&[master_seed, k as u64, attempt as u64])
}

/// Draw `n` row indices uniformly with replacement from `[0, n_rows)`.
pub fn draw_indices(key: u64, n: usize, n_rows: u64) -> Vec<u64> {
    let mut rng = CounterRng::new(key);
    (0..n).map(|_| rng.next_index(n_rows)).collect()
}
