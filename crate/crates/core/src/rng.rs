//! Splittable counter-based random number generator.
//!
//! Deterministic across platforms and runs: the stream is a pure function of
//! `(key, counter)` built from 64-bit integer mixing (SplitMix64 finalizer),
//! so the same seed always yields the same sequence regardless of
//! architecture, thread count, or how many child generators were split off.
//! Training code derives one child per `(purpose, step)` so a run resumed
//! from a checkpoint replays the exact randomness of an uninterrupted run.

const PHI: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator. Cloning forks the full state; [`Rng::split`]
/// derives an independent child stream without consuming parent draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    ctr: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { key: mix(seed ^ PHI), ctr: 0 }
    }

    /// Derives an independent child stream for `tag`. Children with distinct
    /// tags (and the parent) produce unrelated sequences.
    pub fn split(&self, tag: u64) -> Rng {
        Rng {
            key: mix(self.key ^ mix(tag.wrapping_mul(PHI) ^ 0xD1B5_4A32_D192_ED03)),
            ctr: 0,
        }
    }

    /// Child stream addressed by a path of tags, e.g. `(seed, [PURPOSE, step])`.
    pub fn for_path(seed: u64, path: &[u64]) -> Rng {
        path.iter().fold(Rng::new(seed), |r, &t| r.split(t))
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.ctr;
        self.ctr += 1;
        mix(self.key.wrapping_add(c.wrapping_mul(PHI)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` via 128-bit multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below requires n > 0");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box–Muller; consumes exactly two draws so the
    /// stream position stays a pure function of the call count.
    pub fn normal(&mut self) -> f64 {
        // Shift into (0, 1] so ln never sees zero.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Zero-mean normal with `std`, resampled until within `±2·std`.
    pub fn trunc_normal(&mut self, std: f64) -> f64 {
        loop {
            let v = self.normal() * std;
            if v.abs() <= 2.0 * std {
                return v;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
