//! Seedable, splittable random-number streams.
//!
//! `RngStream` wraps a counter-based generator (ChaCha12), so a stream is a
//! pure function of `(seed, stream_id)`: the same pair yields the same draw
//! sequence on every host and under any thread count. Parallel work derives
//! disjoint child streams instead of sharing one generator.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// One independent draw stream. Single-owner: clone or `child` for parallel use.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        // Expand the 64-bit seed into a 256-bit key; the stream id selects
        // the ChaCha stream so all ids share one key schedule.
        let mut key = [0u8; 32];
        let mut state = splitmix64(seed);
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&state.to_le_bytes());
            state = splitmix64(state);
        }
        let mut inner = ChaCha12Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream at a deterministic id derived from this stream's id and
    /// `index`. Children of distinct (id, index) pairs are independent.
    pub fn child(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index));
        Self::new(self.seed, id)
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Exponential waiting time; `rate == 0` never fires.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate >= 0.0);
        if rate == 0.0 {
            return f64::INFINITY;
        }
        -(-self.uniform()).ln_1p() / rate
    }

    /// Uniform index in `0..n` by widening multiply (bias ≤ n/2⁶⁴).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal by Box-Muller; always consumes two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform().max(f64::MIN_POSITIVE);
        let v = self.uniform();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_reproduce() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100_000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn children_are_deterministic_and_distinct() {
        let root = RngStream::new(9, 3);
        let mut c1 = root.child(5);
        let mut c2 = root.child(5);
        assert_eq!(c1.stream_id(), c2.stream_id());
        assert_eq!(c1.next_u64(), c2.next_u64());
        let mut c3 = root.child(6);
        assert_ne!(c1.stream_id(), c3.stream_id());
        assert_ne!(c1.next_u64(), c3.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn bernoulli_edges() {
        let mut r = RngStream::new(2, 0);
        assert!((0..1000).all(|_| !r.bernoulli(0.0)));
        assert!((0..1000).all(|_| r.bernoulli(1.0)));
    }

    #[test]
    fn exponential_mean_close_to_inverse_rate() {
        let mut r = RngStream::new(3, 0);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| r.exponential(2.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(r.exponential(0.0).is_infinite());
    }

    #[test]
    fn index_covers_range() {
        let mut r = RngStream::new(4, 0);
        let mut seen = [false; 10];
        for _ in 0..1000 {
            let i = r.index(10);
            assert!(i < 10);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::new(5, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
        assert!(draws.iter().all(|d| d.is_finite()));
    }
}
